use nalgebra::DMatrix;
use osband_id::calibration::{size_power_study, wald_from_moments, Scenario, ScenarioState};
use osband_id::catalog::Catalog;
use osband_id::distributions::ScalarDistribution;
use osband_id::osband::MatrixTransform;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn wald_statistic_ignores_constant_transforms(
        data in prop::collection::vec(-3.0..3.0f64, 60),
        shift in (-0.5..0.5f64, -0.5..0.5f64),
        a in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64),
    ) {
        let (a11, a12, a21, a22) = a;
        prop_assume!((a11 * a22 - a12 * a21).abs() > 0.1);
        let m = DMatrix::from_fn(2, 30, |i, t| data[2 * t + i] + if i == 0 { shift.0 } else { shift.1 });
        let am = DMatrix::from_row_slice(2, 2, &[a11, a12, a21, a22]) * &m;
        let r1 = wald_from_moments(&m, 0.05).unwrap();
        let r2 = wald_from_moments(&am, 0.05).unwrap();
        let scale = 1.0 + r1.statistic.abs();
        prop_assert!((r1.statistic - r2.statistic).abs() <= 1e-9 * scale, "{} vs {}", r1.statistic, r2.statistic);
    }
}

#[test]
fn power_depends_on_the_transform() {
    let n = |m: f64| ScalarDistribution::normal(m, 1.0).unwrap().into();
    let scenario = Scenario {
        states: vec![
            ScenarioState { truth: n(0.0), forecast_law: Some(n(0.3)), forecast: None },
            ScenarioState { truth: n(5.0), forecast_law: Some(n(5.0)), forecast: None },
        ],
    };
    let h = [MatrixTransform::Identity(2), MatrixTransform::QuantileEsExample { alpha: 0.1 }];
    let table =
        size_power_study(Catalog::QuantileEs { alpha: 0.1 }.shared(), &h, &scenario, 500, 1000, 0.05, 7).unwrap();
    let (a, b) = (&table.rows[0], &table.rows[1]);
    let se = (a.se * a.se + b.se * b.se).sqrt();
    assert!((a.rejection_rate - b.rejection_rate).abs() > 3.0 * se, "{}", table.to_csv());
}
