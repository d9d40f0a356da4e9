use osband_id::catalog::Functional;
use osband_id::distributions::ScalarDistribution;
use osband_id::verifier::{convex_level_sets_check, es_witness_search};
use proptest::prelude::*;

fn base_law() -> impl Strategy<Value = ScalarDistribution> {
    let normal = (-2.0..2.0f64, 0.2..3.0f64).prop_map(|(m, v)| ScalarDistribution::normal(m, v).unwrap());
    let expo = (0.5..2.0f64).prop_map(|r| ScalarDistribution::exponential(r).unwrap());
    let mixture = (-2.0..2.0f64, 0.2..0.8f64).prop_map(|(m, w)| {
        ScalarDistribution::normal(m, 1.0).unwrap().mix(&ScalarDistribution::exponential(1.0).unwrap(), w).unwrap()
    });
    prop_oneof![normal, expo, mixture]
}

fn identifiable() -> impl Strategy<Value = Functional> {
    prop_oneof![
        Just(Functional::Mean),
        (0.1..0.9f64).prop_map(|tau| Functional::Expectile { tau }),
        (0.05..0.95f64).prop_map(|alpha| Functional::Quantile { alpha }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// `G` is a student-t placed so that `T(G) = T(F)`; every mixture keeps the value.
    #[test]
    fn identifiable_functionals_have_convex_level_sets(
        functional in identifiable(), f in base_law(), dof in 3.0..10.0f64, scale in 0.3..3.0f64,
    ) {
        let t_f = functional.point(&f.clone().into()).unwrap()[0];
        let centred = ScalarDistribution::student_t(dof, 0.0, scale).unwrap();
        let t_0 = functional.point(&centred.into()).unwrap()[0];
        let g = ScalarDistribution::student_t(dof, t_f - t_0, scale).unwrap();
        let lambdas: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        let r = convex_level_sets_check(&functional, &f, &g, &lambdas).unwrap();
        prop_assert!(!r.vacuous, "{r:?}");
        prop_assert!(!r.violated, "{r:?}");
    }
}

#[test]
fn variance_and_es_violate() {
    let f = ScalarDistribution::normal(0.0, 1.0).unwrap();
    let g = ScalarDistribution::normal(2.0, 1.0).unwrap();
    let r = convex_level_sets_check(&Functional::Variance, &f, &g, &[0.5]).unwrap();
    assert!(r.violated);
    assert!((r.checks[0].mixture_value[0].lo - 2.0).abs() <= 1e-10);
    for alpha in [0.025, 0.05, 0.1] {
        let s = es_witness_search(alpha).unwrap();
        assert!(s.found, "{alpha}");
        let es_g = s.es_g.unwrap();
        assert!((es_g - s.es_f).abs() <= 1e-9 * (1.0 + s.es_f.abs()));
        assert!((s.es_mixture.unwrap() - s.es_f).abs() > 1e-6);
    }
}
