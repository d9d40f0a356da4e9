use nalgebra::{DMatrix, DVector};
use osband_id::catalog::{parse_key, Catalog, IdentificationFunction};
use osband_id::distributions::{BivariateDistribution, Distribution, ScalarDistribution};
use osband_id::osband::MatrixTransform;
use osband_id::zestimate::{root_invariance_check, z_estimate, z_estimate_with, Method, Sample, Strategy as Solver, DEFAULT_TOL};
use proptest::prelude::*;

/// Sandwich standard errors `sqrt(diag(J^-1 S J^-T) / n)`, with `J` from
/// central differences of the closed-form expectation and `S` the covariance
/// of `V(x*, Y)` over the sample.
fn sandwich_se(v: &dyn IdentificationFunction, law: &Distribution, truth: &[f64], sample: &Sample) -> Vec<f64> {
    let k = truth.len();
    let mut j = DMatrix::zeros(k, k);
    for c in 0..k {
        let step = 1e-5 * (1.0 + truth[c].abs());
        let mut up = truth.to_vec();
        let mut down = truth.to_vec();
        up[c] += step;
        down[c] -= step;
        let (a, b) = (v.expected(&up, law).unwrap(), v.expected(&down, law).unwrap());
        for r in 0..k {
            j[(r, c)] = (a[r] - b[r]) / (2.0 * step);
        }
    }
    let n = sample.len();
    let values: Vec<Vec<f64>> = (0..n).map(|i| v.evaluate(truth, sample.row(i)).unwrap()).collect();
    let mean: Vec<f64> = (0..k).map(|r| values.iter().map(|m| m[r]).sum::<f64>() / n as f64).collect();
    let mut s = DMatrix::zeros(k, k);
    for m in &values {
        let d = DVector::from_iterator(k, (0..k).map(|r| m[r] - mean[r]));
        s += &d * d.transpose();
    }
    s /= (n - 1) as f64;
    let ji = j.try_inverse().expect("invertible derivative");
    let cov = &ji * s * ji.transpose();
    (0..k).map(|i| (cov[(i, i)] / n as f64).sqrt()).collect()
}

#[test]
fn estimates_are_consistent_at_scale() {
    let n = 100_000;
    let scalar: Distribution = ScalarDistribution::normal(1.0, 4.0).unwrap().into();
    let pair: Distribution =
        BivariateDistribution::gaussian([0.0, 1.0], [[1.0, 0.5], [0.5, 2.0]]).unwrap().into();
    let keys = [
        "mean",
        "expectile:0.8",
        "quantile:0.25",
        "mean-var",
        "mean-var-prime",
        "mean-var-modified",
        "quantile-es:0.1",
        "quantile-es-prime:0.1",
        "var-covar:0.05,0.1",
    ];
    for (i, key) in keys.iter().enumerate() {
        let v = parse_key(key).unwrap();
        let law = if v.obs_dim() == 2 { &pair } else { &scalar };
        let sample = Sample::new(law.sample_flat(n, 1000 + i as u64), v.obs_dim()).unwrap();
        let truth = v.functional().unwrap().point(law).unwrap();
        let est = z_estimate(v.as_ref(), &sample, DEFAULT_TOL, 0).unwrap();
        let se = sandwich_se(v.as_ref(), law, &truth, &sample);
        for c in 0..truth.len() {
            let z = (est.estimate[c] - truth[c]) / se[c];
            assert!(z.abs() <= 4.0, "{key}[{c}]: {} vs {} ({z:.2} SE)", est.estimate[c], truth[c]);
        }
    }
}

#[test]
fn sequential_and_newton_agree_on_triangular_systems() {
    let y = ScalarDistribution::student_t(6.0, 0.5, 1.2).unwrap().sample(3000, 17);
    let s = Sample::scalar(y).unwrap();
    let keys = ["mean-var", "mean-var-prime", "quantile-es:0.05", "quantile-es:0.2", "quantile-es-prime:0.1"];
    for key in keys {
        let v = parse_key(key).unwrap();
        let a = z_estimate_with(v.as_ref(), &s, DEFAULT_TOL, 0, Solver::Auto).unwrap();
        let b = z_estimate_with(v.as_ref(), &s, DEFAULT_TOL, 0, Solver::Newton).unwrap();
        assert_eq!(a.method, Method::Sequential, "{key}");
        assert_eq!(b.method, Method::Newton, "{key}");
        for (p, q) in a.estimate.iter().zip(&b.estimate) {
            assert!((p - q).abs() <= 1e-8, "{key}: {:?} vs {:?}", a.estimate, b.estimate);
        }
    }
    let pairs = BivariateDistribution::standard_correlated(0.3).unwrap().sample(3000, 18);
    let s2 = Sample::pairs(&pairs).unwrap();
    let c = Catalog::VarCovar { alpha: 0.1, beta: 0.2 };
    let a = z_estimate_with(&c, &s2, DEFAULT_TOL, 0, Solver::Auto).unwrap();
    let b = z_estimate_with(&c, &s2, DEFAULT_TOL, 0, Solver::Newton).unwrap();
    for (p, q) in a.estimate.iter().zip(&b.estimate) {
        assert!((p - q).abs() <= 1e-8, "var-covar: {:?} vs {:?}", a.estimate, b.estimate);
    }
}

fn small_sample() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec((-20i32..20).prop_map(|v| v as f64 * 0.5), 5..40),
        prop::collection::vec(-10.0..10.0f64, 5..40),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn root_set_is_invariant(data in small_sample(), alpha in prop::sample::select(vec![0.1, 0.25, 0.4, 0.5]), c in 0.1..5.0f64) {
        let s = Sample::scalar(data).unwrap();
        let cases = [
            (Catalog::MeanVar.shared(), MatrixTransform::MeanVarExample),
            (Catalog::MeanVar.shared(), MatrixTransform::MeanVarExample.then(MatrixTransform::scalar(2, c))),
            (Catalog::QuantileEs { alpha }.shared(), MatrixTransform::QuantileEsExample { alpha }),
            (Catalog::QuantileEs { alpha }.shared(), MatrixTransform::scalar(2, c).then(MatrixTransform::QuantileEsExample { alpha })),
        ];
        for (i, (v, h)) in cases.into_iter().enumerate() {
            let key = h.key();
            let r = root_invariance_check(v, h, &s, DEFAULT_TOL).unwrap();
            prop_assert!(r.identical, "{key}: {:?} vs {:?}", r.original, r.transformed);
            // the mean-variance system always has an exact root
            prop_assert!(i >= 2 || !r.vacuous);
        }
    }

    #[test]
    fn estimates_stay_in_the_action_domain(data in small_sample(), alpha in 0.05..0.6f64) {
        let s = Sample::scalar(data).unwrap();
        for v in [Catalog::MeanVar, Catalog::MeanVarPrime, Catalog::QuantileEs { alpha }, Catalog::QuantileEsPrime { alpha }] {
            let e = z_estimate(&v, &s, DEFAULT_TOL, 0).unwrap();
            prop_assert!(e.in_domain && v.domain().contains(&e.estimate), "{v:?}: {e:?}");
            match v {
                Catalog::MeanVar | Catalog::MeanVarPrime => prop_assert!(e.estimate[1] >= 0.0),
                _ => prop_assert!(e.estimate[1] <= e.estimate[0]),
            }
        }
    }
}
