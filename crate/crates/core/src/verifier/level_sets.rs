use serde::{Deserialize, Serialize};

use crate::catalog::Functional;
use crate::distributions::{normal, Distribution, Interval, ScalarDistribution};
use crate::error::{Error, Result};

/// Relative slack for deciding that two computed functional values coincide.
const VALUE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCheck {
    pub lambda: f64,
    pub mixture_value: Vec<Interval>,
    pub contained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub functional: String,
    pub value_f: Vec<Interval>,
    pub value_g: Vec<Interval>,
    /// `T(F) ∩ T(G)`, absent when empty.
    pub common: Option<Vec<Interval>>,
    pub vacuous: bool,
    pub checks: Vec<LambdaCheck>,
    pub violated: bool,
}

fn slack(t: &Interval) -> f64 {
    VALUE_TOL * (1.0 + t.magnitude())
}

/// Checks `T(F) ∩ T(G) ⊆ T((1 - lambda) F + lambda G)` for each lambda.
pub fn convex_level_sets_check(
    functional: &Functional,
    f: &ScalarDistribution,
    g: &ScalarDistribution,
    lambdas: &[f64],
) -> Result<LevelSetReport> {
    if matches!(functional, Functional::VarCovar { .. }) {
        return Err(Error::ObservationKind { expected: "univariate" });
    }
    let value_f = functional.value(&Distribution::Scalar(f.clone()))?;
    let value_g = functional.value(&Distribution::Scalar(g.clone()))?;
    let common: Option<Vec<Interval>> =
        value_f.iter().zip(&value_g).map(|(a, b)| a.inflate(slack(a)).intersect(&b.inflate(slack(b)))).collect();
    let mut checks = Vec::with_capacity(lambdas.len());
    if let Some(common) = &common {
        for &lambda in lambdas {
            let mix = f.mix(g, lambda)?;
            let mixture_value = functional.value(&Distribution::Scalar(mix))?;
            let contained = common
                .iter()
                .zip(&mixture_value)
                .all(|(c, m)| m.contains(c.lo, slack(m) + slack(c)) && m.contains(c.hi, slack(m) + slack(c)));
            checks.push(LambdaCheck { lambda, mixture_value, contained });
        }
    }
    Ok(LevelSetReport {
        functional: functional.name(),
        value_f,
        value_g,
        vacuous: common.is_none(),
        violated: checks.iter().any(|c| !c.contained),
        common,
        checks,
    })
}

/// Outcome of scanning gaussian pairs with equal expected shortfall for a
/// mixture whose expected shortfall differs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsWitnessSearch {
    pub alpha: f64,
    pub f: Distribution,
    pub g: Option<Distribution>,
    pub lambda: Option<f64>,
    pub es_f: f64,
    pub es_g: Option<f64>,
    pub es_mixture: Option<f64>,
    pub grid: [usize; 2],
    pub evaluated: usize,
    pub found: bool,
}

/// Scans `G = N(mu_G, s^2)` over 20 scales and 20 mixing weights, with `mu_G`
/// chosen so that `ES(G) = ES(F)` for `F = N(0, 1)`. Records the first pair and
/// weight where the mixture's expected shortfall moves away from the common value.
pub fn es_witness_search(alpha: f64) -> Result<EsWitnessSearch> {
    const N: usize = 20;
    let f = ScalarDistribution::standard_normal();
    let es_f = f.es_lower(alpha)?;
    let z = normal::quantile(alpha);
    let tail = normal::pdf(z) / alpha;
    let functional = Functional::ExpectedShortfall { alpha };
    let lambdas: Vec<f64> = (1..=N).map(|i| i as f64 / (N + 1) as f64).collect();
    let mut out = EsWitnessSearch {
        alpha,
        f: f.clone().into(),
        g: None,
        lambda: None,
        es_f,
        es_g: None,
        es_mixture: None,
        grid: [N, N],
        evaluated: 0,
        found: false,
    };
    for i in 0..N {
        // scales 0.2 .. 3.05; 1 is not on the grid, so G never equals F
        let s = 0.2 + 0.15 * i as f64;
        let g = ScalarDistribution::normal(es_f + s * tail, s * s)?;
        let report = convex_level_sets_check(&functional, &f, &g, &lambdas)?;
        out.evaluated += report.checks.len();
        if let Some(c) = report.checks.iter().find(|c| !c.contained) {
            out.es_g = Some(report.value_g[0].lo);
            out.g = Some(g.into());
            out.lambda = Some(c.lambda);
            out.es_mixture = Some(c.mixture_value[0].lo);
            out.found = true;
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(m: f64, v: f64) -> ScalarDistribution {
        ScalarDistribution::normal(m, v).unwrap()
    }

    #[test]
    fn variance_witness() {
        let r = convex_level_sets_check(&Functional::Variance, &n(0.0, 1.0), &n(2.0, 1.0), &[0.5]).unwrap();
        assert!(r.violated);
        assert!((r.checks[0].mixture_value[0].lo - 2.0).abs() < 1e-10);
        assert!((r.common.unwrap()[0].lo - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mean_passes_and_disjoint_is_vacuous() {
        let lambdas = [0.1, 0.5, 0.9];
        let r = convex_level_sets_check(&Functional::Mean, &n(1.0, 1.0), &n(1.0, 9.0), &lambdas).unwrap();
        assert!(!r.violated && !r.vacuous);
        let r = convex_level_sets_check(&Functional::Mean, &n(0.0, 1.0), &n(1.0, 1.0), &lambdas).unwrap();
        assert!(r.vacuous && !r.violated && r.checks.is_empty());
    }

    #[test]
    fn es_witness_is_found() {
        let w = es_witness_search(0.05).unwrap();
        assert!(w.found);
        assert!((w.es_g.unwrap() - w.es_f).abs() < 1e-9);
        assert!((w.es_mixture.unwrap() - w.es_f).abs() > 1e-6);
    }
}
