//! Independent routes to `V̄(x, F)`: quadrature on the quantile scale and
//! plain Monte Carlo. Both ignore the closed forms in `expected`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::IdentificationFunction;
use crate::distributions::{Distribution, ScalarDistribution};
use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// `∫_0^1 V(x, q(u)) du` per component, split wherever an indicator in `V`
/// or an atom/flat stretch of `F` makes the integrand jump.
pub fn expected_by_quadrature(
    v: &dyn IdentificationFunction,
    x: &[f64],
    law: &ScalarDistribution,
    tol: f64,
) -> Result<Vec<f64>> {
    if v.obs_dim() != 1 {
        return Err(Error::ObservationKind { expected: "univariate" });
    }
    let mut splits = law.level_breakpoints(1.0);
    for b in v.breakpoints(x) {
        splits.push(law.cdf_left(b));
        splits.push(law.cdf(b));
    }
    splits.retain(|u| *u > 0.0 && *u < 1.0);

    let k = v.dim();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let integrand = |u: f64| {
            // nodes of the narrowest end segments can round onto 0 or 1
            let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            let mut buf = vec![0.0; k];
            match law.quantile(u).and_then(|y| v.evaluate_into(x, &[y], &mut buf)) {
                Ok(()) => buf[i],
                Err(_) => f64::NAN,
            }
        };
        out.push(integrate(integrand, 0.0, 1.0, &splits, tol, 0.0)?.value);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub draws: usize,
}

impl MonteCarloEstimate {
    /// Whether `value` lies within `z` standard errors in every component,
    /// with `floor` guarding components that are constant in `y`.
    pub fn covers(&self, value: &[f64], z: f64, floor: f64) -> bool {
        self.mean
            .iter()
            .zip(&self.std_error)
            .zip(value)
            .all(|((m, se), v)| (m - v).abs() <= z * se + floor)
    }
}

/// Sample average of `V(x, Y_i)` over `n` seeded draws with its standard error.
pub fn expected_monte_carlo(
    v: &dyn IdentificationFunction,
    x: &[f64],
    law: &Distribution,
    n: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if law.obs_dim() != v.obs_dim() {
        return Err(Error::DimensionMismatch { expected: v.obs_dim(), got: law.obs_dim() });
    }
    if n < 2 {
        return Err(Error::InsufficientData { n, k: 1 });
    }
    let k = v.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    let mut buf = vec![0.0; k];
    for t in 0..n {
        match law {
            Distribution::Scalar(d) => {
                let y = d.sample_with(&mut rng);
                v.evaluate_into(x, &[y], &mut buf)?;
            }
            Distribution::Bivariate(d) => {
                let y = d.sample_with(&mut rng);
                v.evaluate_into(x, &y, &mut buf)?;
            }
        }
        let count = (t + 1) as f64;
        for i in 0..k {
            let delta = buf[i] - mean[i];
            mean[i] += delta / count;
            m2[i] += delta * (buf[i] - mean[i]);
        }
    }
    let nf = n as f64;
    let std_error = m2.iter().map(|s| (s / (nf - 1.0) / nf).sqrt()).collect();
    Ok(MonteCarloEstimate { mean, std_error, draws: n })
}
