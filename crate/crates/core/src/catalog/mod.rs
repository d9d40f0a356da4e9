//! Identification functions `V(x, y)` and their expectations `V̄(x, F)`.

mod domain;
mod functional;
mod routes;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use domain::ActionDomain;
pub use functional::Functional;
pub use routes::{expected_by_quadrature, expected_monte_carlo, MonteCarloEstimate};

use crate::distributions::{check_level, Distribution, Quadrant, Side};
use crate::error::{Error, Result};

/// A map `V: A x O -> R^k` together with its expectation under a law.
pub trait IdentificationFunction: fmt::Debug + Send + Sync {
    /// Catalog-style key, e.g. `quantile-es:0.05`.
    fn key(&self) -> String;

    /// Number of moment components `k`.
    fn dim(&self) -> usize;

    /// Length of the action vector; equals `dim` except for reduced functions.
    fn action_dim(&self) -> usize {
        self.dim()
    }

    fn obs_dim(&self) -> usize;

    fn domain(&self) -> ActionDomain;

    fn evaluate_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()>;

    /// Same as [`evaluate_into`](Self::evaluate_into) with every indicator
    /// `1{a <= b}` replaced by a linear ramp of half-width `bandwidth`.
    fn evaluate_smoothed_into(&self, x: &[f64], y: &[f64], _bandwidth: f64, out: &mut [f64]) -> Result<()> {
        self.evaluate_into(x, y, out)
    }

    /// `∫ V(x, y) dF(y)` from closed-form distribution primitives.
    fn expected(&self, x: &[f64], law: &Distribution) -> Result<Vec<f64>>;

    /// Observation thresholds where `V(x, ·)` jumps (univariate observations).
    fn breakpoints(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Whether component `i` depends on `x_1..=x_i` only.
    fn is_triangular(&self) -> bool {
        false
    }

    /// The functional this function identifies, when known.
    fn functional(&self) -> Option<Functional> {
        None
    }

    /// `Some` for `h(x) V(x, y)` built by [`crate::osband::apply_transform`].
    fn as_transformed(&self) -> Option<&crate::osband::Transformed> {
        None
    }

    fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate_into(x, y, &mut out)?;
        Ok(out)
    }
}

pub type SharedIdFn = Arc<dyn IdentificationFunction>;

/// `1{a <= b}`, or its ramp of half-width `h` when `h > 0`.
#[inline]
pub(crate) fn step_le(a: f64, b: f64, h: f64) -> f64 {
    if h > 0.0 {
        ((b - a) / (2.0 * h) + 0.5).clamp(0.0, 1.0)
    } else if a <= b {
        1.0
    } else {
        0.0
    }
}

/// The identification functions shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Catalog {
    /// `x - y`
    Mean,
    /// `2|1{y <= x} - tau|(x - y)`
    Expectile { tau: f64 },
    /// `1{y <= x} - alpha`
    Quantile { alpha: f64 },
    /// `(x1 - y, x2 - (y - x1)^2)`
    MeanVar,
    /// `(x1 - y, x2 + x1^2 - y^2)`
    MeanVarPrime,
    /// `(1{y <= x1} - alpha, x2 - y 1{y <= x1} / alpha)`
    QuantileEs { alpha: f64 },
    /// [`Catalog::QuantileEs`] with `x1/alpha (1{y <= x1} - alpha)` added to the second component.
    QuantileEsPrime { alpha: f64 },
    /// `(1{x1 <= y1} - beta, 1{x1 > y1}(1{x2 <= y2} - alpha))`
    VarCovar { alpha: f64, beta: f64 },
    /// `1{x1 > y1} 1{x2 > y2} - (1 - alpha)(1 - beta)`; identifies but not strictly.
    Covar1d { alpha: f64, beta: f64 },
    /// `MeanVarPrime` where `x2 >= 0` and the constant `(1, 1)` where `x2 < 0`,
    /// on the action domain `R^2`.
    MeanVarModified,
}

impl Catalog {
    pub const KEYS: [&'static str; 10] = [
        "mean",
        "expectile:tau",
        "quantile:alpha",
        "mean-var",
        "mean-var-prime",
        "quantile-es:alpha",
        "quantile-es-prime:alpha",
        "var-covar:alpha,beta",
        "covar-1d:alpha,beta",
        "mean-var-modified",
    ];

    /// Parses keys like `mean`, `expectile:0.9`, `var-covar:0.05,0.1`.
    pub fn parse(key: &str) -> Result<Self> {
        let (name, args) = match key.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (key.trim(), None),
        };
        let levels = |want: usize| -> Result<Vec<f64>> {
            let raw = args.ok_or_else(|| Error::UnknownKey(format!("{key} (missing parameters)")))?;
            let vals = raw
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::UnknownKey(key.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != want {
                return Err(Error::UnknownKey(format!("{key} (expected {want} parameters)")));
            }
            for v in &vals {
                check_level(*v)?;
            }
            Ok(vals)
        };
        let no_args = |c: Catalog| -> Result<Catalog> {
            if args.is_some() {
                Err(Error::UnknownKey(key.to_string()))
            } else {
                Ok(c)
            }
        };
        match name {
            "mean" => no_args(Catalog::Mean),
            "expectile" => Ok(Catalog::Expectile { tau: levels(1)?[0] }),
            "quantile" => Ok(Catalog::Quantile { alpha: levels(1)?[0] }),
            "mean-var" => no_args(Catalog::MeanVar),
            "mean-var-prime" => no_args(Catalog::MeanVarPrime),
            "quantile-es" => Ok(Catalog::QuantileEs { alpha: levels(1)?[0] }),
            "quantile-es-prime" => Ok(Catalog::QuantileEsPrime { alpha: levels(1)?[0] }),
            "var-covar" => {
                let v = levels(2)?;
                Ok(Catalog::VarCovar { alpha: v[0], beta: v[1] })
            }
            "covar-1d" => {
                let v = levels(2)?;
                Ok(Catalog::Covar1d { alpha: v[0], beta: v[1] })
            }
            "mean-var-modified" => no_args(Catalog::MeanVarModified),
            _ => Err(Error::UnknownKey(key.to_string())),
        }
    }

    pub fn shared(self) -> SharedIdFn {
        Arc::new(self)
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.action_dim() {
            return Err(Error::DimensionMismatch { expected: self.action_dim(), got: x.len() });
        }
        Ok(())
    }

    fn eval(&self, x: &[f64], y: &[f64], h: f64, out: &mut [f64]) -> Result<()> {
        self.check_x(x)?;
        if y.len() != self.obs_dim() {
            return Err(Error::DimensionMismatch { expected: self.obs_dim(), got: y.len() });
        }
        if out.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: out.len() });
        }
        match *self {
            Catalog::Mean => out[0] = x[0] - y[0],
            Catalog::Expectile { tau } => {
                out[0] = 2.0 * (step_le(y[0], x[0], h) - tau).abs() * (x[0] - y[0]);
            }
            Catalog::Quantile { alpha } => out[0] = step_le(y[0], x[0], h) - alpha,
            Catalog::MeanVar => {
                out[0] = x[0] - y[0];
                out[1] = x[1] - (y[0] - x[0]).powi(2);
            }
            Catalog::MeanVarPrime => {
                out[0] = x[0] - y[0];
                out[1] = x[1] + x[0] * x[0] - y[0] * y[0];
            }
            Catalog::QuantileEs { alpha } => {
                let ind = step_le(y[0], x[0], h);
                out[0] = ind - alpha;
                out[1] = x[1] - y[0] / alpha * ind;
            }
            Catalog::QuantileEsPrime { alpha } => {
                let ind = step_le(y[0], x[0], h);
                out[0] = ind - alpha;
                out[1] = x[1] - y[0] / alpha * ind + x[0] / alpha * (ind - alpha);
            }
            Catalog::VarCovar { alpha, beta } => {
                out[0] = step_le(x[0], y[0], h) - beta;
                out[1] = (1.0 - step_le(x[0], y[0], h)) * (step_le(x[1], y[1], h) - alpha);
            }
            Catalog::Covar1d { alpha, beta } => {
                let above1 = 1.0 - step_le(x[0], y[0], h);
                let above2 = 1.0 - step_le(x[1], y[1], h);
                out[0] = above1 * above2 - (1.0 - alpha) * (1.0 - beta);
            }
            Catalog::MeanVarModified => {
                if x[1] >= 0.0 {
                    Catalog::MeanVarPrime.eval(x, y, h, out)?;
                } else {
                    out[0] = 1.0;
                    out[1] = 1.0;
                }
            }
        }
        Ok(())
    }
}

impl IdentificationFunction for Catalog {
    fn key(&self) -> String {
        match self {
            Catalog::Mean => "mean".into(),
            Catalog::Expectile { tau } => format!("expectile:{tau}"),
            Catalog::Quantile { alpha } => format!("quantile:{alpha}"),
            Catalog::MeanVar => "mean-var".into(),
            Catalog::MeanVarPrime => "mean-var-prime".into(),
            Catalog::QuantileEs { alpha } => format!("quantile-es:{alpha}"),
            Catalog::QuantileEsPrime { alpha } => format!("quantile-es-prime:{alpha}"),
            Catalog::VarCovar { alpha, beta } => format!("var-covar:{alpha},{beta}"),
            Catalog::Covar1d { alpha, beta } => format!("covar-1d:{alpha},{beta}"),
            Catalog::MeanVarModified => "mean-var-modified".into(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Catalog::Mean | Catalog::Expectile { .. } | Catalog::Quantile { .. } | Catalog::Covar1d { .. } => 1,
            _ => 2,
        }
    }

    fn action_dim(&self) -> usize {
        match self {
            Catalog::Covar1d { .. } => 2,
            _ => self.dim(),
        }
    }

    fn obs_dim(&self) -> usize {
        match self {
            Catalog::VarCovar { .. } | Catalog::Covar1d { .. } => 2,
            _ => 1,
        }
    }

    fn domain(&self) -> ActionDomain {
        match self {
            Catalog::Mean | Catalog::Expectile { .. } | Catalog::Quantile { .. } => ActionDomain::Euclidean(1),
            Catalog::MeanVar | Catalog::MeanVarPrime => ActionDomain::MeanVariance,
            Catalog::QuantileEs { .. } | Catalog::QuantileEsPrime { .. } => ActionDomain::HalfSpace,
            Catalog::VarCovar { .. } | Catalog::Covar1d { .. } | Catalog::MeanVarModified => {
                ActionDomain::Euclidean(2)
            }
        }
    }

    fn evaluate_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval(x, y, 0.0, out)
    }

    fn evaluate_smoothed_into(&self, x: &[f64], y: &[f64], bandwidth: f64, out: &mut [f64]) -> Result<()> {
        self.eval(x, y, bandwidth, out)
    }

    fn expected(&self, x: &[f64], law: &Distribution) -> Result<Vec<f64>> {
        self.check_x(x)?;
        if let Catalog::VarCovar { alpha, beta } | Catalog::Covar1d { alpha, beta } = *self {
            let f = law.as_bivariate()?;
            let q = |a, b| f.tail_prob(x[0], x[1], Quadrant::new(a, b));
            let below1 = q(Side::Below, Side::Below) + q(Side::Below, Side::AtOrAbove);
            return Ok(match self {
                Catalog::VarCovar { .. } => vec![1.0 - below1 - beta, q(Side::Below, Side::AtOrAbove) - alpha * below1],
                _ => vec![q(Side::Below, Side::Below) - (1.0 - alpha) * (1.0 - beta)],
            });
        }
        let f = law.as_scalar()?;
        Ok(match *self {
            Catalog::Mean => vec![x[0] - f.mean()?],
            Catalog::Expectile { tau } => vec![functional::expectile_moment(f, tau, x[0])?],
            Catalog::Quantile { alpha } => vec![f.cdf(x[0]) - alpha],
            Catalog::MeanVar => {
                let m = f.mean()?;
                vec![x[0] - m, x[1] - (f.variance()? + (m - x[0]).powi(2))]
            }
            Catalog::MeanVarPrime => {
                let m = f.mean()?;
                vec![x[0] - m, x[1] + x[0] * x[0] - (f.variance()? + m * m)]
            }
            Catalog::QuantileEs { alpha } => {
                vec![f.cdf(x[0]) - alpha, x[1] - f.partial_expectation(x[0])? / alpha]
            }
            Catalog::QuantileEsPrime { alpha } => {
                let first = f.cdf(x[0]) - alpha;
                vec![first, x[1] - f.partial_expectation(x[0])? / alpha + x[0] / alpha * first]
            }
            Catalog::MeanVarModified => {
                if x[1] >= 0.0 {
                    Catalog::MeanVarPrime.expected(x, law)?
                } else {
                    vec![1.0, 1.0]
                }
            }
            Catalog::VarCovar { .. } | Catalog::Covar1d { .. } => unreachable!(),
        })
    }

    fn breakpoints(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Catalog::Expectile { .. }
            | Catalog::Quantile { .. }
            | Catalog::QuantileEs { .. }
            | Catalog::QuantileEsPrime { .. } => vec![x[0]],
            _ => Vec::new(),
        }
    }

    fn is_triangular(&self) -> bool {
        !matches!(self, Catalog::Covar1d { .. } | Catalog::MeanVarModified)
    }

    fn functional(&self) -> Option<Functional> {
        match *self {
            Catalog::Mean => Some(Functional::Mean),
            Catalog::Expectile { tau } => Some(Functional::Expectile { tau }),
            Catalog::Quantile { alpha } => Some(Functional::Quantile { alpha }),
            Catalog::MeanVar | Catalog::MeanVarPrime | Catalog::MeanVarModified => Some(Functional::MeanVariance),
            Catalog::QuantileEs { alpha } | Catalog::QuantileEsPrime { alpha } => {
                Some(Functional::QuantileEs { alpha })
            }
            Catalog::VarCovar { alpha, beta } | Catalog::Covar1d { alpha, beta } => {
                Some(Functional::VarCovar { alpha, beta })
            }
        }
    }
}

/// Resolves a catalog key to a shared identification function.
pub fn parse_key(key: &str) -> Result<SharedIdFn> {
    Ok(Catalog::parse(key)?.shared())
}
