use crate::catalog::Functional;
use crate::distributions::{normal, BivariateDistribution, Distribution, ScalarDistribution};
use crate::error::{Error, Result};

/// Distributions around a law whose functional value is a given action point.
#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    /// `k + 1` laws meant to surround the origin in expectation space.
    pub simplex: Vec<Distribution>,
    /// Extra laws used only to certify a recovered transform.
    pub heldout: Vec<Distribution>,
}

impl Battery {
    /// Simplex laws followed by held-out laws, the order `recover_h` expects.
    pub fn all(&self) -> Vec<Distribution> {
        self.simplex.iter().chain(&self.heldout).cloned().collect()
    }
}

/// Gaussian perturbation battery at `x`.
///
/// The reference law is a gaussian with `T(F) = x`. Scalar functionals perturb
/// (location, log-scale) by `spread` (location in units of the scale);
/// the (VaR, CoVaR) pair perturbs the two means of an independent gaussian.
/// Directions `e1, e2, -(e1 + e2)` put the origin near the centroid. For the
/// (VaR, ES) pair the spread shrinks with `alpha`.
pub fn perturbation_battery(functional: &Functional, x: &[f64], spread: f64) -> Result<Battery> {
    if x.len() != functional.dim() {
        return Err(Error::DimensionMismatch { expected: functional.dim(), got: x.len() });
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::InvalidParameter(format!("spread must be positive, got {spread}")));
    }
    // tail functionals react to the scale much faster than the body does
    let d = match *functional {
        Functional::QuantileEs { alpha } => spread * (2.0 * alpha).min(1.0),
        _ => spread,
    };
    let scalar = |mu: f64, sigma: f64| -> Result<Box<dyn Fn(f64, f64) -> Result<Distribution>>> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("no gaussian reference law at {x:?}")));
        }
        Ok(Box::new(move |dm: f64, ds: f64| {
            let s = sigma * ds.exp();
            Ok(ScalarDistribution::normal(mu + dm * sigma, s * s)?.into())
        }))
    };
    let law = match *functional {
        Functional::Mean => scalar(x[0], 1.0)?,
        Functional::Quantile { alpha } => scalar(x[0] - normal::quantile(alpha), 1.0)?,
        Functional::Expectile { tau } => {
            let e = Functional::Expectile { tau }.point(&ScalarDistribution::standard_normal().into())?[0];
            scalar(x[0] - e, 1.0)?
        }
        Functional::MeanVariance => scalar(x[0], x[1].sqrt())?,
        Functional::QuantileEs { alpha } => {
            let z = normal::quantile(alpha);
            let sigma = (x[0] - x[1]) / (z + normal::pdf(z) / alpha);
            scalar(x[0] - sigma * z, sigma)?
        }
        Functional::VarCovar { alpha, beta } => {
            let m1 = x[0] - normal::quantile(1.0 - beta);
            let m2 = x[1] - normal::quantile(1.0 - alpha);
            Box::new(move |a: f64, b: f64| {
                Ok(BivariateDistribution::gaussian([m1 + a, m2 + b], [[1.0, 0.0], [0.0, 1.0]])?.into())
            })
        }
        Functional::Variance | Functional::ExpectedShortfall { .. } => {
            return Err(Error::InvalidParameter(format!("no battery for {}", functional.name())))
        }
    };
    Ok(match functional.dim() {
        1 => Battery { simplex: vec![law(d, 0.0)?, law(-d, 0.0)?], heldout: vec![law(0.5 * d, d)?] },
        _ => Battery {
            simplex: vec![law(d, 0.0)?, law(0.0, d)?, law(-d, -d)?],
            heldout: vec![law(-0.5 * d, d)?],
        },
    })
}
