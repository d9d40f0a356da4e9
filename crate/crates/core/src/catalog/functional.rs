use serde::{Deserialize, Serialize};

use crate::distributions::{bisect_predicate, check_level, Distribution, Interval, Quadrant, ScalarDistribution, Side};
use crate::error::{Error, Result};

/// A (possibly set-valued) statistical functional. Values are reported per
/// coordinate as closed intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "kebab-case")]
pub enum Functional {
    Mean,
    Expectile { tau: f64 },
    Quantile { alpha: f64 },
    MeanVariance,
    QuantileEs { alpha: f64 },
    /// Roots of the two (VaR, CoVaR) moment conditions.
    VarCovar { alpha: f64, beta: f64 },
    /// Single coordinates, used for the convex-level-sets checks.
    Variance,
    ExpectedShortfall { alpha: f64 },
}

impl Functional {
    pub fn dim(&self) -> usize {
        match self {
            Functional::MeanVariance | Functional::QuantileEs { .. } | Functional::VarCovar { .. } => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Functional::Mean => "mean".into(),
            Functional::Expectile { tau } => format!("expectile:{tau}"),
            Functional::Quantile { alpha } => format!("quantile:{alpha}"),
            Functional::MeanVariance => "mean-variance".into(),
            Functional::QuantileEs { alpha } => format!("quantile-es:{alpha}"),
            Functional::VarCovar { alpha, beta } => format!("var-covar:{alpha},{beta}"),
            Functional::Variance => "variance".into(),
            Functional::ExpectedShortfall { alpha } => format!("es:{alpha}"),
        }
    }

    pub fn value(&self, law: &Distribution) -> Result<Vec<Interval>> {
        match self {
            Functional::VarCovar { alpha, beta } => var_covar(*alpha, *beta, law.as_bivariate()?),
            _ => self.scalar_value(law.as_scalar()?),
        }
    }

    /// Lower endpoints of [`Functional::value`].
    pub fn point(&self, law: &Distribution) -> Result<Vec<f64>> {
        Ok(self.value(law)?.iter().map(|i| i.lo).collect())
    }

    fn scalar_value(&self, f: &ScalarDistribution) -> Result<Vec<Interval>> {
        Ok(match self {
            Functional::Mean => vec![Interval::point(f.mean()?)],
            Functional::Expectile { tau } => vec![Interval::point(expectile(f, *tau)?)],
            Functional::Quantile { alpha } => vec![f.quantile_set(*alpha)?],
            Functional::MeanVariance => vec![Interval::point(f.mean()?), Interval::point(f.variance()?)],
            Functional::QuantileEs { alpha } => vec![f.quantile_set(*alpha)?, Interval::point(f.es_lower(*alpha)?)],
            Functional::Variance => vec![Interval::point(f.variance()?)],
            Functional::ExpectedShortfall { alpha } => vec![Interval::point(f.es_lower(*alpha)?)],
            Functional::VarCovar { .. } => unreachable!("handled by value"),
        })
    }
}

/// Expected expectile identification function, increasing in `x`.
pub(crate) fn expectile_moment(f: &ScalarDistribution, tau: f64, x: f64) -> Result<f64> {
    let mean = f.mean()?;
    let cdf = f.cdf(x);
    let pe = f.partial_expectation(x)?;
    let below = x * cdf - pe;
    let above = x * (1.0 - cdf) - (mean - pe);
    Ok(2.0 * (1.0 - tau) * below + 2.0 * tau * above)
}

fn expectile(f: &ScalarDistribution, tau: f64) -> Result<f64> {
    check_level(tau)?;
    let mean = f.mean()?;
    let mut width = 1.0 + f.variance().map(f64::sqrt).unwrap_or(1.0);
    let (mut a, mut b) = (mean - width, mean + width);
    for _ in 0..200 {
        if expectile_moment(f, tau, a)? < 0.0 && expectile_moment(f, tau, b)? >= 0.0 {
            break;
        }
        width *= 2.0;
        a = mean - width;
        b = mean + width;
    }
    Ok(bisect_predicate(a, b, |x| expectile_moment(f, tau, x).map(|v| v >= 0.0).unwrap_or(true)))
}

fn var_covar(alpha: f64, beta: f64, f: &crate::distributions::BivariateDistribution) -> Result<Vec<Interval>> {
    check_level(alpha)?;
    check_level(beta)?;
    // P(Y1 >= x1) = beta
    let first = f.marginal(0)?.quantile_set(1.0 - beta)?;
    let x1 = first.lo;
    let below = f.tail_prob(x1, 0.0, Quadrant::new(Side::Below, Side::Below))
        + f.tail_prob(x1, 0.0, Quadrant::new(Side::Below, Side::AtOrAbove));
    if below <= 0.0 {
        return Err(Error::InvalidParameter("P(Y1 < VaR) is zero; CoVaR undefined".into()));
    }
    // P(Y2 >= x2 | Y1 < x1) = alpha
    let second = match f.conditional_second_atoms(x1) {
        Some(cond) => cond?.quantile_set(1.0 - alpha)?,
        None => {
            let cond_cdf = |x2: f64| f.tail_prob(x1, x2, Quadrant::new(Side::Below, Side::Below)) / below;
            let target = 1.0 - alpha;
            let m = f.mean()[1];
            let (mut a, mut b) = (m - 1.0, m + 1.0);
            while cond_cdf(a) >= target && a > -1e300 {
                a = m - 2.0 * (m - a);
            }
            while cond_cdf(b) < target && b < 1e300 {
                b = m + 2.0 * (b - m);
            }
            Interval::point(bisect_predicate(a, b, |x| cond_cdf(x) >= target))
        }
    };
    Ok(vec![first, second])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::BivariateDistribution;

    #[test]
    fn examples() {
        let n = Distribution::Scalar(ScalarDistribution::normal(1.0, 4.0).unwrap());
        let v = Functional::MeanVariance.value(&n).unwrap();
        assert_eq!(v, vec![Interval::point(1.0), Interval::point(4.0)]);

        let two = Distribution::Scalar(ScalarDistribution::atoms(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap());
        let v = Functional::QuantileEs { alpha: 0.25 }.value(&two).unwrap();
        assert_eq!(v, vec![Interval::point(-1.0), Interval::point(-1.0)]);

        let flat = Distribution::Scalar(ScalarDistribution::atoms(&[(0.0, 0.5), (1.0, 0.5)]).unwrap());
        assert_eq!(Functional::Quantile { alpha: 0.5 }.value(&flat).unwrap(), vec![Interval::new(0.0, 1.0)]);
    }

    #[test]
    fn half_expectile_is_mean() {
        let e = ScalarDistribution::exponential(1.0).unwrap();
        let x = expectile(&e, 0.5).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
        let high = expectile(&e, 0.9).unwrap();
        assert!(high > 1.0);
    }

    #[test]
    fn var_covar_independent() {
        let f = Distribution::Bivariate(BivariateDistribution::independent_standard());
        let v = Functional::VarCovar { alpha: 0.05, beta: 0.1 }.point(&f).unwrap();
        assert!((v[0] - 1.281_551_565_544_600_4).abs() < 1e-12);
        assert!((v[1] - 1.644_853_626_951_472_7).abs() < 1e-9, "{v:?}");
    }
}
