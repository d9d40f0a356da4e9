use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

use super::{normal, ScalarDistribution};
use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Which side of a threshold a coordinate must fall on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `y < x`
    Below,
    /// `y >= x`
    AtOrAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrant {
    pub first: Side,
    pub second: Side,
}

impl Quadrant {
    pub const fn new(first: Side, second: Side) -> Self {
        Self { first, second }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom2 {
    pub value: [f64; 2],
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum BivariateFamily {
    Gaussian { mean: [f64; 2], cov: [[f64; 2]; 2] },
    Atoms(Vec<Atom2>),
}

/// Law of an observation pair `(Y1, Y2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateDistribution {
    pub(crate) family: BivariateFamily,
}

impl BivariateDistribution {
    pub fn gaussian(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        if !mean.iter().all(|m| m.is_finite()) || !cov.iter().flatten().all(|c| c.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite gaussian parameters".into()));
        }
        if cov[0][1] != cov[1][0] {
            return Err(Error::InvalidDistribution("covariance matrix must be symmetric".into()));
        }
        if cov[0][0] <= 0.0 || cov[1][1] <= 0.0 {
            return Err(Error::InvalidDistribution("marginal variances must be positive".into()));
        }
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if det < -1e-12 * cov[0][0] * cov[1][1] {
            return Err(Error::InvalidDistribution("covariance matrix is not positive semi-definite".into()));
        }
        Ok(Self { family: BivariateFamily::Gaussian { mean, cov } })
    }

    pub fn independent_standard() -> Self {
        Self { family: BivariateFamily::Gaussian { mean: [0.0; 2], cov: [[1.0, 0.0], [0.0, 1.0]] } }
    }

    /// Standard margins with correlation `rho`.
    pub fn standard_correlated(rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidDistribution(format!("correlation must lie in [-1, 1], got {rho}")));
        }
        Self::gaussian([0.0; 2], [[1.0, rho], [rho, 1.0]])
    }

    pub fn atoms(points: &[([f64; 2], f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        let mut total = 0.0;
        for (v, p) in points {
            if !v.iter().all(|c| c.is_finite()) || !(p.is_finite() && *p >= 0.0) {
                return Err(Error::InvalidDistribution("invalid bivariate atom".into()));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("atom probabilities sum to {total}, not 1")));
        }
        let atoms = points.iter().filter(|(_, p)| *p > 0.0).map(|&(value, prob)| Atom2 { value, prob }).collect();
        Ok(Self { family: BivariateFamily::Atoms(atoms) })
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            BivariateFamily::Gaussian { .. } => "bivariate-gaussian",
            BivariateFamily::Atoms(_) => "discrete-atoms-2d",
        }
    }

    pub fn mean(&self) -> [f64; 2] {
        match &self.family {
            BivariateFamily::Gaussian { mean, .. } => *mean,
            BivariateFamily::Atoms(a) => {
                let mut m = [0.0; 2];
                for atom in a {
                    m[0] += atom.prob * atom.value[0];
                    m[1] += atom.prob * atom.value[1];
                }
                m
            }
        }
    }

    pub fn marginal(&self, coord: usize) -> Result<ScalarDistribution> {
        if coord > 1 {
            return Err(Error::DimensionMismatch { expected: 2, got: coord + 1 });
        }
        match &self.family {
            BivariateFamily::Gaussian { mean, cov } => ScalarDistribution::normal(mean[coord], cov[coord][coord]),
            BivariateFamily::Atoms(a) => {
                let pts: Vec<(f64, f64)> = a.iter().map(|atom| (atom.value[coord], atom.prob)).collect();
                ScalarDistribution::atoms(&pts)
            }
        }
    }

    /// Conditional law of `Y2` given `Y1 < x1`, when it is finitely supported.
    pub fn conditional_second_atoms(&self, x1: f64) -> Option<Result<ScalarDistribution>> {
        let BivariateFamily::Atoms(a) = &self.family else { return None };
        let sel: Vec<&Atom2> = a.iter().filter(|atom| atom.value[0] < x1).collect();
        let mass: f64 = sel.iter().map(|atom| atom.prob).sum();
        if mass <= 0.0 {
            return Some(Err(Error::InvalidParameter("conditioning event has probability zero".into())));
        }
        let pts: Vec<(f64, f64)> = sel.iter().map(|atom| (atom.value[1], atom.prob / mass)).collect();
        // renormalised masses may miss 1 by rounding
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let pts: Vec<(f64, f64)> = pts.into_iter().map(|(v, p)| (v, p / total)).collect();
        Some(ScalarDistribution::atoms(&pts))
    }

    /// `P(Y1 <side> x1, Y2 <side> x2)`.
    pub fn tail_prob(&self, x1: f64, x2: f64, region: Quadrant) -> f64 {
        match &self.family {
            BivariateFamily::Gaussian { mean, cov } => {
                let s1 = cov[0][0].sqrt();
                let s2 = cov[1][1].sqrt();
                let rho = (cov[0][1] / (s1 * s2)).clamp(-1.0, 1.0);
                let a = (x1 - mean[0]) / s1;
                let b = (x2 - mean[1]) / s2;
                let both_below = bivariate_normal_cdf(a, b, rho);
                let pa = normal::cdf(a);
                let pb = normal::cdf(b);
                let p = match (region.first, region.second) {
                    (Side::Below, Side::Below) => both_below,
                    (Side::Below, Side::AtOrAbove) => pa - both_below,
                    (Side::AtOrAbove, Side::Below) => pb - both_below,
                    (Side::AtOrAbove, Side::AtOrAbove) => 1.0 - pa - pb + both_below,
                };
                p.clamp(0.0, 1.0)
            }
            BivariateFamily::Atoms(a) => {
                let hit = |side: Side, y: f64, x: f64| match side {
                    Side::Below => y < x,
                    Side::AtOrAbove => y >= x,
                };
                a.iter()
                    .filter(|atom| hit(region.first, atom.value[0], x1) && hit(region.second, atom.value[1], x2))
                    .map(|atom| atom.prob)
                    .sum()
            }
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match &self.family {
            BivariateFamily::Gaussian { mean, cov } => {
                let l11 = cov[0][0].sqrt();
                let l21 = cov[1][0] / l11;
                let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                [mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2]
            }
            BivariateFamily::Atoms(a) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for atom in a {
                    acc += atom.prob;
                    if u < acc {
                        return atom.value;
                    }
                }
                a.last().expect("nonempty").value
            }
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_with(&mut rng)).collect()
    }
}

/// `P(Z1 < a, Z2 < b)` for standard normal margins with correlation `rho`,
/// as a one-dimensional integral over the first margin's probability scale.
pub fn bivariate_normal_cdf(a: f64, b: f64, rho: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if rho == 0.0 {
        return normal::cdf(a) * normal::cdf(b);
    }
    if rho >= 1.0 {
        return normal::cdf(a.min(b));
    }
    if rho <= -1.0 {
        return (normal::cdf(a) + normal::cdf(b) - 1.0).max(0.0);
    }
    let upper = normal::cdf(a);
    if upper == 0.0 {
        return 0.0;
    }
    let scale = (1.0 - rho * rho).sqrt();
    let integrand = |u: f64| normal::cdf((b - rho * normal::quantile(u)) / scale);
    match integrate(integrand, 0.0, upper, &[], 1e-14, 1e-13) {
        Ok(r) => r.value.clamp(0.0, 1.0),
        Err(Error::Quadrature { estimate, .. }) => estimate.clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}
