//! Parametric laws with exact functionals; every expected value elsewhere in
//! the crate bottoms out in the primitives here.

mod bivariate;
pub(crate) mod normal;
mod scalar;

use serde::{Deserialize, Serialize};

pub use bivariate::{bivariate_normal_cdf, Atom2, BivariateDistribution, Quadrant, Side};
#[allow(unused_imports)]
pub(crate) use scalar::{bisect_predicate, check_level, next_float, prev_float};
pub use scalar::{Atom, ScalarDistribution};

use crate::error::{Error, Result};
use bivariate::BivariateFamily;
use scalar::Family;

/// Closed interval `[lo, hi]`; points are degenerate intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn distance(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn inflate(&self, eps: f64) -> Interval {
        Interval { lo: self.lo - eps, hi: self.hi + eps }
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Either a univariate or a bivariate observation law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub enum Distribution {
    Scalar(ScalarDistribution),
    Bivariate(BivariateDistribution),
}

impl Distribution {
    pub fn obs_dim(&self) -> usize {
        match self {
            Distribution::Scalar(_) => 1,
            Distribution::Bivariate(_) => 2,
        }
    }

    pub fn as_scalar(&self) -> Result<&ScalarDistribution> {
        match self {
            Distribution::Scalar(d) => Ok(d),
            Distribution::Bivariate(_) => Err(Error::ObservationKind { expected: "univariate" }),
        }
    }

    pub fn as_bivariate(&self) -> Result<&BivariateDistribution> {
        match self {
            Distribution::Bivariate(d) => Ok(d),
            Distribution::Scalar(_) => Err(Error::ObservationKind { expected: "bivariate" }),
        }
    }

    /// `n` draws laid out row-major with `obs_dim` columns.
    pub fn sample_flat(&self, n: usize, seed: u64) -> Vec<f64> {
        match self {
            Distribution::Scalar(d) => d.sample(n, seed),
            Distribution::Bivariate(d) => d.sample(n, seed).into_iter().flatten().collect(),
        }
    }

    pub fn describe(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| "<unserializable>".into())
    }
}

impl From<ScalarDistribution> for Distribution {
    fn from(d: ScalarDistribution) -> Self {
        Distribution::Scalar(d)
    }
}

impl From<BivariateDistribution> for Distribution {
    fn from(d: BivariateDistribution) -> Self {
        Distribution::Bivariate(d)
    }
}

/// JSON shape `{family, params, atoms?, components?}`.
///
/// | family | params | extra |
/// |---|---|---|
/// | `normal` | `[mean, variance]` | |
/// | `exponential` | `[rate]` | |
/// | `uniform` | `[low, high]` | |
/// | `student-t` | `[dof, location, scale]` | |
/// | `discrete-atoms` | `[]` | `atoms: [[value, prob], ...]` |
/// | `mixture` | weights | `components: [spec, ...]` |
/// | `bivariate-gaussian` | `[m1, m2, c11, c12, c22]` | |
/// | `discrete-atoms-2d` | `[]` | `atoms: [[y1, y2, prob], ...]` |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub family: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<DistributionSpec>>,
}

fn expect_params(spec: &DistributionSpec, n: usize) -> Result<&[f64]> {
    if spec.params.len() != n {
        return Err(Error::InvalidDistribution(format!(
            "{} expects {n} params, got {}",
            spec.family,
            spec.params.len()
        )));
    }
    Ok(&spec.params)
}

impl TryFrom<DistributionSpec> for ScalarDistribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        match Distribution::try_from(spec)? {
            Distribution::Scalar(d) => Ok(d),
            Distribution::Bivariate(_) => Err(Error::ObservationKind { expected: "univariate" }),
        }
    }
}

impl TryFrom<DistributionSpec> for Distribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        let d = match spec.family.as_str() {
            "normal" => {
                let p = expect_params(&spec, 2)?;
                ScalarDistribution::normal(p[0], p[1])?.into()
            }
            "exponential" => ScalarDistribution::exponential(expect_params(&spec, 1)?[0])?.into(),
            "uniform" => {
                let p = expect_params(&spec, 2)?;
                ScalarDistribution::uniform(p[0], p[1])?.into()
            }
            "student-t" => {
                let p = expect_params(&spec, 3)?;
                ScalarDistribution::student_t(p[0], p[1], p[2])?.into()
            }
            "discrete-atoms" => {
                let atoms = spec.atoms.as_ref().ok_or_else(|| Error::InvalidDistribution("missing atoms".into()))?;
                let pts = atoms
                    .iter()
                    .map(|a| match a.as_slice() {
                        [v, p] => Ok((*v, *p)),
                        _ => Err(Error::InvalidDistribution("atoms must be [value, prob] pairs".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ScalarDistribution::atoms(&pts)?.into()
            }
            "mixture" => {
                let comps = spec.components.ok_or_else(|| Error::InvalidDistribution("missing components".into()))?;
                if comps.len() != spec.params.len() {
                    return Err(Error::InvalidDistribution("one weight per mixture component required".into()));
                }
                let parts = spec
                    .params
                    .iter()
                    .zip(comps)
                    .map(|(w, c)| Ok((*w, ScalarDistribution::try_from(c)?)))
                    .collect::<Result<Vec<_>>>()?;
                ScalarDistribution::mixture(parts)?.into()
            }
            "bivariate-gaussian" => {
                let p = expect_params(&spec, 5)?;
                BivariateDistribution::gaussian([p[0], p[1]], [[p[2], p[3]], [p[3], p[4]]])?.into()
            }
            "discrete-atoms-2d" => {
                let atoms = spec.atoms.as_ref().ok_or_else(|| Error::InvalidDistribution("missing atoms".into()))?;
                let pts = atoms
                    .iter()
                    .map(|a| match a.as_slice() {
                        [y1, y2, p] => Ok(([*y1, *y2], *p)),
                        _ => Err(Error::InvalidDistribution("2d atoms must be [y1, y2, prob] triples".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                BivariateDistribution::atoms(&pts)?.into()
            }
            other => return Err(Error::InvalidDistribution(format!("unknown family `{other}`"))),
        };
        Ok(d)
    }
}

impl From<&ScalarDistribution> for DistributionSpec {
    fn from(d: &ScalarDistribution) -> Self {
        let simple = |family: &str, params: Vec<f64>| DistributionSpec {
            family: family.into(),
            params,
            atoms: None,
            components: None,
        };
        match &d.family {
            Family::Normal { mean, variance } => simple("normal", vec![*mean, *variance]),
            Family::Exponential { rate } => simple("exponential", vec![*rate]),
            Family::Uniform { low, high } => simple("uniform", vec![*low, *high]),
            Family::StudentT { dof, location, scale } => simple("student-t", vec![*dof, *location, *scale]),
            Family::Atoms { atoms, .. } => DistributionSpec {
                atoms: Some(atoms.iter().map(|a| vec![a.value, a.prob]).collect()),
                ..simple("discrete-atoms", vec![])
            },
            Family::Mixture(c) => DistributionSpec {
                components: Some(c.iter().map(|(_, d)| d.into()).collect()),
                ..simple("mixture", c.iter().map(|(w, _)| *w).collect())
            },
        }
    }
}

impl From<Distribution> for DistributionSpec {
    fn from(d: Distribution) -> Self {
        match &d {
            Distribution::Scalar(s) => s.into(),
            Distribution::Bivariate(b) => match &b.family {
                BivariateFamily::Gaussian { mean, cov } => DistributionSpec {
                    family: "bivariate-gaussian".into(),
                    params: vec![mean[0], mean[1], cov[0][0], cov[0][1], cov[1][1]],
                    atoms: None,
                    components: None,
                },
                BivariateFamily::Atoms(a) => DistributionSpec {
                    family: "discrete-atoms-2d".into(),
                    params: vec![],
                    atoms: Some(a.iter().map(|x| vec![x.value[0], x.value[1], x.prob]).collect()),
                    components: None,
                },
            },
        }
    }
}

impl Serialize for ScalarDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DistributionSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScalarDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = DistributionSpec::deserialize(d)?;
        ScalarDistribution::try_from(spec).map_err(serde::de::Error::custom)
    }
}
