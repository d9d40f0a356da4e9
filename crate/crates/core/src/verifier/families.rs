use serde::{Deserialize, Serialize};

use crate::catalog::Functional;
use crate::distributions::{BivariateDistribution, Distribution, ScalarDistribution};
use crate::error::Result;

/// A named list of laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub name: String,
    pub laws: Vec<Distribution>,
}

/// Action points to test: offsets around the lower point of `T(F)` for each
/// law, plus fixed absolute points. Points outside the action domain are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XGrid {
    pub offsets: Vec<Vec<f64>>,
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
}

const OFFSETS_1D: [f64; 13] = [-2.0, -1.0, -0.5, -0.25, -0.1, -0.05, 0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0];
const OFFSETS_2D: [f64; 7] = [-1.0, -0.3, -0.1, 0.0, 0.1, 0.3, 1.0];

impl XGrid {
    pub fn around_truth(action_dim: usize) -> Self {
        let offsets = match action_dim {
            1 => OFFSETS_1D.iter().map(|o| vec![*o]).collect(),
            _ => crate::osband::grid_points(&vec![OFFSETS_2D.to_vec(); action_dim]),
        };
        XGrid { offsets, points: Vec::new() }
    }
}

fn n(m: f64, v: f64) -> Result<Distribution> {
    Ok(ScalarDistribution::normal(m, v)?.into())
}

/// Gaussian laws N(mu, s2) over a 4 x 3 parameter grid.
pub fn gaussian_family() -> Result<Family> {
    let mut laws = Vec::new();
    for mu in [-2.0, 0.0, 1.5, 3.0] {
        for s2 in [0.25, 1.0, 4.0] {
            laws.push(n(mu, s2)?);
        }
    }
    Ok(Family { name: "gaussian".into(), laws })
}

/// Gaussian, student-t (dof > 2), exponential, uniform and mixture laws.
pub fn scalar_family() -> Result<Family> {
    let mut laws = gaussian_family()?.laws;
    for dof in [3.0, 5.0, 10.0] {
        for loc in [0.0, 1.0] {
            laws.push(ScalarDistribution::student_t(dof, loc, 1.0)?.into());
        }
    }
    for rate in [0.5, 1.0, 2.0] {
        laws.push(ScalarDistribution::exponential(rate)?.into());
    }
    laws.push(ScalarDistribution::uniform(-1.0, 1.0)?.into());
    laws.push(ScalarDistribution::uniform(0.0, 3.0)?.into());
    let std = ScalarDistribution::standard_normal();
    laws.push(std.mix(&ScalarDistribution::exponential(1.0)?, 0.5)?.into());
    laws.push(
        ScalarDistribution::mixture(vec![
            (0.3, ScalarDistribution::normal(-1.0, 1.0)?),
            (0.7, ScalarDistribution::normal(2.0, 0.5)?),
        ])?
        .into(),
    );
    Ok(Family { name: "scalar".into(), laws })
}

/// Bivariate gaussians: three mean vectors, two variance pairs, four correlations.
pub fn bivariate_family() -> Result<Family> {
    let mut laws = Vec::new();
    for mean in [[0.0, 0.0], [1.0, -1.0], [-1.0, 2.0]] {
        for (v1, v2) in [(1.0, 1.0), (2.0, 0.5)] {
            for rho in [-0.5, 0.0, 0.3, 0.7] {
                let c = rho * f64::sqrt(v1 * v2);
                laws.push(BivariateDistribution::gaussian(mean, [[v1, c], [c, v2]])?.into());
            }
        }
    }
    Ok(Family { name: "bivariate-gaussian".into(), laws })
}

/// Discrete laws, several with an atom sitting on a quantile.
pub fn atoms_family() -> Result<Family> {
    let laws = vec![
        ScalarDistribution::atoms(&[(-1.0, 0.5), (1.0, 0.5)])?.into(),
        ScalarDistribution::atoms(&[(0.0, 0.5), (1.0, 0.5)])?.into(),
        ScalarDistribution::atoms(&[(-2.0, 0.1), (0.0, 0.3), (3.0, 0.6)])?.into(),
        ScalarDistribution::atoms(&[(1.0, 0.2), (2.0, 0.2), (3.0, 0.2), (4.0, 0.2), (5.0, 0.2)])?.into(),
    ];
    Ok(Family { name: "discrete-atoms".into(), laws })
}

/// The family each functional is verified on by default.
pub fn default_family(functional: &Functional) -> Result<Family> {
    match functional {
        Functional::VarCovar { .. } => bivariate_family(),
        _ => scalar_family(),
    }
}
