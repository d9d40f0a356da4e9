use serde::{Deserialize, Serialize};

use super::{sup_norm, verify_identification, Family, VerificationReport, VerifyConfig, XGrid};
use crate::catalog::{Catalog, Functional, IdentificationFunction};
use crate::distributions::{Distribution, Interval, ScalarDistribution};
use crate::error::{Error, Result};
use crate::osband::{solve_h, MatrixTransform, DEFAULT_RESIDUAL_TOL};

const ZERO_TOL: f64 = 1e-9;

fn n(m: f64, v: f64) -> Result<Distribution> {
    Ok(ScalarDistribution::normal(m, v)?.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryAttempt {
    pub x: Vec<f64>,
    pub battery: String,
    pub heldout_residual: Option<f64>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub error: Option<String>,
    pub inconsistent: bool,
}

fn attempt(
    v: &dyn IdentificationFunction,
    v_prime: &dyn IdentificationFunction,
    x: &[f64],
    battery: &[Distribution],
    label: &str,
) -> RecoveryAttempt {
    match solve_h(v, v_prime, x, battery) {
        Ok(r) => RecoveryAttempt {
            x: x.to_vec(),
            battery: label.into(),
            inconsistent: r.heldout_residual.map_or(false, |e| e > DEFAULT_RESIDUAL_TOL),
            heldout_residual: r.heldout_residual,
            matrix: Some(r.matrix),
            error: None,
        },
        Err(e) => RecoveryAttempt {
            x: x.to_vec(),
            battery: label.into(),
            heldout_residual: None,
            matrix: None,
            error: Some(e.to_string()),
            inconsistent: false,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Remark1Report {
    /// Points where exactly one of `V'` and `V''` has a vanishing expectation.
    pub zero_set_mismatches: Vec<(Vec<f64>, usize)>,
    pub points_checked: usize,
    /// `V''(x, F)` at `x = (0, -1)` for `F = N(0, 1)`.
    pub negative_branch_value: Vec<f64>,
    /// Largest `||V''(T(F), F)||_inf` over the gaussian family.
    pub truth_branch_max: f64,
    /// Recoveries at points with `x2 < 0`, gaussian and Dirac batteries.
    pub negative_recoveries: Vec<RecoveryAttempt>,
    /// Recoveries at points with `x2 >= 0`, expected to give the mean-variance matrix.
    pub positive_recoveries: Vec<RecoveryAttempt>,
    pub passed: bool,
}

/// The modified mean-variance function equal to `V'` where `x2 >= 0` and to the
/// constant `(1, 1)` where `x2 < 0`: same zero set of expectations as `V'` on
/// gaussians, yet not of the form `h(x) V(x, y)` at points with `x2 < 0`.
pub fn remark1_counterexample_check(x_grid: &[Vec<f64>], y_grid: &[f64]) -> Result<Remark1Report> {
    if !x_grid.iter().any(|x| x.len() == 2 && x[1] < 0.0) || !x_grid.iter().any(|x| x.len() == 2 && x[1] >= 0.0) {
        return Err(Error::InvalidParameter("x grid must cover both x2 < 0 and x2 >= 0".into()));
    }
    if y_grid.len() < 3 {
        return Err(Error::InvalidParameter("need at least three Dirac points".into()));
    }
    let base = Catalog::MeanVar;
    let prime = Catalog::MeanVarPrime;
    let modified = Catalog::MeanVarModified;
    let family = super::gaussian_family()?;

    let mut mismatches = Vec::new();
    let mut points_checked = 0;
    let mut truth_branch_max: f64 = 0.0;
    for (i, law) in family.laws.iter().enumerate() {
        let truth = Functional::MeanVariance.point(law)?;
        truth_branch_max = truth_branch_max.max(sup_norm(&modified.expected(&truth, law)?));
        for x in x_grid.iter().chain(std::iter::once(&truth)) {
            let a = sup_norm(&prime.expected(x, law)?) <= ZERO_TOL;
            let b = sup_norm(&modified.expected(x, law)?) <= ZERO_TOL;
            points_checked += 1;
            if a != b {
                mismatches.push((x.clone(), i));
            }
        }
    }

    let negative_branch_value = modified.expected(&[0.0, -1.0], &n(0.0, 1.0)?)?;
    let gaussian_battery = vec![n(1.0, 1.0)?, n(-1.0, 1.0)?, n(0.0, 0.25)?, n(0.5, 2.0)?];
    let dirac: Vec<Distribution> =
        y_grid.iter().map(|y| ScalarDistribution::point_mass(*y).map(Into::into)).collect::<Result<_>>()?;

    let mut negative_recoveries = Vec::new();
    let mut positive_recoveries = Vec::new();
    for x in x_grid {
        let slot = if x[1] < 0.0 { &mut negative_recoveries } else { &mut positive_recoveries };
        slot.push(attempt(&base, &modified, x, &gaussian_battery, "gaussian"));
        slot.push(attempt(&base, &modified, x, &dirac, "dirac"));
    }

    let positive_ok = positive_recoveries.iter().all(|r| match &r.matrix {
        Some(m) if !r.inconsistent => {
            let h = MatrixTransform::MeanVarExample.evaluate(&r.x).expect("2-d point");
            (0..2).all(|i| (0..2).all(|j| (m[i][j] - h[(i, j)]).abs() <= 1e-6))
        }
        _ => false,
    });
    let passed = mismatches.is_empty()
        && negative_branch_value == vec![1.0, 1.0]
        && truth_branch_max <= 1e-6
        && negative_recoveries.iter().all(|r| r.inconsistent)
        && positive_ok;
    Ok(Remark1Report {
        zero_set_mismatches: mismatches,
        points_checked,
        negative_branch_value,
        truth_branch_max,
        negative_recoveries,
        positive_recoveries,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricClassReport {
    pub laws: usize,
    /// Largest `|V(c, F)|` at the centre over both functions.
    pub max_centre_residual: f64,
    /// Both expectations vanish at the centre and share a sign away from it.
    pub zero_sets_agree: bool,
    pub mixture: Distribution,
    pub mixture_mean: f64,
    pub mixture_median: f64,
    pub zero_sets_differ_on_mixture: bool,
    pub recovery: RecoveryAttempt,
    pub passed: bool,
}

/// Mean and median coincide on symmetric laws, but not once the class is
/// closed under mixtures with an asymmetric component.
pub fn symmetric_class_demo(laws: &[ScalarDistribution]) -> Result<SymmetricClassReport> {
    if laws.is_empty() {
        return Err(Error::InvalidParameter("empty family".into()));
    }
    let mean = Catalog::Mean;
    let median = Catalog::Quantile { alpha: 0.5 };
    let mut max_centre_residual: f64 = 0.0;
    let mut zero_sets_agree = true;
    for f in laws {
        let c = f.mean()?;
        let law: Distribution = f.clone().into();
        for d in [0.0, -0.5, 0.5, -2.0, 2.0] {
            let a = mean.expected(&[c + d], &law)?[0];
            let b = median.expected(&[c + d], &law)?[0];
            if d == 0.0 {
                max_centre_residual = max_centre_residual.max(a.abs()).max(b.abs());
            } else if a.signum() != b.signum() || a.abs() <= ZERO_TOL || b.abs() <= ZERO_TOL {
                zero_sets_agree = false;
            }
        }
    }
    zero_sets_agree &= max_centre_residual <= ZERO_TOL;

    let mix = ScalarDistribution::standard_normal().mix(&ScalarDistribution::exponential(1.0)?, 0.5)?;
    let mixture_mean = mix.mean()?;
    let mixture_median = mix.quantile_set(0.5)?.lo;
    let mixture: Distribution = mix.into();
    let at_mean = median.expected(&[mixture_mean], &mixture)?[0];
    let zero_sets_differ_on_mixture = at_mean.abs() > ZERO_TOL;

    let battery = vec![n(mixture_mean + 1.0, 1.0)?, mixture.clone()];
    let recovery = attempt(&mean, &median, &[mixture_mean], &battery, "convexified");
    Ok(SymmetricClassReport {
        laws: laws.len(),
        max_centre_residual,
        zero_sets_agree,
        passed: zero_sets_agree && zero_sets_differ_on_mixture && recovery.inconsistent,
        mixture,
        mixture_mean,
        mixture_median,
        zero_sets_differ_on_mixture,
        recovery,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrichotomyReport {
    /// `N(0, 1)` at level 0.25: strict.
    pub continuous: VerificationReport,
    /// Gap law `U(-1, 0)` and `U(1, 2)` at level 0.5: the quantile set is `[0, 1]`.
    pub flat: VerificationReport,
    pub flat_interval: Interval,
    /// Largest `|V(x, F)|` over interior points of the flat interval.
    pub flat_interior_max: f64,
    /// Two atoms at level 0.25: `F(VaR) > alpha`.
    pub atom: VerificationReport,
    pub reproduced: bool,
}

/// The three cases for the quantile identification function.
pub fn quantile_trichotomy() -> Result<TrichotomyReport> {
    let config = VerifyConfig::default();
    let grid = XGrid::around_truth(1);
    let single = |name: &str, law: ScalarDistribution| Family { name: name.into(), laws: vec![law.into()] };
    let q25 = Catalog::Quantile { alpha: 0.25 };
    let q50 = Catalog::Quantile { alpha: 0.5 };
    let f25 = Functional::Quantile { alpha: 0.25 };
    let f50 = Functional::Quantile { alpha: 0.5 };

    let continuous =
        verify_identification(&q25, &f25, &single("continuous", ScalarDistribution::standard_normal()), &grid, &config)?;
    let gap = ScalarDistribution::uniform(-1.0, 0.0)?.mix(&ScalarDistribution::uniform(1.0, 2.0)?, 0.5)?;
    let flat_interval = gap.quantile_set(0.5)?;
    let gap_law: Distribution = gap.clone().into();
    let mut flat_interior_max: f64 = 0.0;
    for i in 1..10 {
        let x = flat_interval.lo + (flat_interval.hi - flat_interval.lo) * i as f64 / 10.0;
        flat_interior_max = flat_interior_max.max(q50.expected(&[x], &gap_law)?[0].abs());
    }
    let flat = verify_identification(&q50, &f50, &single("flat", gap), &grid, &config)?;
    let two = ScalarDistribution::atoms(&[(-1.0, 0.5), (1.0, 0.5)])?;
    let atom = verify_identification(&q25, &f25, &single("atom", two), &grid, &config)?;

    let reproduced = continuous.failures.is_empty()
        && flat.failures.is_empty()
        && !flat_interval.is_point()
        && flat_interior_max <= 1e-12
        && atom.unflagged == 0
        && atom.flagged == 1;
    Ok(TrichotomyReport { continuous, flat, flat_interval, flat_interior_max, atom, reproduced })
}
