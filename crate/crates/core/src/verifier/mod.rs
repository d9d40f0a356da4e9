//! Numerical evidence for (strict) identification, and the negative results:
//! atoms on quantiles, non-strict CoVaR, convex level sets, and transforms
//! that are not of the form `h(x) V(x, y)`.

mod families;
mod level_sets;
mod remarks;

use serde::{Deserialize, Serialize};

pub use families::{
    atoms_family, bivariate_family, default_family, gaussian_family, scalar_family, Family, XGrid,
};
pub use level_sets::{convex_level_sets_check, es_witness_search, EsWitnessSearch, LambdaCheck, LevelSetReport};
pub use remarks::{
    quantile_trichotomy, remark1_counterexample_check, symmetric_class_demo, Remark1Report, SymmetricClassReport,
    TrichotomyReport,
};

use crate::catalog::{expected_monte_carlo, Functional, IdentificationFunction};
use crate::distributions::{bisect_predicate, Distribution, Interval};
use crate::error::{Error, Result};
use crate::par;

/// Which action points count as "away from" `T(F)` in the reverse check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exclusion {
    /// Skip points inside the box `T(F)` inflated by `c (1 + |T_i(F)|)` per coordinate.
    Relative(f64),
    /// Skip points at euclidean distance below `d` from `T(F)`.
    Distance(f64),
}

impl Exclusion {
    fn excludes(&self, truth: &[Interval], x: &[f64]) -> bool {
        match *self {
            Exclusion::Relative(c) => {
                truth.iter().zip(x).all(|(t, xi)| t.inflate(c * (1.0 + t.magnitude())).contains(*xi, 0.0))
            }
            Exclusion::Distance(d) => {
                let dist = truth.iter().zip(x).map(|(t, xi)| t.distance(*xi).powi(2)).sum::<f64>().sqrt();
                dist < d * (1.0 - 1e-9)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub draws: usize,
    pub seed: u64,
    /// Allowed deviation in standard errors.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Largest `||V(x*, F)||_inf` accepted at `x* in T(F)`.
    pub tol: f64,
    /// Smallest `||V(x, F)||_inf` required away from `T(F)`.
    pub margin: f64,
    pub exclusion: Exclusion,
    pub monte_carlo: Option<MonteCarloConfig>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { tol: 1e-6, margin: 1e-4, exclusion: Exclusion::Relative(0.05), monte_carlo: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    /// `x in T(F)` implies `V(x, F) = 0`.
    Forward,
    /// `V(x, F) = 0` implies `x in T(F)`.
    Reverse,
    /// Closed form agrees with a Monte Carlo average.
    MonteCarlo,
}

/// Failures that are known consequences of the theory rather than bugs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedFailure {
    /// An atom sits on the quantile, so `F(x) > alpha` there.
    QuantileAtom,
    /// Fewer moment conditions than action coordinates.
    NonStrict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub property: Property,
    pub x: Vec<f64>,
    pub distribution: Distribution,
    /// `V(x, F)`, or the Monte Carlo mean for [`Property::MonteCarlo`].
    pub value: Vec<f64>,
    pub norm: f64,
    pub flag: Option<ExpectedFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extreme {
    pub value: f64,
    pub x: Vec<f64>,
    pub distribution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub key: String,
    pub functional: String,
    pub family: String,
    pub distributions: usize,
    pub grid_offsets: usize,
    pub forward_checked: usize,
    pub reverse_checked: usize,
    pub monte_carlo_checked: usize,
    /// Largest unflagged `||V(x*, F)||_inf` at the truth.
    pub worst_zero: Option<Extreme>,
    /// Smallest `||V(x, F)||_inf` among reverse-checked points.
    pub smallest_margin: Option<Extreme>,
    pub failures: Vec<Failure>,
    pub flagged: usize,
    pub unflagged: usize,
    pub passed: bool,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, c| m.max(c.abs()))
}

/// Lower, middle and upper point of each coordinate interval, combined.
fn truth_points(truth: &[Interval]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            if t.is_point() {
                vec![t.lo]
            } else {
                vec![t.lo, 0.5 * (t.lo + t.hi), t.hi]
            }
        })
        .collect();
    crate::osband::grid_points(&axes)
}

/// Whether an atom of the relevant (conditional) law sits on a quantile
/// coordinate of `x`.
fn atom_at_quantile(functional: &Functional, law: &Distribution, x: &[f64]) -> bool {
    let has_atom = |f: &crate::distributions::ScalarDistribution, at: f64| f.cdf(at) - f.cdf_left(at) > 0.0;
    match (functional, law) {
        (Functional::Quantile { .. } | Functional::QuantileEs { .. }, Distribution::Scalar(f)) => has_atom(f, x[0]),
        (Functional::VarCovar { .. }, Distribution::Bivariate(f)) => {
            f.marginal(0).map(|m| has_atom(&m, x[0])).unwrap_or(false)
                || matches!(f.conditional_second_atoms(x[0]), Some(Ok(c)) if has_atom(&c, x[1]))
        }
        _ => false,
    }
}

struct LawOutcome {
    forward: usize,
    reverse: usize,
    monte_carlo: usize,
    worst_zero: Option<(f64, Vec<f64>)>,
    smallest_margin: Option<(f64, Vec<f64>)>,
    failures: Vec<Failure>,
}

/// Checks `x in T(F) <=> V(x, F) = 0` over a family and a grid of action points.
pub fn verify_identification(
    v: &dyn IdentificationFunction,
    functional: &Functional,
    family: &Family,
    grid: &XGrid,
    config: &VerifyConfig,
) -> Result<VerificationReport> {
    if family.laws.is_empty() || (grid.offsets.is_empty() && grid.points.is_empty()) {
        return Err(Error::InvalidParameter("family and grid must be nonempty".into()));
    }
    if functional.dim() != v.action_dim() {
        return Err(Error::DimensionMismatch { expected: v.action_dim(), got: functional.dim() });
    }
    if let Some(o) = grid.offsets.iter().chain(&grid.points).find(|o| o.len() != v.action_dim()) {
        return Err(Error::DimensionMismatch { expected: v.action_dim(), got: o.len() });
    }
    let non_strict = v.dim() < v.action_dim();
    let outcomes = par::map(&family.laws, |law| verify_law(v, functional, law, grid, config, non_strict));

    let mut report = VerificationReport {
        key: v.key(),
        functional: functional.name(),
        family: family.name.clone(),
        distributions: family.laws.len(),
        grid_offsets: grid.offsets.len() + grid.points.len(),
        forward_checked: 0,
        reverse_checked: 0,
        monte_carlo_checked: 0,
        worst_zero: None,
        smallest_margin: None,
        failures: Vec::new(),
        flagged: 0,
        unflagged: 0,
        passed: false,
    };
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let o = outcome?;
        report.forward_checked += o.forward;
        report.reverse_checked += o.reverse;
        report.monte_carlo_checked += o.monte_carlo;
        if let Some((value, x)) = o.worst_zero {
            if report.worst_zero.as_ref().map_or(true, |w| value > w.value) {
                report.worst_zero = Some(Extreme { value, x, distribution: i });
            }
        }
        if let Some((value, x)) = o.smallest_margin {
            if report.smallest_margin.as_ref().map_or(true, |w| value < w.value) {
                report.smallest_margin = Some(Extreme { value, x, distribution: i });
            }
        }
        report.failures.extend(o.failures);
    }
    report.flagged = report.failures.iter().filter(|f| f.flag.is_some()).count();
    report.unflagged = report.failures.len() - report.flagged;
    report.passed = report.unflagged == 0;
    Ok(report)
}

fn verify_law(
    v: &dyn IdentificationFunction,
    functional: &Functional,
    law: &Distribution,
    grid: &XGrid,
    config: &VerifyConfig,
    non_strict: bool,
) -> Result<LawOutcome> {
    let truth = functional.value(law)?;
    let mut out = LawOutcome {
        forward: 0,
        reverse: 0,
        monte_carlo: 0,
        worst_zero: None,
        smallest_margin: None,
        failures: Vec::new(),
    };
    let fail = |property, x: &[f64], value: Vec<f64>, flag| Failure {
        property,
        x: x.to_vec(),
        distribution: law.clone(),
        norm: sup_norm(&value),
        value,
        flag,
    };

    for x in truth_points(&truth) {
        let value = v.expected(&x, law)?;
        let norm = sup_norm(&value);
        out.forward += 1;
        if norm > config.tol {
            let flag = atom_at_quantile(functional, law, &x).then_some(ExpectedFailure::QuantileAtom);
            if flag.is_none() {
                update_max(&mut out.worst_zero, norm, &x);
            }
            out.failures.push(fail(Property::Forward, &x, value, flag));
        } else {
            update_max(&mut out.worst_zero, norm, &x);
        }
    }

    if let Some(mc) = config.monte_carlo {
        let x: Vec<f64> = truth.iter().map(|t| t.lo).collect();
        let closed = v.expected(&x, law)?;
        let est = expected_monte_carlo(v, &x, law, mc.draws, mc.seed)?;
        out.monte_carlo += 1;
        if !est.covers(&closed, mc.z, 1e-12) {
            out.failures.push(fail(Property::MonteCarlo, &x, est.mean, None));
        }
    }

    let lower: Vec<f64> = truth.iter().map(|t| t.lo).collect();
    let domain = v.domain();
    let shifted = grid.offsets.iter().map(|o| lower.iter().zip(o).map(|(a, b)| a + b).collect::<Vec<f64>>());
    let candidates: Vec<Vec<f64>> = shifted.chain(grid.points.iter().cloned()).collect();
    for x in candidates.iter().filter(|x| domain.contains(x)) {
        if config.exclusion.excludes(&truth, x) {
            continue;
        }
        let value = v.expected(x, law)?;
        let norm = sup_norm(&value);
        out.reverse += 1;
        update_min(&mut out.smallest_margin, norm, x);
        if !(norm > config.margin) {
            let flag = non_strict.then_some(ExpectedFailure::NonStrict);
            out.failures.push(fail(Property::Reverse, x, value, flag));
        }
    }

    if non_strict {
        for x in probe_level_curve(v, law, &candidates, config.tol)? {
            if !config.exclusion.excludes(&truth, &x) && domain.contains(&x) {
                let value = v.expected(&x, law)?;
                out.reverse += 1;
                out.failures.push(fail(Property::Reverse, &x, value, Some(ExpectedFailure::NonStrict)));
            }
        }
    }
    Ok(out)
}

fn update_max(slot: &mut Option<(f64, Vec<f64>)>, value: f64, x: &[f64]) {
    if slot.as_ref().map_or(true, |(v, _)| value > *v) {
        *slot = Some((value, x.to_vec()));
    }
}

fn update_min(slot: &mut Option<(f64, Vec<f64>)>, value: f64, x: &[f64]) {
    if slot.as_ref().map_or(true, |(v, _)| value < *v) {
        *slot = Some((value, x.to_vec()));
    }
}

/// For a scalar moment of a 2-d action, fixes `x1` at each distinct grid value
/// and solves for a zero along `x2`.
fn probe_level_curve(
    v: &dyn IdentificationFunction,
    law: &Distribution,
    candidates: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    if v.dim() != 1 || v.action_dim() != 2 {
        return Ok(Vec::new());
    }
    let mut firsts: Vec<f64> = candidates.iter().map(|x| x[0]).collect();
    firsts.sort_by(f64::total_cmp);
    firsts.dedup();
    let centre = candidates.iter().map(|x| x[1]).sum::<f64>() / candidates.len() as f64;
    let mut zeros = Vec::new();
    for x1 in firsts {
        let g = |x2: f64| v.expected(&[x1, x2], law).map(|e| e[0]);
        let (a, b) = (centre - 8.0, centre + 8.0);
        let (ga, gb) = (g(a)?, g(b)?);
        if ga.signum() == gb.signum() || ga == 0.0 || gb == 0.0 {
            continue;
        }
        let up = gb > 0.0;
        let root = bisect_predicate(a, b, |x2| g(x2).map(|val| (val >= 0.0) == up).unwrap_or(false));
        let x = vec![x1, root];
        if sup_norm(&v.expected(&x, law)?) <= tol {
            zeros.push(x);
        }
    }
    Ok(zeros)
}
