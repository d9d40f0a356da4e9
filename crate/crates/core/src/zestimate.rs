//! Z-estimation: roots of the empirical moment `(1/n) sum_i V(x, y_i)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::catalog::{ActionDomain, IdentificationFunction};
use crate::distributions::{bisect_predicate, next_float};
use crate::error::{Error, Result};
use crate::osband::{apply_transform, MatrixTransform};
use crate::par;

pub const DEFAULT_TOL: f64 = 1e-9;
const CHUNK: usize = 2048;

/// Observations stored row-major with `dim` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    data: Vec<f64>,
    dim: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::InsufficientData { n: data.len() / dim.max(1), k: 0 });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite observation {bad}")));
        }
        Ok(Self { data, dim })
    }

    pub fn scalar(data: Vec<f64>) -> Result<Self> {
        Self::new(data, 1)
    }

    pub fn pairs(data: &[[f64; 2]]) -> Result<Self> {
        Self::new(data.iter().flatten().copied().collect(), 2)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.dim).copied()
    }
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// `(1/n) sum_i V(x, y_i)`, with `bandwidth > 0` ramp-smoothing the indicators.
fn moment(v: &dyn IdentificationFunction, x: &[f64], sample: &Sample, bandwidth: f64) -> Result<Vec<f64>> {
    Ok(moment_parts(v, x, sample, bandwidth)?.0)
}

/// Means and a bound on their summation error. Chunks are summed in parallel
/// and combined pairwise in a fixed order.
///
/// For `h(x) V` the average of `V` is taken first. Off-diagonal terms drop
/// components that are zero to within summation error, so that `V` and `h V`
/// share their exact zeros.
fn moment_parts(
    v: &dyn IdentificationFunction,
    x: &[f64],
    sample: &Sample,
    bandwidth: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if sample.dim() != v.obs_dim() {
        return Err(Error::DimensionMismatch { expected: v.obs_dim(), got: sample.dim() });
    }
    if let Some(t) = v.as_transformed() {
        let (m, err) = moment_parts(t.base().as_ref(), x, sample, bandwidth)?;
        let h = t.transform().evaluate(x)?;
        let k = m.len();
        let mut out = vec![0.0; k];
        let mut bound = vec![0.0; k];
        for i in 0..k {
            out[i] = h[(i, i)] * m[i];
            bound[i] = (h[(i, i)] * err[i]).abs();
            for j in (0..k).filter(|&j| j != i) {
                if m[j].abs() > err[j] {
                    out[i] += h[(i, j)] * m[j];
                }
                bound[i] += (h[(i, j)] * err[j]).abs();
            }
        }
        return Ok((out, bound));
    }
    let k = v.dim();
    let n = sample.len();
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let chunks = par::map(&starts, |&s| -> Result<Vec<(f64, f64)>> {
        let end = (s + CHUNK).min(n);
        let mut cols = vec![Vec::with_capacity(end - s); k];
        let mut abs = vec![0.0; k];
        let mut buf = vec![0.0; k];
        for i in s..end {
            if bandwidth > 0.0 {
                v.evaluate_smoothed_into(x, sample.row(i), bandwidth, &mut buf)?;
            } else {
                v.evaluate_into(x, sample.row(i), &mut buf)?;
            }
            for ((c, a), b) in cols.iter_mut().zip(&mut abs).zip(&buf) {
                c.push(*b);
                *a += b.abs();
            }
        }
        Ok(cols.iter().zip(abs).map(|(c, a)| (pairwise_sum(c), a)).collect())
    });
    let sums = chunks.into_iter().collect::<Result<Vec<_>>>()?;
    let nf = n as f64;
    let gamma = 4.0 * (nf.log2().ceil() + 2.0) * f64::EPSILON;
    let mean = (0..k).map(|j| pairwise_sum(&sums.iter().map(|s| s[j].0).collect::<Vec<_>>()) / nf).collect();
    let err = (0..k).map(|j| gamma * sums.iter().map(|s| s[j].1).sum::<f64>() / nf).collect();
    Ok((mean, err))
}

pub fn empirical_moment(v: &dyn IdentificationFunction, x: &[f64], sample: &Sample) -> Result<Vec<f64>> {
    moment(v, x, sample, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootKind {
    /// The moment is within tolerance of zero at the estimate.
    Exact,
    /// The moment jumps over zero at the estimate; no exact root exists.
    SignChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bisection,
    Sequential,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZEstimate {
    pub estimate: Vec<f64>,
    /// Per coordinate, `[lo, hi)` when the moment vanishes on a whole interval;
    /// the estimate is then `lo`.
    pub interval: Vec<Option<[f64; 2]>>,
    pub residual: f64,
    pub root: RootKind,
    pub method: Method,
    pub iterations: usize,
    /// Per coordinate, whether the estimate sits on the boundary of the action domain.
    pub boundary: Vec<bool>,
    pub in_domain: bool,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Bisection in one dimension, sequential plug-in for triangular systems,
    /// Newton otherwise.
    Auto,
    Newton,
}

#[derive(Debug, Clone, Copy)]
struct Root1d {
    estimate: f64,
    interval: Option<[f64; 2]>,
    kind: RootKind,
    residual: f64,
    evaluations: usize,
}

/// Root of a monotone (either direction) step or continuous function.
/// `centre` and `width` seed a bracket that is doubled until `g` changes sign.
fn solve_1d<G: Fn(f64) -> Result<f64>>(g: G, centre: f64, width: f64, tol: f64) -> Result<Root1d> {
    let mut w = width.max(1e-3 * (1.0 + centre.abs()));
    let (mut a, mut b, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0);
    let mut found = false;
    for _ in 0..80 {
        a = centre - w;
        b = centre + w;
        ga = g(a)?;
        gb = g(b)?;
        if (ga < -tol && gb > tol) || (ga > tol && gb < -tol) {
            found = true;
            break;
        }
        w *= 2.0;
    }
    if !found {
        return Err(Error::EmptyRoot);
    }
    let s = if ga < 0.0 { 1.0 } else { -1.0 };
    let _ = gb;
    let evals = std::cell::Cell::new(2usize);
    let h = |t: f64| -> f64 {
        evals.set(evals.get() + 1);
        g(t).map(|v| s * v).unwrap_or(f64::NAN)
    };
    let lo = bisect_predicate(a, b, |t| h(t) >= -tol);
    let hi = bisect_predicate(lo, b, |t| h(t) > tol).max(lo);
    let at_lo = h(lo);
    let (estimate, interval) = if hi > next_float(lo) {
        let mid = lo + 0.5 * (hi - lo);
        let at_mid = h(mid);
        if (at_mid - at_lo).abs() <= 1e-12 && at_lo.abs() <= tol {
            (lo, Some([lo, hi]))
        } else {
            // continuous crossing: locate the first float with h >= 0
            let first = if at_lo >= 0.0 { lo } else { bisect_predicate(lo, hi, |t| h(t) >= 0.0) };
            (first, None)
        }
    } else {
        (lo, None)
    };
    let value = h(estimate);
    if value.is_nan() {
        return Err(Error::NonConverged { residual: f64::NAN });
    }
    let kind = if value.abs() <= tol { RootKind::Exact } else { RootKind::SignChange };
    Ok(Root1d { estimate, interval, kind, residual: value.abs(), evaluations: evals.get() })
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, c| m.max(c.abs()))
}

/// Location and spread of each observation column, used to seed brackets.
fn column_stats(sample: &Sample) -> Vec<(f64, f64, f64)> {
    (0..sample.dim())
        .map(|j| {
            let col: Vec<f64> = sample.column(j).collect();
            let mean = pairwise_sum(&col) / col.len() as f64;
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            (mean, lo, hi)
        })
        .collect()
}

fn start_point(domain: ActionDomain, k: usize, sample: &Sample) -> Vec<f64> {
    let stats = column_stats(sample);
    let (m1, lo1, hi1) = stats[0];
    let spread = (hi1 - lo1).max(1e-3);
    match (domain, k) {
        (_, 1) => vec![m1],
        (ActionDomain::HalfSpace, _) => vec![lo1 + 0.1 * spread, lo1],
        _ if sample.dim() >= k => stats.iter().take(k).map(|s| s.0).collect(),
        _ => {
            let col: Vec<f64> = sample.column(0).map(|y| (y - m1).powi(2)).collect();
            vec![m1, pairwise_sum(&col) / col.len() as f64]
        }
    }
}

fn boundary_flags(domain: ActionDomain, x: &[f64]) -> Vec<bool> {
    match domain {
        ActionDomain::Euclidean(k) => vec![false; k],
        ActionDomain::MeanVariance => vec![false, x[1] == 0.0],
        ActionDomain::HalfSpace => {
            let b = x[0] == x[1];
            vec![b, b]
        }
    }
}

/// Solves the empirical moment conditions of `v` on `sample`.
pub fn z_estimate(v: &dyn IdentificationFunction, sample: &Sample, tol: f64, seed: u64) -> Result<ZEstimate> {
    z_estimate_with(v, sample, tol, seed, Strategy::Auto)
}

pub fn z_estimate_with(
    v: &dyn IdentificationFunction,
    sample: &Sample,
    tol: f64,
    seed: u64,
    strategy: Strategy,
) -> Result<ZEstimate> {
    let k = v.dim();
    if k != v.action_dim() {
        return Err(Error::Underdetermined { moments: k, parameters: v.action_dim() });
    }
    if sample.dim() != v.obs_dim() {
        return Err(Error::DimensionMismatch { expected: v.obs_dim(), got: sample.dim() });
    }
    let domain = v.domain();
    let stats = column_stats(sample);
    let spread = stats.iter().map(|s| s.2 - s.1).fold(0.0, f64::max).max(1e-3);

    let (estimate, roots, method, iterations) = match strategy {
        Strategy::Auto if k == 1 => {
            let r = solve_1d(|t| Ok(empirical_moment(v, &[t], sample)?[0]), stats[0].0, spread, tol)?;
            (vec![r.estimate], vec![r], Method::Bisection, r.evaluations)
        }
        Strategy::Auto if v.is_triangular() => {
            let (x, roots) = sequential(v, sample, &start_point(domain, k, sample), spread, tol)?;
            let it = roots.iter().map(|r| r.evaluations).sum();
            (x, roots, Method::Sequential, it)
        }
        _ => {
            let (x, roots, it) = newton(v, sample, domain, spread, tol)?;
            (x, roots, Method::Newton, it)
        }
    };
    let residual = sup_norm(&empirical_moment(v, &estimate, sample)?);
    let root = if roots.iter().all(|r| r.kind == RootKind::Exact) && residual <= tol {
        RootKind::Exact
    } else {
        RootKind::SignChange
    };
    Ok(ZEstimate {
        interval: roots.iter().map(|r| r.interval).collect(),
        boundary: boundary_flags(domain, &estimate),
        in_domain: domain.contains(&estimate),
        estimate,
        residual,
        root,
        method,
        iterations,
        n: sample.len(),
        seed,
    })
}

/// Coordinate `i` from moment component `i`, earlier coordinates plugged in.
fn sequential(
    v: &dyn IdentificationFunction,
    sample: &Sample,
    start: &[f64],
    spread: f64,
    tol: f64,
) -> Result<(Vec<f64>, Vec<Root1d>)> {
    let k = v.dim();
    let mut x = start.to_vec();
    let mut roots = Vec::with_capacity(k);
    for i in 0..k {
        let r = {
            let g = |t: f64| {
                let mut z = x.clone();
                z[i] = t;
                Ok(empirical_moment(v, &z, sample)?[i])
            };
            solve_1d(g, x[i], spread, tol)?
        };
        x[i] = r.estimate;
        roots.push(r);
    }
    Ok((x, roots))
}

fn jacobian(v: &dyn IdentificationFunction, sample: &Sample, x: &[f64], bandwidth: f64) -> Result<DMatrix<f64>> {
    let k = x.len();
    let mut j = DMatrix::zeros(k, k);
    for c in 0..k {
        let step = 1e-6 * (1.0 + x[c].abs());
        let (mut up, mut down) = (x.to_vec(), x.to_vec());
        up[c] += step;
        down[c] -= step;
        let (mu, md) = (moment(v, &up, sample, bandwidth)?, moment(v, &down, sample, bandwidth)?);
        for r in 0..k {
            j[(r, c)] = (mu[r] - md[r]) / (2.0 * step);
        }
    }
    Ok(j)
}

/// Damped Newton on the smoothed moment with bandwidth `range / sqrt(n)`,
/// halved twice, then a coordinatewise polish of the unsmoothed moment
/// preconditioned by the inverse smoothed Jacobian.
fn newton(
    v: &dyn IdentificationFunction,
    sample: &Sample,
    domain: ActionDomain,
    spread: f64,
    tol: f64,
) -> Result<(Vec<f64>, Vec<Root1d>, usize)> {
    let k = v.dim();
    let mut x = start_point(domain, k, sample);
    let delta0 = spread / (sample.len() as f64).sqrt();
    let mut iterations = 0;
    let mut bandwidth = delta0;
    let mut precondition = DMatrix::identity(k, k);
    for round in 0..3 {
        if round > 0 {
            bandwidth *= 0.5;
        }
        for _ in 0..100 {
            iterations += 1;
            let m = moment(v, &x, sample, bandwidth)?;
            let norm = DVector::from_vec(m.clone()).norm();
            if sup_norm(&m) <= 0.1 * tol {
                break;
            }
            let j = jacobian(v, sample, &x, bandwidth)?;
            let Some(step) = j.clone().lu().solve(&DVector::from_vec(m)) else { break };
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a - t * d).collect();
                let mc = moment(v, &cand, sample, bandwidth)?;
                if DVector::from_vec(mc).norm() < norm {
                    x = cand;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if let Some(inv) = jacobian(v, sample, &x, bandwidth)?.try_inverse() {
            precondition = inv;
        }
    }

    // unsmoothed polish
    let mut roots = Vec::new();
    for _sweep in 0..4 {
        roots.clear();
        for i in 0..k {
            let p = &precondition;
            let r = {
                let g = |t: f64| -> Result<f64> {
                    let mut z = x.clone();
                    z[i] = t;
                    let m = empirical_moment(v, &z, sample)?;
                    Ok((0..k).map(|c| p[(i, c)] * m[c]).sum())
                };
                solve_1d(g, x[i], 8.0 * delta0, tol)?
            };
            iterations += r.evaluations;
            x[i] = r.estimate;
            roots.push(r);
        }
        let residual = sup_norm(&empirical_moment(v, &x, sample)?);
        if residual <= tol {
            return Ok((x, roots, iterations));
        }
    }
    if roots.iter().all(|r| r.kind == RootKind::SignChange || r.residual <= tol) {
        return Ok((x, roots, iterations));
    }
    Err(Error::NonConverged { residual: sup_norm(&empirical_moment(v, &x, sample)?) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootInvariance {
    /// The two exact root sets coincide (both empty counts).
    pub identical: bool,
    /// Neither system has an exact root; the solvers only found sign changes.
    pub vacuous: bool,
    pub original: ZEstimate,
    pub transformed: ZEstimate,
    /// Residual of the transformed moment at the original root, and vice versa.
    pub cross_residuals: [f64; 2],
}

/// Solves with `V` and with `h V` and compares the exact root sets. Sign-change
/// estimates are not roots, and `h` mixes the nonzero components, so two
/// sign-change estimates may differ while both root sets are empty.
pub fn root_invariance_check(
    v: crate::catalog::SharedIdFn,
    h: MatrixTransform,
    sample: &Sample,
    tol: f64,
) -> Result<RootInvariance> {
    let t = apply_transform(h, v.clone())?;
    let original = z_estimate(v.as_ref(), sample, tol, 0)?;
    let transformed = z_estimate(&t, sample, tol, 0)?;
    let cross = [
        sup_norm(&empirical_moment(&t, &original.estimate, sample)?),
        sup_norm(&empirical_moment(v.as_ref(), &transformed.estimate, sample)?),
    ];
    let identical = match (original.root, transformed.root) {
        (RootKind::Exact, RootKind::Exact) => {
            original.estimate == transformed.estimate
                && original.interval == transformed.interval
                && cross.iter().all(|c| *c <= tol)
        }
        (RootKind::SignChange, RootKind::SignChange) => true,
        _ => false,
    };
    let vacuous = original.root == RootKind::SignChange && transformed.root == RootKind::SignChange;
    Ok(RootInvariance { identical, vacuous, original, transformed, cross_residuals: cross })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;

    fn five() -> Sample {
        Sample::scalar(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap()
    }

    #[test]
    fn empirical_moment_examples() {
        assert_eq!(empirical_moment(&Catalog::Mean, &[3.0], &five()).unwrap(), vec![0.0]);
        let q = empirical_moment(&Catalog::Quantile { alpha: 0.4 }, &[2.0], &five()).unwrap();
        assert!(q[0].abs() < 1e-15);
        let qe = empirical_moment(&Catalog::QuantileEs { alpha: 0.4 }, &[2.0, 1.5], &five()).unwrap();
        assert!(qe[0].abs() < 1e-15 && qe[1].abs() < 1e-15, "{qe:?}");
    }

    #[test]
    fn estimate_examples() {
        let m = z_estimate(&Catalog::Mean, &five(), DEFAULT_TOL, 0).unwrap();
        assert_eq!((m.estimate.clone(), m.residual, m.root), (vec![3.0], 0.0, RootKind::Exact));
        let qe = z_estimate(&Catalog::QuantileEs { alpha: 0.4 }, &five(), DEFAULT_TOL, 0).unwrap();
        assert_eq!(qe.estimate, vec![2.0, 1.5]);
        assert_eq!(qe.interval, vec![Some([2.0, 3.0]), None]);
        assert_eq!(qe.method, Method::Sequential);
        let mv = z_estimate(&Catalog::MeanVar, &five(), DEFAULT_TOL, 0).unwrap();
        assert_eq!(mv.estimate, vec![3.0, 2.0]);
    }

    #[test]
    fn sign_change_quantile() {
        let r = z_estimate(&Catalog::Quantile { alpha: 0.5 }, &five(), DEFAULT_TOL, 0).unwrap();
        assert_eq!(r.estimate, vec![3.0]);
        assert_eq!(r.root, RootKind::SignChange);
    }

    #[test]
    fn degenerate_sample_hits_boundary() {
        let s = Sample::scalar(vec![2.5; 7]).unwrap();
        let r = z_estimate(&Catalog::MeanVar, &s, DEFAULT_TOL, 0).unwrap();
        assert_eq!(r.estimate, vec![2.5, 0.0]);
        assert_eq!(r.boundary, vec![false, true]);
        let q = z_estimate(&Catalog::Quantile { alpha: 0.3 }, &s, DEFAULT_TOL, 0).unwrap();
        assert_eq!(q.estimate, vec![2.5]);
    }

    #[test]
    fn covar_1d_is_underdetermined() {
        let s = Sample::pairs(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let r = z_estimate(&Catalog::Covar1d { alpha: 0.1, beta: 0.1 }, &s, DEFAULT_TOL, 0);
        assert!(matches!(r, Err(Error::Underdetermined { .. })));
    }

    #[test]
    fn newton_agrees_with_sequential() {
        let y = crate::distributions::ScalarDistribution::normal(1.0, 4.0).unwrap().sample(1000, 7);
        let s = Sample::scalar(y).unwrap();
        for c in [Catalog::MeanVar, Catalog::QuantileEs { alpha: 0.05 }, Catalog::QuantileEsPrime { alpha: 0.1 }] {
            let a = z_estimate_with(&c, &s, DEFAULT_TOL, 0, Strategy::Auto).unwrap();
            let b = z_estimate_with(&c, &s, DEFAULT_TOL, 0, Strategy::Newton).unwrap();
            assert_eq!(a.method, Method::Sequential);
            for (p, q) in a.estimate.iter().zip(&b.estimate) {
                assert!((p - q).abs() < 1e-8, "{c:?}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn modified_mean_var_uses_newton() {
        let r = z_estimate(&Catalog::MeanVarModified, &five(), DEFAULT_TOL, 0).unwrap();
        assert_eq!(r.method, Method::Newton);
        assert!((r.estimate[0] - 3.0).abs() < 1e-9 && (r.estimate[1] - 2.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn root_invariance_examples() {
        let r = root_invariance_check(
            Catalog::QuantileEs { alpha: 0.4 }.shared(),
            MatrixTransform::QuantileEsExample { alpha: 0.4 },
            &five(),
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(r.identical, "{r:?}");
        assert_eq!(r.transformed.estimate, vec![2.0, 1.5]);
        let r = root_invariance_check(Catalog::MeanVar.shared(), MatrixTransform::MeanVarExample, &five(), DEFAULT_TOL)
            .unwrap();
        assert!(r.identical, "{r:?}");
        assert_eq!(r.transformed.estimate, vec![3.0, 2.0]);
        let r = root_invariance_check(Catalog::Mean.shared(), MatrixTransform::Identity(1), &five(), DEFAULT_TOL).unwrap();
        assert!(r.identical);
    }

    #[test]
    fn rotation_falls_back_to_newton_and_keeps_the_root() {
        let rot = MatrixTransform::constant(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let t = apply_transform(rot, Catalog::MeanVar.shared()).unwrap();
        let r = z_estimate(&t, &five(), DEFAULT_TOL, 0).unwrap();
        assert_eq!(r.method, Method::Newton);
        assert!((r.estimate[0] - 3.0).abs() < 1e-9 && (r.estimate[1] - 2.0).abs() < 1e-9, "{r:?}");
    }
}
