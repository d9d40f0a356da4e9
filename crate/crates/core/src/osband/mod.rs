//! Matrix transforms `h(x) V(x, y)` of identification functions and the
//! numerical recovery of `h` from a pair of identification functions.

mod battery;
mod transform;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use battery::{perturbation_battery, Battery};
pub use transform::{apply_transform, grid_points, MatrixTransform, TabulatedTransform, Transformed};

use crate::catalog::IdentificationFunction;
use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::par;

pub const MAX_BATTERY_CONDITION: f64 = 1e8;
pub const SIMPLEX_VOLUME_TOL: f64 = 1e-10;
pub const BARYCENTRIC_CUTOFF: f64 = 1e-9;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullRank {
    pub full_rank: bool,
    pub determinant: f64,
}

pub fn is_full_rank(h: &MatrixTransform, x: &[f64], tol: f64) -> Result<FullRank> {
    let determinant = h.determinant(x)?;
    Ok(FullRank { full_rank: determinant.abs() > tol, determinant })
}

/// A matrix `M` with `M V(x, F_i) = V'(x, F_i)` on the solve battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredTransform {
    pub x: Vec<f64>,
    /// Row-major.
    pub matrix: Vec<Vec<f64>>,
    pub determinant: f64,
    pub condition: f64,
    /// Max-norm misfit over the held-out laws; absent with exactly `k` laws.
    pub heldout_residual: Option<f64>,
}

impl RecoveredTransform {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let k = self.matrix.len();
        DMatrix::from_fn(k, k, |i, j| self.matrix[i][j])
    }
}

fn columns(v: &dyn IdentificationFunction, x: &[f64], laws: &[Distribution]) -> Result<DMatrix<f64>> {
    let k = v.dim();
    let mut m = DMatrix::zeros(k, laws.len());
    for (j, f) in laws.iter().enumerate() {
        let e = v.expected(x, f)?;
        if e.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDistribution(format!("non-finite expectation under {}", f.describe())));
        }
        m.set_column(j, &DVector::from_vec(e));
    }
    Ok(m)
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().svd(false, false).singular_values;
    let (max, min) = s.iter().fold((0.0_f64, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Solves for `M` from the first `k` laws and reports the held-out misfit of
/// the remaining ones without judging it.
pub fn solve_h(
    v: &dyn IdentificationFunction,
    v_prime: &dyn IdentificationFunction,
    x: &[f64],
    battery: &[Distribution],
) -> Result<RecoveredTransform> {
    let k = v.dim();
    if v_prime.dim() != k {
        return Err(Error::DimensionMismatch { expected: k, got: v_prime.dim() });
    }
    if battery.len() < k {
        return Err(Error::DimensionMismatch { expected: k, got: battery.len() });
    }
    let (solve, heldout) = battery.split_at(k);
    let a = columns(v, x, solve)?;
    let b = columns(v_prime, x, solve)?;
    let condition = condition_number(&a);
    if !(condition < MAX_BATTERY_CONDITION) {
        return Err(Error::SingularBattery { condition });
    }
    // M A = B  <=>  A^T M^T = B^T
    let mt = a
        .transpose()
        .lu()
        .solve(&b.transpose())
        .ok_or(Error::SingularBattery { condition: f64::INFINITY })?;
    let m = mt.transpose();
    let heldout_residual = if heldout.is_empty() {
        None
    } else {
        let ah = columns(v, x, heldout)?;
        let bh = columns(v_prime, x, heldout)?;
        Some((&m * ah - bh).amax())
    };
    Ok(RecoveredTransform {
        x: x.to_vec(),
        matrix: (0..k).map(|i| m.row(i).iter().copied().collect()).collect(),
        determinant: m.determinant(),
        condition,
        heldout_residual,
    })
}

/// [`solve_h`], failing with `InconsistentPair` when the held-out residual
/// exceeds `tol`.
pub fn recover_h(
    v: &dyn IdentificationFunction,
    v_prime: &dyn IdentificationFunction,
    x: &[f64],
    battery: &[Distribution],
    tol: f64,
) -> Result<RecoveredTransform> {
    let r = solve_h(v, v_prime, x, battery)?;
    match r.heldout_residual {
        Some(residual) if !(residual <= tol) => Err(Error::InconsistentPair { residual, tol }),
        _ => Ok(r),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct V1Check {
    pub interior: bool,
    /// Barycentric coordinates of the origin, one per law.
    pub barycentric: Vec<f64>,
    /// Expected values `V(x, F_i)`.
    pub values: Vec<Vec<f64>>,
    /// Simplex volume after scaling each coordinate to unit max-norm.
    pub volume: f64,
}

/// Whether the origin lies in the interior of the simplex spanned by the
/// `k + 1` expected values.
pub fn check_v1(v: &dyn IdentificationFunction, x: &[f64], battery: &[Distribution]) -> Result<V1Check> {
    let k = v.dim();
    if battery.len() != k + 1 {
        return Err(Error::DimensionMismatch { expected: k + 1, got: battery.len() });
    }
    let points = columns(v, x, battery)?;
    let mut scaled = points.clone();
    for i in 0..k {
        let s = scaled.row(i).amax();
        if s == 0.0 {
            return Err(Error::DegenerateSimplex { volume: 0.0 });
        }
        scaled.row_mut(i).scale_mut(1.0 / s);
    }
    let edges = DMatrix::from_fn(k, k, |i, j| scaled[(i, j)] - scaled[(i, k)]);
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    let volume = edges.determinant().abs() / factorial;
    if !(volume > SIMPLEX_VOLUME_TOL) {
        return Err(Error::DegenerateSimplex { volume });
    }
    let mut system = DMatrix::from_element(k + 1, k + 1, 1.0);
    system.view_mut((0, 0), (k, k + 1)).copy_from(&scaled);
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let lambda = system.lu().solve(&rhs).ok_or(Error::DegenerateSimplex { volume })?;
    let barycentric: Vec<f64> = lambda.iter().copied().collect();
    Ok(V1Check {
        interior: barycentric.iter().all(|&l| l > BARYCENTRIC_CUTOFF),
        barycentric,
        values: (0..=k).map(|j| points.column(j).iter().copied().collect()).collect(),
        volume,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseDeviation {
    pub max_deviation: f64,
    /// Grid point attaining the maximum (first one on ties).
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// `max ||V'(x, y) - h(x) V(x, y)||_inf` over the grid product.
pub fn pointwise_osband_check(
    v: &dyn IdentificationFunction,
    v_prime: &dyn IdentificationFunction,
    h: &MatrixTransform,
    x_grid: &[Vec<f64>],
    y_grid: &[Vec<f64>],
) -> Result<PointwiseDeviation> {
    let k = v.dim();
    if v_prime.dim() != k || h.dim() != k {
        return Err(Error::DimensionMismatch { expected: k, got: v_prime.dim().max(h.dim()) });
    }
    let per_x = par::map(x_grid, |x| -> Result<(f64, usize)> {
        let m = h.evaluate(x)?;
        let (mut a, mut b) = (vec![0.0; k], vec![0.0; k]);
        let mut best = (-1.0, 0);
        for (j, y) in y_grid.iter().enumerate() {
            v.evaluate_into(x, y, &mut a)?;
            v_prime.evaluate_into(x, y, &mut b)?;
            let dev = (0..k)
                .map(|i| (b[i] - (0..k).map(|l| m[(i, l)] * a[l]).sum::<f64>()).abs())
                .fold(0.0, f64::max);
            if dev > best.0 {
                best = (dev, j);
            }
        }
        Ok(best)
    });
    let mut out = PointwiseDeviation { max_deviation: 0.0, x: Vec::new(), y: Vec::new() };
    let mut found = false;
    for (i, r) in per_x.into_iter().enumerate() {
        let (dev, j) = r?;
        if dev >= 0.0 && (!found || dev > out.max_deviation) {
            found = true;
            out = PointwiseDeviation { max_deviation: dev, x: x_grid[i].clone(), y: y_grid[j].clone() };
        }
    }
    Ok(out)
}

/// One grid point of a recovery sweep; failed points carry the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: Vec<f64>,
    pub recovered: Option<RecoveredTransform>,
    pub error: Option<String>,
    /// Condition number when the failure was a singular battery.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_condition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySweep {
    pub rows: Vec<SweepRow>,
    pub max_residual: f64,
    pub determinant_sign_constant: bool,
    /// True when every point recovered and every residual is within `tol`.
    pub consistent: bool,
}

impl RecoverySweep {
    /// CSV with columns `x1..xk, det, residual`; failed rows leave the last two empty.
    pub fn to_csv(&self) -> String {
        let k = self.rows.first().map_or(0, |r| r.x.len());
        let mut out: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
        out.extend(["det".to_string(), "residual".to_string()]);
        let mut s = out.join(",") + "\n";
        for row in &self.rows {
            let mut cells: Vec<String> = row.x.iter().map(|v| v.to_string()).collect();
            match &row.recovered {
                Some(r) => {
                    cells.push(r.determinant.to_string());
                    cells.push(r.heldout_residual.map(|v| v.to_string()).unwrap_or_default());
                }
                None => cells.extend([String::new(), String::new()]),
            }
            s += &(cells.join(",") + "\n");
        }
        s
    }
}

/// Runs [`solve_h`] at every grid point with the battery built for that point.
pub fn sweep_recover_h<B>(
    v: &dyn IdentificationFunction,
    v_prime: &dyn IdentificationFunction,
    grid: &[Vec<f64>],
    battery: B,
    tol: f64,
) -> RecoverySweep
where
    B: Fn(&[f64]) -> Result<Vec<Distribution>> + Sync + Send,
{
    let rows: Vec<SweepRow> = par::map(grid, |x| match battery(x).and_then(|b| solve_h(v, v_prime, x, &b)) {
        Ok(r) => SweepRow { x: x.clone(), recovered: Some(r), error: None, singular_condition: None },
        Err(e) => SweepRow {
            x: x.clone(),
            recovered: None,
            singular_condition: match e {
                Error::SingularBattery { condition } => Some(condition),
                _ => None,
            },
            error: Some(e.to_string()),
        },
    });
    let recovered: Vec<&RecoveredTransform> = rows.iter().filter_map(|r| r.recovered.as_ref()).collect();
    let max_residual = recovered.iter().filter_map(|r| r.heldout_residual).fold(0.0, f64::max);
    let determinant_sign_constant = determinant_sign_constant(recovered.iter().map(|r| r.determinant));
    let consistent = recovered.len() == rows.len()
        && recovered.iter().all(|r| r.heldout_residual.map_or(true, |v| v <= tol));
    RecoverySweep { rows, max_residual, determinant_sign_constant, consistent }
}

/// True when all determinants are nonzero and share one sign.
pub fn determinant_sign_constant(dets: impl IntoIterator<Item = f64>) -> bool {
    let mut sign = 0.0;
    for d in dets {
        if d == 0.0 || !d.is_finite() {
            return false;
        }
        if sign == 0.0 {
            sign = d.signum();
        } else if d.signum() != sign {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, Functional};
    use crate::distributions::ScalarDistribution;

    fn n(m: f64, v: f64) -> Distribution {
        ScalarDistribution::normal(m, v).unwrap().into()
    }

    #[test]
    fn full_rank_examples() {
        let r = is_full_rank(&MatrixTransform::MeanVarExample, &[3.0, 1.0], 1e-12).unwrap();
        assert!(r.full_rank && r.determinant == 1.0);
        let s = MatrixTransform::constant(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let r = is_full_rank(&s, &[0.0, 0.0], 1e-12).unwrap();
        assert!(!r.full_rank && r.determinant == 0.0);
        let rot = MatrixTransform::constant(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let r = is_full_rank(&rot, &[0.0, 0.0], 1e-12).unwrap();
        assert!(r.full_rank && r.determinant == 1.0);
    }

    #[test]
    fn recover_hand_solved_system() {
        let r = recover_h(&Catalog::MeanVar, &Catalog::MeanVarPrime, &[2.0, 3.0], &[n(0.0, 1.0), n(1.0, 2.0)], 1e-6)
            .unwrap();
        let expect = [[1.0, 0.0], [4.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.matrix[i][j] - expect[i][j]).abs() < 1e-12);
            }
        }
        assert_eq!(r.heldout_residual, None);
    }

    #[test]
    fn self_recovery_is_identity() {
        let b = perturbation_battery(&Functional::QuantileEs { alpha: 0.1 }, &[-1.0, -1.5], 0.25).unwrap();
        let r = recover_h(&Catalog::QuantileEs { alpha: 0.1 }, &Catalog::QuantileEs { alpha: 0.1 }, &[-1.0, -1.5], &b.all(), 1e-6)
            .unwrap();
        let m = r.to_matrix();
        assert!((m - DMatrix::identity(2, 2)).amax() < 1e-9);
    }

    #[test]
    fn mean_and_median_are_inconsistent_on_location_scale_class() {
        let battery = [n(0.5, 1.0), n(-0.5, 4.0), n(0.5, 9.0)];
        let r = recover_h(&Catalog::Mean, &Catalog::Quantile { alpha: 0.5 }, &[0.0], &battery, 1e-6);
        assert!(matches!(r, Err(Error::InconsistentPair { .. })), "{r:?}");
    }

    #[test]
    fn singular_battery() {
        let r = recover_h(&Catalog::MeanVar, &Catalog::MeanVarPrime, &[0.0, 1.0], &[n(1.0, 1.0), n(1.0, 1.0)], 1e-6);
        assert!(matches!(r, Err(Error::SingularBattery { .. })));
    }

    #[test]
    fn v1_hand_examples() {
        let c = check_v1(&Catalog::Mean, &[0.0], &[n(1.0, 1.0), n(-1.0, 1.0)]).unwrap();
        assert!(c.interior);
        assert!((c.barycentric[0] - 0.5).abs() < 1e-12 && (c.barycentric[1] - 0.5).abs() < 1e-12);

        let c = check_v1(&Catalog::Mean, &[0.0], &[n(1.0, 1.0), n(2.0, 1.0)]).unwrap();
        assert!(!c.interior);
        assert!((c.barycentric[0] - 2.0).abs() < 1e-12 && (c.barycentric[1] + 1.0).abs() < 1e-12);

        let x = [0.0, 1.0];
        let c = check_v1(&Catalog::MeanVar, &x, &[n(1.0, 1.0), n(-1.0, 1.0), n(0.0, 3.0)]).unwrap();
        assert!(!c.interior);
        let c = check_v1(&Catalog::MeanVar, &x, &[n(1.0, 1.0), n(-1.0, 1.0), n(0.0, 0.25)]).unwrap();
        assert!(c.interior);
        let hand = [3.0 / 14.0, 3.0 / 14.0, 4.0 / 7.0];
        for (a, b) in c.barycentric.iter().zip(hand) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn v1_degenerate_and_wrong_size() {
        let r = check_v1(&Catalog::Mean, &[0.0], &[n(1.0, 1.0), n(1.0, 4.0)]);
        assert!(matches!(r, Err(Error::DegenerateSimplex { .. })));
        let r = check_v1(&Catalog::Mean, &[0.0], &[n(1.0, 1.0)]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pointwise_examples_vanish() {
        let xs = grid_points(&[vec![-2.0, 0.0, 1.5], vec![-3.0, 0.5, 2.0]]);
        let ys: Vec<Vec<f64>> = (-8..=8).map(|i| vec![i as f64 * 0.37]).collect();
        let d = pointwise_osband_check(&Catalog::MeanVar, &Catalog::MeanVarPrime, &MatrixTransform::MeanVarExample, &xs, &ys)
            .unwrap();
        assert!(d.max_deviation <= 1e-12);
        let a = 0.05;
        let d = pointwise_osband_check(
            &Catalog::QuantileEs { alpha: a },
            &Catalog::QuantileEsPrime { alpha: a },
            &MatrixTransform::QuantileEsExample { alpha: a },
            &xs,
            &ys,
        )
        .unwrap();
        assert!(d.max_deviation <= 1e-12);
        let d = pointwise_osband_check(&Catalog::MeanVar, &Catalog::MeanVar, &MatrixTransform::Identity(2), &xs, &ys).unwrap();
        assert_eq!(d.max_deviation, 0.0);
        // a wrong transform is caught
        let d = pointwise_osband_check(&Catalog::MeanVar, &Catalog::MeanVarPrime, &MatrixTransform::Identity(2), &xs, &ys)
            .unwrap();
        assert!(d.max_deviation > 1.0);
    }

    #[test]
    fn sweep_reports_csv_and_sign() {
        let grid = grid_points(&[vec![-1.0, 1.0], vec![0.5, 2.0]]);
        let s = sweep_recover_h(
            &Catalog::MeanVar,
            &Catalog::MeanVarPrime,
            &grid,
            |x| Ok(perturbation_battery(&Functional::MeanVariance, x, 0.25)?.all()),
            1e-6,
        );
        assert!(s.consistent && s.determinant_sign_constant);
        assert!(s.max_residual < 1e-9);
        let csv = s.to_csv();
        assert!(csv.starts_with("x1,x2,det,residual\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn sign_constancy() {
        assert!(determinant_sign_constant([1.0, 2.0, 0.5]));
        assert!(!determinant_sign_constant([1.0, -2.0]));
        assert!(!determinant_sign_constant([1.0, 0.0]));
    }
}
