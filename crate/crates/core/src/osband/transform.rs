use std::fmt;

use nalgebra::DMatrix;

use crate::catalog::{ActionDomain, Functional, IdentificationFunction, SharedIdFn};
use crate::distributions::Distribution;
use crate::error::{Error, Result};

/// A matrix-valued map `h: A -> R^{k x k}`.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixTransform {
    Identity(usize),
    Constant(DMatrix<f64>),
    /// `[[1, 0], [2 x1, 1]]`, turning the centred second moment into the raw one.
    MeanVarExample,
    /// `[[1, 0], [x1 / alpha, 1]]`, adding the ES correction term.
    QuantileEsExample { alpha: f64 },
    Tabulated(TabulatedTransform),
    /// `left(x) * right(x)`.
    Product(Box<MatrixTransform>, Box<MatrixTransform>),
}

impl MatrixTransform {
    pub fn constant(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParameter("constant transform must be a nonempty square matrix".into()));
        }
        Ok(MatrixTransform::Constant(DMatrix::from_fn(k, k, |i, j| rows[i][j])))
    }

    /// `c * I_k`.
    pub fn scalar(k: usize, c: f64) -> Self {
        MatrixTransform::Constant(DMatrix::identity(k, k) * c)
    }

    pub fn then(self, outer: MatrixTransform) -> Self {
        MatrixTransform::Product(Box::new(outer), Box::new(self))
    }

    /// Parses `identity`, `mean-var`, `quantile-es:<alpha>`, `scale:<c>` and
    /// `constant:<a11,a12,...>` (row-major) for a `k`-dimensional function.
    pub fn parse(key: &str, k: usize) -> Result<Self> {
        let (name, args) = match key.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (key.trim(), None),
        };
        let numbers = || -> Result<Vec<f64>> {
            args.ok_or_else(|| Error::UnknownKey(key.into()))?
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::UnknownKey(key.into())))
                .collect()
        };
        let h = match name {
            "identity" => MatrixTransform::Identity(k),
            "mean-var" => MatrixTransform::MeanVarExample,
            "quantile-es" => {
                let a = numbers()?;
                if a.len() != 1 || !(a[0] > 0.0 && a[0] < 1.0) {
                    return Err(Error::UnknownKey(key.into()));
                }
                MatrixTransform::QuantileEsExample { alpha: a[0] }
            }
            "scale" => {
                let c = numbers()?;
                if c.len() != 1 {
                    return Err(Error::UnknownKey(key.into()));
                }
                MatrixTransform::scalar(k, c[0])
            }
            "constant" => {
                let v = numbers()?;
                if v.len() != k * k {
                    return Err(Error::DimensionMismatch { expected: k * k, got: v.len() });
                }
                MatrixTransform::Constant(DMatrix::from_row_slice(k, k, &v))
            }
            _ => return Err(Error::UnknownKey(key.into())),
        };
        if h.dim() != k {
            return Err(Error::DimensionMismatch { expected: k, got: h.dim() });
        }
        Ok(h)
    }

    pub fn key(&self) -> String {
        match self {
            MatrixTransform::Identity(_) => "identity".into(),
            MatrixTransform::Constant(m) => {
                let entries: Vec<String> = m.transpose().iter().map(|v| format!("{v}")).collect();
                format!("constant:{}", entries.join(","))
            }
            MatrixTransform::MeanVarExample => "mean-var".into(),
            MatrixTransform::QuantileEsExample { alpha } => format!("quantile-es:{alpha}"),
            MatrixTransform::Tabulated(_) => "tabulated".into(),
            MatrixTransform::Product(a, b) => format!("({})*({})", a.key(), b.key()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MatrixTransform::Identity(k) => *k,
            MatrixTransform::Constant(m) => m.nrows(),
            MatrixTransform::MeanVarExample | MatrixTransform::QuantileEsExample { .. } => 2,
            MatrixTransform::Tabulated(t) => t.k,
            MatrixTransform::Product(a, _) => a.dim(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(match self {
            MatrixTransform::Identity(k) => DMatrix::identity(*k, *k),
            MatrixTransform::Constant(m) => m.clone(),
            MatrixTransform::MeanVarExample => DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0 * x[0], 1.0]),
            MatrixTransform::QuantileEsExample { alpha } => {
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, x[0] / alpha, 1.0])
            }
            MatrixTransform::Tabulated(t) => t.evaluate(x)?,
            MatrixTransform::Product(a, b) => a.evaluate(x)? * b.evaluate(x)?,
        })
    }

    pub fn determinant(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x)?.determinant())
    }

    pub fn is_lower_triangular(&self) -> bool {
        let lower = |m: &DMatrix<f64>| (0..m.nrows()).all(|i| (i + 1..m.ncols()).all(|j| m[(i, j)] == 0.0));
        match self {
            MatrixTransform::Identity(_) | MatrixTransform::MeanVarExample | MatrixTransform::QuantileEsExample { .. } => {
                true
            }
            MatrixTransform::Constant(m) => lower(m),
            MatrixTransform::Tabulated(t) => t.values.iter().all(lower),
            MatrixTransform::Product(a, b) => a.is_lower_triangular() && b.is_lower_triangular(),
        }
    }
}

/// Matrices given on a rectilinear grid over the action space and
/// interpolated multilinearly; points outside the grid are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedTransform {
    axes: Vec<Vec<f64>>,
    /// Row-major over grid nodes, last axis fastest.
    values: Vec<DMatrix<f64>>,
    k: usize,
}

impl TabulatedTransform {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<DMatrix<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.len() < 2 || a.windows(2).any(|w| !(w[0] < w[1]))) {
            return Err(Error::InvalidParameter("grid axes need at least two increasing nodes".into()));
        }
        let nodes: usize = axes.iter().map(Vec::len).product();
        if values.len() != nodes {
            return Err(Error::DimensionMismatch { expected: nodes, got: values.len() });
        }
        let k = values[0].nrows();
        if values.iter().any(|m| m.nrows() != k || m.ncols() != k) {
            return Err(Error::InvalidParameter("tabulated matrices must share one square shape".into()));
        }
        Ok(Self { axes, values, k })
    }

    /// Tabulates `h` at every node of the grid.
    pub fn from_transform(axes: Vec<Vec<f64>>, h: &MatrixTransform) -> Result<Self> {
        let nodes = grid_points(&axes);
        let values = nodes.iter().map(|x| h.evaluate(x)).collect::<Result<Vec<_>>>()?;
        Self::new(axes, values)
    }

    fn evaluate(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.axes.len() {
            return Err(Error::DimensionMismatch { expected: self.axes.len(), got: x.len() });
        }
        let mut cells = Vec::with_capacity(x.len());
        for (xi, axis) in x.iter().zip(&self.axes) {
            let (first, last) = (axis[0], axis[axis.len() - 1]);
            if !(*xi >= first && *xi <= last) {
                return Err(Error::OutsideGrid(x.to_vec()));
            }
            let j = axis.partition_point(|a| a <= xi).clamp(1, axis.len() - 1) - 1;
            let t = (xi - axis[j]) / (axis[j + 1] - axis[j]);
            cells.push((j, t));
        }
        let d = x.len();
        let mut out = DMatrix::zeros(self.k, self.k);
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut flat = 0;
            for (axis_idx, &(j, t)) in cells.iter().enumerate() {
                let upper = (corner >> (d - 1 - axis_idx)) & 1 == 1;
                weight *= if upper { t } else { 1.0 - t };
                flat = flat * self.axes[axis_idx].len() + j + usize::from(upper);
            }
            if weight != 0.0 {
                out += &self.values[flat] * weight;
            }
        }
        Ok(out)
    }
}

/// Cartesian product of the axes, last axis fastest.
pub fn grid_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

/// `V'(x, y) = h(x) V(x, y)`.
pub struct Transformed {
    base: SharedIdFn,
    h: MatrixTransform,
}

impl fmt::Debug for Transformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Transformed({})", self.key())
    }
}

impl Transformed {
    pub fn base(&self) -> &SharedIdFn {
        &self.base
    }

    pub fn transform(&self) -> &MatrixTransform {
        &self.h
    }
}

pub fn apply_transform(h: MatrixTransform, v: SharedIdFn) -> Result<Transformed> {
    if h.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: v.dim(), got: h.dim() });
    }
    Ok(Transformed { base: v, h })
}

fn multiply(h: &DMatrix<f64>, out: &mut [f64]) {
    let k = out.len();
    let v: Vec<f64> = out.to_vec();
    for i in 0..k {
        out[i] = (0..k).map(|j| h[(i, j)] * v[j]).sum();
    }
}

impl IdentificationFunction for Transformed {
    fn key(&self) -> String {
        format!("{}*{}", self.h.key(), self.base.key())
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn action_dim(&self) -> usize {
        self.base.action_dim()
    }

    fn obs_dim(&self) -> usize {
        self.base.obs_dim()
    }

    fn domain(&self) -> ActionDomain {
        self.base.domain()
    }

    fn evaluate_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        self.base.evaluate_into(x, y, out)?;
        multiply(&self.h.evaluate(x)?, out);
        Ok(())
    }

    fn evaluate_smoothed_into(&self, x: &[f64], y: &[f64], bandwidth: f64, out: &mut [f64]) -> Result<()> {
        self.base.evaluate_smoothed_into(x, y, bandwidth, out)?;
        multiply(&self.h.evaluate(x)?, out);
        Ok(())
    }

    fn expected(&self, x: &[f64], law: &Distribution) -> Result<Vec<f64>> {
        let mut v = self.base.expected(x, law)?;
        multiply(&self.h.evaluate(x)?, &mut v);
        Ok(v)
    }

    fn breakpoints(&self, x: &[f64]) -> Vec<f64> {
        self.base.breakpoints(x)
    }

    fn is_triangular(&self) -> bool {
        self.base.is_triangular() && self.h.is_lower_triangular()
    }

    fn functional(&self) -> Option<Functional> {
        self.base.functional()
    }

    fn as_transformed(&self) -> Option<&Transformed> {
        Some(self)
    }
}
