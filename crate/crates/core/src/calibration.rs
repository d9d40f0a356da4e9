//! Wald-type calibration tests on moments `h(x_t) V(x_t, y_t)` and a Monte
//! Carlo harness for their size and power.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::catalog::{IdentificationFunction, SharedIdFn};
use crate::distributions::{bisect_predicate, Distribution};
use crate::error::{Error, Result};
use crate::osband::{apply_transform, MatrixTransform};
use crate::par;
use crate::zestimate::Sample;

pub const MAX_COVARIANCE_CONDITION: f64 = 1e10;
const EIGEN_FLOOR: f64 = 1e-12;

/// Paired forecasts and realisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    forecasts: Vec<Vec<f64>>,
    observations: Sample,
}

impl ForecastSeries {
    pub fn new(forecasts: Vec<Vec<f64>>, observations: Sample) -> Result<Self> {
        if forecasts.len() != observations.len() {
            return Err(Error::DimensionMismatch { expected: observations.len(), got: forecasts.len() });
        }
        let k = forecasts.first().map_or(0, Vec::len);
        if let Some(bad) = forecasts.iter().find(|f| f.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, got: bad.len() });
        }
        if forecasts.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite forecast".into()));
        }
        Ok(Self { forecasts, observations })
    }

    pub fn len(&self) -> usize {
        self.forecasts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forecasts.is_empty()
    }

    pub fn forecast(&self, t: usize) -> &[f64] {
        &self.forecasts[t]
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        self.observations.row(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub critical_value: f64,
    pub level: f64,
    pub reject: bool,
    pub n: usize,
    pub moment_means: Vec<f64>,
    pub condition_number: f64,
}

/// Regularized lower incomplete gamma `P(a, x)`: series below `a + 1`,
/// Lentz continued fraction for `Q` above.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum * log_prefix.exp()).min(1.0)
    } else {
        1.0 - gamma_q_fraction(a, x, log_prefix)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`, computed
/// directly in the upper tail to keep small p-values accurate.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < a + 1.0 {
        return 1.0 - gamma_p(a, x);
    }
    gamma_q_fraction(a, x, a * x.ln() - x - ln_gamma(a))
}

fn gamma_q_fraction(a: f64, x: f64, log_prefix: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (log_prefix.exp() * h).clamp(0.0, 1.0)
}

pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    gamma_q(0.5 * dof as f64, 0.5 * x)
}

/// Upper `level` quantile of the chi-square law with `dof` degrees of freedom.
pub fn chi_square_critical(level: f64, dof: usize) -> f64 {
    let mut hi = dof as f64 + 10.0;
    while chi_square_sf(hi, dof) > level {
        hi *= 2.0;
    }
    bisect_predicate(0.0, hi, |x| chi_square_sf(x, dof) <= level)
}

/// `n m' S^{-1} m` for the moments `m_t = h(x_t) V(x_t, y_t)`, `S` their
/// sample covariance, against chi-square with `k` degrees of freedom.
pub fn wald_calibration_test(
    v: &dyn IdentificationFunction,
    series: &ForecastSeries,
    level: f64,
    h: Option<&MatrixTransform>,
) -> Result<TestReport> {
    let k = v.dim();
    let n = series.len();
    if n <= k {
        return Err(Error::InsufficientData { n, k });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
    }
    if let Some(h) = h {
        if h.dim() != k {
            return Err(Error::DimensionMismatch { expected: k, got: h.dim() });
        }
    }
    let mut moments = DMatrix::zeros(k, n);
    let mut buf = vec![0.0; k];
    for t in 0..n {
        let x = series.forecast(t);
        v.evaluate_into(x, series.observation(t), &mut buf)?;
        let m = match h {
            Some(h) => h.evaluate(x)? * DVector::from_column_slice(&buf),
            None => DVector::from_column_slice(&buf),
        };
        moments.set_column(t, &m);
    }
    wald_from_moments(&moments, level)
}

/// The Wald statistic for moment columns `m_1, ..., m_n`.
pub fn wald_from_moments(moments: &DMatrix<f64>, level: f64) -> Result<TestReport> {
    let (k, n) = moments.shape();
    if n <= k {
        return Err(Error::InsufficientData { n, k });
    }
    let mean: DVector<f64> = moments.column_mean();
    let mut cov = DMatrix::zeros(k, k);
    for t in 0..n {
        let d = moments.column(t) - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    let eig = SymmetricEigen::new(cov.clone());
    let trace = cov.trace();
    let (lmax, lmin) = eig.eigenvalues.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(a, b), &l| (a.max(l), b.min(l)));
    let condition_number = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(trace > 0.0) || !(condition_number < MAX_COVARIANCE_CONDITION) {
        return Err(Error::SingularCovariance { condition: condition_number });
    }
    let floor = EIGEN_FLOOR * trace;
    let mut quad = 0.0;
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        let proj = eig.eigenvectors.column(i).dot(&mean);
        quad += proj * proj / l.max(floor);
    }
    let statistic = n as f64 * quad;
    let p_value = chi_square_sf(statistic, k);
    Ok(TestReport {
        statistic,
        dof: k,
        p_value,
        critical_value: chi_square_critical(level, k),
        level,
        reject: p_value < level,
        n,
        moment_means: mean.iter().copied().collect(),
        condition_number,
    })
}

/// One regime of a data-generating process: realisations are drawn from
/// `truth`, the forecast is either given or the functional value of `forecast_law`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioState {
    pub truth: Distribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast_law: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<Vec<f64>>,
}

/// States are visited cyclically, `t mod states.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub states: Vec<ScenarioState>,
}

impl Scenario {
    /// Forecasts equal to the functional of the true law in every state.
    pub fn correct(truths: Vec<Distribution>) -> Self {
        Scenario { states: truths.into_iter().map(|truth| ScenarioState { truth, forecast_law: None, forecast: None }).collect() }
    }

    fn forecasts(&self, v: &dyn IdentificationFunction) -> Result<Vec<Vec<f64>>> {
        if self.states.is_empty() {
            return Err(Error::InvalidParameter("scenario has no states".into()));
        }
        let functional = v.functional();
        self.states
            .iter()
            .map(|s| {
                let x = match (&s.forecast, &s.forecast_law) {
                    (Some(x), _) => x.clone(),
                    (None, law) => {
                        let f = functional.ok_or_else(|| Error::InvalidParameter("no functional for forecasts".into()))?;
                        f.point(law.as_ref().unwrap_or(&s.truth))?
                    }
                };
                if x.len() != v.action_dim() {
                    return Err(Error::DimensionMismatch { expected: v.action_dim(), got: x.len() });
                }
                if s.truth.obs_dim() != v.obs_dim() {
                    return Err(Error::DimensionMismatch { expected: v.obs_dim(), got: s.truth.obs_dim() });
                }
                Ok(x)
            })
            .collect()
    }

    /// `n` forecast/realisation pairs from a seeded generator.
    pub fn generate(&self, v: &dyn IdentificationFunction, n: usize, rng: &mut ChaCha8Rng) -> Result<ForecastSeries> {
        let forecasts = self.forecasts(v)?;
        self.generate_with(&forecasts, n, rng)
    }

    fn generate_with(&self, forecasts: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Result<ForecastSeries> {
        let s = self.states.len();
        let d = self.states[0].truth.obs_dim();
        let mut obs = Vec::with_capacity(n * d);
        let mut xs = Vec::with_capacity(n);
        for t in 0..n {
            let state = &self.states[t % s];
            match &state.truth {
                Distribution::Scalar(f) => obs.push(f.sample_with(rng)),
                Distribution::Bivariate(f) => obs.extend(f.sample_with(rng)),
            }
            xs.push(forecasts[t % s].clone());
        }
        ForecastSeries::new(xs, Sample::new(obs, d)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub h_key: String,
    pub rejection_rate: f64,
    pub se: f64,
    pub rejections: usize,
    pub replications: usize,
    /// Replications where the covariance was singular; counted as non-rejections.
    pub singular: usize,
    /// Kolmogorov distance of the p-values from the uniform law.
    pub ks_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub key: String,
    pub n: usize,
    pub level: f64,
    pub seed: u64,
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h_key,rejection_rate,se,rejections,replications,singular,ks_distance\n");
        for r in &self.rows {
            s += &format!(
                "{},{},{},{},{},{},{}\n",
                r.h_key, r.rejection_rate, r.se, r.rejections, r.replications, r.singular, r.ks_distance
            );
        }
        s
    }
}

pub fn ks_uniform(p_values: &[f64]) -> f64 {
    let mut p = p_values.to_vec();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &u)| ((i + 1) as f64 / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Rejection rates per transform over `replications` seeded data sets.
/// Replication `r` draws from stream `r` of a generator seeded with `seed`;
/// every transform sees the same data.
pub fn size_power_study(
    v: SharedIdFn,
    h_list: &[MatrixTransform],
    scenario: &Scenario,
    n: usize,
    replications: usize,
    level: f64,
    seed: u64,
) -> Result<StudyTable> {
    if h_list.is_empty() || replications == 0 {
        return Err(Error::InvalidParameter("need at least one transform and one replication".into()));
    }
    let transformed: Vec<SharedIdFn> = h_list
        .iter()
        .map(|h| apply_transform(h.clone(), v.clone()).map(|t| std::sync::Arc::new(t) as SharedIdFn))
        .collect::<Result<_>>()?;
    let forecasts = scenario.forecasts(v.as_ref())?;
    let reps: Vec<u64> = (0..replications as u64).collect();
    let outcomes = par::map(&reps, |&r| -> Result<Vec<Option<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r);
        let series = scenario.generate_with(&forecasts, n, &mut rng)?;
        transformed
            .iter()
            .map(|t| match wald_calibration_test(t.as_ref(), &series, level, None) {
                Ok(rep) => Ok(Some(rep.p_value)),
                Err(Error::SingularCovariance { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = h_list
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let p: Vec<f64> = outcomes.iter().filter_map(|o| o[j]).collect();
            let rejections = p.iter().filter(|&&pv| pv < level).count();
            let rate = rejections as f64 / replications as f64;
            StudyRow {
                h_key: h.key(),
                rejection_rate: rate,
                se: (rate * (1.0 - rate) / replications as f64).sqrt(),
                rejections,
                replications,
                singular: replications - p.len(),
                ks_distance: if p.is_empty() { 1.0 } else { ks_uniform(&p) },
            }
        })
        .collect();
    Ok(StudyTable { key: v.key(), n, level, seed, rows })
}
