use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, StandardNormal, StudentT};
use statrs::distribution::StudentsT;
use statrs::function::beta::{beta_reg, ln_beta};

use super::{normal, Interval};
use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// One point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Family {
    Normal { mean: f64, variance: f64 },
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
    StudentT { dof: f64, location: f64, scale: f64 },
    /// Sorted by value, no duplicates, positive masses, with running sums.
    Atoms { atoms: Vec<Atom>, cumulative: Vec<f64> },
    Mixture(Vec<(f64, ScalarDistribution)>),
}

/// A univariate law with exact (closed-form or exactly summed) functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarDistribution {
    pub(crate) family: Family,
}

const SUM_TOL: f64 = 1e-12;

fn positive_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("{name} must be finite, got {v}")))
    }
}

impl ScalarDistribution {
    /// Gaussian law parameterised by mean and **variance**.
    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        finite("mean", mean)?;
        positive_finite("variance", variance)?;
        Ok(Self { family: Family::Normal { mean, variance } })
    }

    pub fn standard_normal() -> Self {
        Self { family: Family::Normal { mean: 0.0, variance: 1.0 } }
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        positive_finite("rate", rate)?;
        Ok(Self { family: Family::Exponential { rate } })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        finite("low", low)?;
        finite("high", high)?;
        if high <= low {
            return Err(Error::InvalidDistribution(format!("uniform needs low < high, got [{low}, {high}]")));
        }
        Ok(Self { family: Family::Uniform { low, high } })
    }

    /// Location-scale Student-t.
    pub fn student_t(dof: f64, location: f64, scale: f64) -> Result<Self> {
        positive_finite("degrees of freedom", dof)?;
        finite("location", location)?;
        positive_finite("scale", scale)?;
        Ok(Self { family: Family::StudentT { dof, location, scale } })
    }

    /// Finitely supported law; atoms at equal locations are merged.
    pub fn atoms(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        let mut atoms: Vec<Atom> = Vec::with_capacity(points.len());
        for &(value, prob) in points {
            finite("atom location", value)?;
            if !(prob.is_finite() && prob >= 0.0) {
                return Err(Error::InvalidDistribution(format!("atom probability must be nonnegative, got {prob}")));
            }
            atoms.push(Atom { value, prob });
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!("atom probabilities sum to {total}, not 1")));
        }
        atoms.sort_by(|a, b| a.value.total_cmp(&b.value));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.value == a.value => last.prob += a.prob,
                _ => merged.push(a),
            }
        }
        merged.retain(|a| a.prob > 0.0);
        let mut cumulative = Vec::with_capacity(merged.len());
        let mut acc = 0.0;
        for a in &merged {
            acc += a.prob;
            cumulative.push(acc);
        }
        Ok(Self { family: Family::Atoms { atoms: merged, cumulative } })
    }

    /// Dirac measure at `y`.
    pub fn point_mass(y: f64) -> Result<Self> {
        Self::atoms(&[(y, 1.0)])
    }

    pub fn mixture(components: Vec<(f64, ScalarDistribution)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution("empty mixture".into()));
        }
        let mut total = 0.0;
        for (w, _) in &components {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidDistribution(format!("mixture weight must be nonnegative, got {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { family: Family::Mixture(components) })
    }

    /// The convex combination `(1 - lambda) F + lambda G`.
    pub fn mix(&self, other: &ScalarDistribution, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("mixing weight must lie in [0, 1], got {lambda}")));
        }
        Self::mixture(vec![(1.0 - lambda, self.clone()), (lambda, other.clone())])
    }

    pub fn family_name(&self) -> &'static str {
        match &self.family {
            Family::Normal { .. } => "normal",
            Family::Exponential { .. } => "exponential",
            Family::Uniform { .. } => "uniform",
            Family::StudentT { .. } => "student-t",
            Family::Atoms { .. } => "discrete-atoms",
            Family::Mixture(_) => "mixture",
        }
    }

    pub fn as_atoms(&self) -> Option<&[Atom]> {
        match &self.family {
            Family::Atoms { atoms, .. } => Some(atoms),
            _ => None,
        }
    }

    pub fn components(&self) -> Option<&[(f64, ScalarDistribution)]> {
        match &self.family {
            Family::Mixture(c) => Some(c),
            _ => None,
        }
    }

    /// True when the law has no atoms anywhere.
    pub fn is_continuous(&self) -> bool {
        match &self.family {
            Family::Atoms { .. } => false,
            Family::Mixture(c) => c.iter().all(|(w, d)| *w == 0.0 || d.is_continuous()),
            _ => true,
        }
    }

    /// `P(Y <= y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        if y.is_nan() {
            return f64::NAN;
        }
        match &self.family {
            Family::Normal { mean, variance } => normal::cdf((y - mean) / variance.sqrt()),
            Family::Exponential { rate } => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-rate * y).exp_m1()
                }
            }
            Family::Uniform { low, high } => ((y - low) / (high - low)).clamp(0.0, 1.0),
            Family::StudentT { dof, location, scale } => student_cdf(*dof, (y - location) / scale),
            Family::Atoms { atoms, cumulative } => {
                let idx = atoms.partition_point(|a| a.value <= y);
                if idx == 0 {
                    0.0
                } else {
                    cumulative[idx - 1]
                }
            }
            Family::Mixture(c) => c.iter().map(|(w, d)| w * d.cdf(y)).sum(),
        }
    }

    /// `P(Y < y)`, the left limit of the CDF.
    pub fn cdf_left(&self, y: f64) -> f64 {
        match &self.family {
            Family::Atoms { atoms, cumulative } => {
                let idx = atoms.partition_point(|a| a.value < y);
                if idx == 0 {
                    0.0
                } else {
                    cumulative[idx - 1]
                }
            }
            Family::Mixture(c) => c.iter().map(|(w, d)| w * d.cdf_left(y)).sum(),
            _ => self.cdf(y),
        }
    }

    /// The set `{x : F(x-) <= alpha <= F(x)}` as a closed interval.
    pub fn quantile_set(&self, alpha: f64) -> Result<Interval> {
        check_level(alpha)?;
        let interval = match &self.family {
            Family::Normal { mean, variance } => Interval::point(mean + variance.sqrt() * normal::quantile(alpha)),
            Family::Exponential { rate } => Interval::point(-(-alpha).ln_1p() / rate),
            Family::Uniform { low, high } => Interval::point(low + alpha * (high - low)),
            // the library inverse panics for levels near 0 or 1
            Family::StudentT { .. } => {
                let (a, b) = self.bracket(alpha);
                Interval::point(bisect_predicate(a, b, |x| self.cdf(x) >= alpha))
            }
            Family::Atoms { atoms, cumulative } => {
                let lo = cumulative.partition_point(|&c| c < alpha);
                let hi = cumulative.partition_point(|&c| c <= alpha);
                let last = atoms.len() - 1;
                Interval::new(atoms[lo.min(last)].value, atoms[hi.min(last)].value)
            }
            Family::Mixture(_) => self.quantile_set_by_bisection(alpha),
        };
        Ok(interval)
    }

    /// Generalized inverse `inf{x : F(x) >= u}`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        Ok(self.quantile_set(u)?.lo)
    }

    /// Lower quantile `VaR_alpha = inf q_alpha(F)`.
    pub fn var_lower(&self, alpha: f64) -> Result<f64> {
        self.quantile(alpha)
    }

    fn bracket(&self, alpha: f64) -> (f64, f64) {
        let (mut a, mut b) = (-1.0f64, 1.0f64);
        while self.cdf(a) >= alpha && a > -1e300 {
            a *= 2.0;
        }
        while self.cdf(b) < alpha && b < 1e300 {
            b *= 2.0;
        }
        (a, b)
    }

    fn quantile_set_by_bisection(&self, alpha: f64) -> Interval {
        let (a0, b0) = self.bracket(alpha);
        let lo = bisect_predicate(a0, b0, |x| self.cdf(x) >= alpha);
        // F(lo-) <= alpha, so the search for the first x with F(x-) > alpha starts at lo
        let mut b = b0.max(next_float(lo));
        while self.cdf_left(b) <= alpha && b < 1e300 {
            b = if b > 0.0 { b * 2.0 } else { 1.0 };
        }
        let first_above = bisect_predicate(lo, b, |x| self.cdf_left(x) > alpha);
        Interval::new(lo, prev_float(first_above).max(lo))
    }

    pub fn mean(&self) -> Result<f64> {
        match &self.family {
            Family::Normal { mean, .. } => Ok(*mean),
            Family::Exponential { rate } => Ok(1.0 / rate),
            Family::Uniform { low, high } => Ok(0.5 * (low + high)),
            Family::StudentT { dof, location, .. } => {
                if *dof > 1.0 {
                    Ok(*location)
                } else {
                    Err(Error::UnsupportedMoment { family: "student-t", order: 1 })
                }
            }
            Family::Atoms { atoms, .. } => Ok(atoms.iter().map(|a| a.value * a.prob).sum()),
            Family::Mixture(c) => {
                let mut m = 0.0;
                for (w, d) in c {
                    m += w * d.mean()?;
                }
                Ok(m)
            }
        }
    }

    pub fn variance(&self) -> Result<f64> {
        match &self.family {
            Family::Normal { variance, .. } => Ok(*variance),
            Family::Exponential { rate } => Ok(1.0 / (rate * rate)),
            Family::Uniform { low, high } => Ok((high - low).powi(2) / 12.0),
            Family::StudentT { dof, scale, .. } => {
                if *dof > 2.0 {
                    Ok(scale * scale * dof / (dof - 2.0))
                } else {
                    Err(Error::UnsupportedMoment { family: "student-t", order: 2 })
                }
            }
            Family::Atoms { atoms, .. } => {
                let m = self.mean()?;
                Ok(atoms.iter().map(|a| a.prob * (a.value - m).powi(2)).sum())
            }
            Family::Mixture(c) => {
                let m = self.mean()?;
                let mut v = 0.0;
                for (w, d) in c {
                    v += w * (d.variance()? + (d.mean()? - m).powi(2));
                }
                Ok(v)
            }
        }
    }

    /// Truncated first moment `E[Y 1{Y <= c}]`.
    pub fn partial_expectation(&self, c: f64) -> Result<f64> {
        if c == f64::INFINITY {
            return self.mean();
        }
        match &self.family {
            Family::Normal { mean, variance } => {
                let sd = variance.sqrt();
                if c == f64::NEG_INFINITY {
                    return Ok(0.0);
                }
                let z = (c - mean) / sd;
                Ok(mean * normal::cdf(z) - sd * normal::pdf(z))
            }
            Family::Exponential { rate } => {
                if c <= 0.0 {
                    Ok(0.0)
                } else {
                    let t = rate * c;
                    Ok((-(-t).exp_m1() - t * (-t).exp()) / rate)
                }
            }
            Family::Uniform { low, high } => {
                let t = c.clamp(*low, *high);
                Ok((t * t - low * low) / (2.0 * (high - low)))
            }
            Family::StudentT { dof, location, scale } => {
                if *dof <= 1.0 {
                    return Err(Error::UnsupportedMoment { family: "student-t", order: 1 });
                }
                if c == f64::NEG_INFINITY {
                    return Ok(0.0);
                }
                let t = student(*dof);
                let z = (c - location) / scale;
                let density = statrs::distribution::Continuous::pdf(&t, z);
                let tail = -(dof + z * z) / (dof - 1.0) * density;
                Ok(location * student_cdf(*dof, z) + scale * tail)
            }
            Family::Atoms { atoms, .. } => {
                Ok(atoms.iter().take_while(|a| a.value <= c).map(|a| a.value * a.prob).sum())
            }
            Family::Mixture(comp) => {
                let mut s = 0.0;
                for (w, d) in comp {
                    s += w * d.partial_expectation(c)?;
                }
                Ok(s)
            }
        }
    }

    /// Expected Shortfall as the average of lower quantiles over `(0, alpha)`.
    pub fn es_lower(&self, alpha: f64) -> Result<f64> {
        check_level(alpha)?;
        self.mean()?;
        match &self.family {
            Family::Atoms { atoms, cumulative } => {
                let mut acc = 0.0;
                let mut below = 0.0;
                for (a, &cum) in atoms.iter().zip(cumulative) {
                    let take = cum.min(alpha) - below;
                    if take > 0.0 {
                        acc += a.value * take;
                    }
                    if cum >= alpha {
                        break;
                    }
                    below = cum;
                }
                Ok(acc / alpha)
            }
            Family::Uniform { low, high } => Ok(low + 0.5 * alpha * (high - low)),
            _ => {
                let breaks = self.level_breakpoints(alpha);
                let quantile = |b: f64| self.quantile(b).unwrap_or(f64::NAN);
                let r = integrate(quantile, 0.0, alpha, &breaks, 1e-12, 1e-13)?;
                Ok(r.value / alpha)
            }
        }
    }

    /// Expected Shortfall via the truncated expectation plus the correction
    /// for an atom at `VaR_alpha`.
    pub fn es_truncated(&self, alpha: f64) -> Result<f64> {
        check_level(alpha)?;
        let var = self.var_lower(alpha)?;
        let pe = self.partial_expectation(var)?;
        Ok(pe / alpha - var / alpha * (self.cdf(var) - alpha))
    }

    /// Probability levels in `(0, alpha)` where the quantile function jumps or flattens.
    pub(crate) fn level_breakpoints(&self, alpha: f64) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_support_points(&mut out);
        let mut levels: Vec<f64> = out
            .into_iter()
            .flat_map(|x| [self.cdf_left(x), self.cdf(x)])
            .filter(|u| *u > 0.0 && *u < alpha)
            .collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        levels
    }

    fn collect_support_points(&self, out: &mut Vec<f64>) {
        match &self.family {
            Family::Atoms { atoms, .. } => out.extend(atoms.iter().map(|a| a.value)),
            Family::Uniform { low, high } => out.extend([*low, *high]),
            Family::Exponential { .. } => out.push(0.0),
            Family::Mixture(c) => c.iter().for_each(|(_, d)| d.collect_support_points(out)),
            _ => {}
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::Normal { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + variance.sqrt() * z
            }
            Family::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Family::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
            Family::StudentT { dof, location, scale } => {
                location + scale * StudentT::new(*dof).expect("validated dof").sample(rng)
            }
            Family::Atoms { atoms, cumulative } => {
                let u: f64 = rng.gen();
                let idx = cumulative.partition_point(|&c| c <= u);
                atoms[idx.min(atoms.len() - 1)].value
            }
            Family::Mixture(c) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (w, d) in c {
                    acc += w;
                    if u < acc {
                        return d.sample_with(rng);
                    }
                }
                let (_, last) = c.iter().rev().find(|(w, _)| *w > 0.0).expect("positive weight");
                last.sample_with(rng)
            }
        }
    }

    /// `n` draws from a fresh generator seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_with(&mut rng)).collect()
    }
}

pub(crate) fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {alpha}")))
    }
}

/// Near the centre the textbook form `I_{v/(v+t^2)}(v/2, 1/2)` rounds its
/// argument to 1, so small `|t|` goes through the complementary integral.
fn student_cdf(dof: f64, t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let t2 = t * t;
    if t2 < dof {
        let x = t2 / (dof + t2);
        let half = 0.5 * if x < 1e-10 { beta_reg_small(0.5, 0.5 * dof, x) } else { beta_reg(0.5, 0.5 * dof, x) };
        if t < 0.0 {
            0.5 - half
        } else {
            0.5 + half
        }
    } else {
        let tail = 0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + t2));
        if t < 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }
}

/// Leading terms of `I_x(a, b)` for tiny `x`, where the library routine
/// underflows to zero.
fn beta_reg_small(a: f64, b: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    (a * x.ln() - ln_beta(a, b)).exp() / a * (1.0 + a * (1.0 - b) / (a + 1.0) * x)
}

fn student(dof: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, dof).expect("validated dof")
}

pub(crate) fn next_float(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

pub(crate) fn prev_float(x: f64) -> f64 {
    -next_float(-x)
}

/// Smallest float in `(a, b]` where a monotone predicate (false at `a`,
/// true at `b`) becomes true, resolved to adjacent floats.
pub(crate) fn bisect_predicate<P: Fn(f64) -> bool>(mut a: f64, mut b: f64, pred: P) -> f64 {
    for _ in 0..4096 {
        let mid = a + 0.5 * (b - a);
        if mid <= a || mid >= b {
            break;
        }
        if pred(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    b
}
