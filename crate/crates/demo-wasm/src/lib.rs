//! Browser bindings: expectation curves, the expected-shortfall correction on
//! discrete laws, and the richness check for a battery of laws.

use osband_id::catalog::{parse_key, Catalog, IdentificationFunction};
use osband_id::distributions::{Distribution, ScalarDistribution};
use osband_id::osband::check_v1;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub key: String,
    /// The functional value of the law, when it has one.
    pub truth: Option<Vec<f64>>,
    /// Coordinates other than the first stay at these values.
    pub fixed: Vec<f64>,
    pub x: Vec<f64>,
    /// One series per moment component.
    pub components: Vec<Vec<f64>>,
}

fn law(json: &str) -> Result<Distribution, String> {
    serde_json::from_str(json).map_err(|e| format!("distribution: {e}"))
}

fn to_string<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// `V(x, F)` along the first action coordinate from `lo` to `hi`.
pub fn expectation_curve_json(key: &str, law_json: &str, lo: f64, hi: f64, steps: usize) -> Result<String, String> {
    if !(lo < hi) || steps < 2 {
        return Err("need lo < hi and at least two steps".into());
    }
    let v = parse_key(key).map_err(|e| e.to_string())?;
    let f = law(law_json)?;
    let truth = v.functional().and_then(|t| t.point(&f).ok());
    let fixed = match &truth {
        Some(t) => t[1..].to_vec(),
        None => vec![0.0; v.action_dim() - 1],
    };
    let mut x = Vec::with_capacity(steps);
    let mut components = vec![Vec::with_capacity(steps); v.dim()];
    for i in 0..steps {
        let x1 = lo + (hi - lo) * i as f64 / (steps - 1) as f64;
        let mut point = vec![x1];
        point.extend(&fixed);
        let e = v.expected(&point, &f).map_err(|e| e.to_string())?;
        for (c, val) in components.iter_mut().zip(e) {
            c.push(val);
        }
        x.push(x1);
    }
    to_string(&Curve { key: v.key(), truth, fixed, x, components })
}

#[derive(Debug, Serialize)]
pub struct EsCorrection {
    pub alpha: f64,
    pub var: f64,
    pub es: f64,
    /// `V(x, F)` for the plain quantile/ES pair at `x = (VaR, ES)`.
    pub plain: Vec<f64>,
    /// The same for the transformed pair.
    pub transformed: Vec<f64>,
}

/// Both quantile/ES functions at the true `(VaR, ES)` of a discrete law given
/// as `[[value, prob], ...]`.
pub fn es_correction_json(alpha: f64, atoms_json: &str) -> Result<String, String> {
    let raw: Vec<(f64, f64)> = serde_json::from_str(atoms_json).map_err(|e| format!("atoms: {e}"))?;
    let f = ScalarDistribution::atoms(&raw).map_err(|e| e.to_string())?;
    let var = f.var_lower(alpha).map_err(|e| e.to_string())?;
    let es = f.es_lower(alpha).map_err(|e| e.to_string())?;
    let law = Distribution::Scalar(f);
    let x = [var, es];
    let plain = Catalog::QuantileEs { alpha }.expected(&x, &law).map_err(|e| e.to_string())?;
    let transformed = Catalog::QuantileEsPrime { alpha }.expected(&x, &law).map_err(|e| e.to_string())?;
    to_string(&EsCorrection { alpha, var, es, plain, transformed })
}

/// Barycentric coordinates of the origin among `V(x, F_i)` for `k + 1` laws.
pub fn v1_check_json(key: &str, x_json: &str, battery_json: &str) -> Result<String, String> {
    let v = parse_key(key).map_err(|e| e.to_string())?;
    let x: Vec<f64> = serde_json::from_str(x_json).map_err(|e| format!("x: {e}"))?;
    let battery: Vec<Distribution> = serde_json::from_str(battery_json).map_err(|e| format!("battery: {e}"))?;
    let r = check_v1(v.as_ref(), &x, &battery).map_err(|e| e.to_string())?;
    to_string(&r)
}

#[wasm_bindgen]
pub fn expectation_curve(key: &str, law_json: &str, lo: f64, hi: f64, steps: usize) -> Result<String, JsValue> {
    expectation_curve_json(key, law_json, lo, hi, steps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn es_correction(alpha: f64, atoms_json: &str) -> Result<String, JsValue> {
    es_correction_json(alpha, atoms_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn v1_check(key: &str, x_json: &str, battery_json: &str) -> Result<String, JsValue> {
    v1_check_json(key, x_json, battery_json).map_err(|e| JsValue::from_str(&e))
}
