//! Standard normal helpers shared by the gaussian families.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal CDF on `(0, 1)`.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // one Halley step against the erfc-based CDF
    let e = cdf(z) - p;
    let u = e / pdf(z);
    z - u / (1.0 + 0.5 * z * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((quantile(0.05) + 1.644_853_626_951_472_7).abs() < 1e-14);
        assert!((quantile(0.9) - 1.281_551_565_544_600_4).abs() < 1e-14);
        assert!((cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        assert_eq!(cdf(0.0), 0.5);
    }
}
