use serde::{Deserialize, Serialize};

/// Admissible forecast/parameter vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionDomain {
    /// All of `R^k`.
    Euclidean(usize),
    /// `{(x1, x2) : x1 >= x2}`, the (quantile, ES) domain.
    HalfSpace,
    /// `R x [0, inf)`, the (mean, variance) domain.
    MeanVariance,
}

impl ActionDomain {
    pub fn dim(&self) -> usize {
        match self {
            ActionDomain::Euclidean(k) => *k,
            ActionDomain::HalfSpace | ActionDomain::MeanVariance => 2,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || !x.iter().all(|v| v.is_finite()) {
            return false;
        }
        match self {
            ActionDomain::Euclidean(_) => true,
            ActionDomain::HalfSpace => x[0] >= x[1],
            ActionDomain::MeanVariance => x[1] >= 0.0,
        }
    }

    pub fn contains_interior(&self, x: &[f64]) -> bool {
        self.contains(x)
            && match self {
                ActionDomain::Euclidean(_) => true,
                ActionDomain::HalfSpace => x[0] > x[1],
                ActionDomain::MeanVariance => x[1] > 0.0,
            }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_is_member_not_interior() {
        let d = ActionDomain::HalfSpace;
        assert!(d.contains(&[1.0, 1.0]));
        assert!(!d.contains_interior(&[1.0, 1.0]));
        assert!(d.contains_interior(&[1.0, 0.5]));
        assert!(!d.contains(&[0.0, 0.5]));
        let mv = ActionDomain::MeanVariance;
        assert!(mv.contains(&[3.0, 0.0]) && !mv.contains_interior(&[3.0, 0.0]));
        assert!(!mv.contains(&[3.0, -1.0]));
        assert!(!ActionDomain::Euclidean(1).contains(&[1.0, 2.0]));
    }
}
