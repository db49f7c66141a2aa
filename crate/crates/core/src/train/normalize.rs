use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Min-max target scaling fitted on the training split, in mD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub k_min: f64,
    pub k_max: f64,
}

impl NormStats {
    pub fn new(k_min: f64, k_max: f64) -> Result<Self> {
        let s = NormStats { k_min, k_max };
        s.validate()?;
        Ok(s)
    }

    /// Extremes of `values`; fails when they coincide.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot fit normalization on an empty split".into()));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        NormStats::new(lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.k_min.is_finite() || !self.k_max.is_finite() || self.k_max <= self.k_min {
            return Err(Error::Degenerate(format!(
                "normalization range [{}, {}] is empty",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.k_max - self.k_min
    }

    /// No clamping: values outside the training range map outside `[0, 1]`.
    pub fn normalize(&self, k: f64) -> f64 {
        (k - self.k_min) / self.span()
    }

    pub fn denormalize(&self, t: f64) -> f64 {
        self.k_min + t * self.span()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_extrapolation() {
        let s = NormStats::new(20.0, 200.0).unwrap();
        assert_eq!(s.normalize(20.0), 0.0);
        assert_eq!(s.normalize(200.0), 1.0);
        assert!(s.normalize(380.0) > 1.0);
        assert!(s.normalize(-5.0) < 0.0);
    }

    #[test]
    fn degenerate_range() {
        assert!(matches!(NormStats::new(3.0, 3.0), Err(Error::Degenerate(_))));
        assert!(NormStats::fit(&[1.0, 1.0]).is_err());
        assert!(NormStats::fit(&[]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(lo in -1e3f64..1e3, span in 1e-3f64..1e4, k in -1e4f64..1e4) {
            let s = NormStats::new(lo, lo + span).unwrap();
            let back = s.denormalize(s.normalize(k));
            let scale = k.abs().max(lo.abs()).max(span).max(1.0);
            prop_assert!((back - k).abs() <= 1e-12 * scale);
        }
    }
}
