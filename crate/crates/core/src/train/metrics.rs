use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::Usage("metrics of an empty set".into()));
    }
    if truth.len() != pred.len() {
        return Err(Error::Usage(format!(
            "{} targets but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    Ok(())
}

/// Sum of squared errors.
pub fn sse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    Ok(truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum())
}

pub fn mse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    Ok(sse(truth, pred)? / truth.len() as f64)
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    Ok(mse(truth, pred)?.sqrt())
}

/// Coefficient of determination `1 - SSE / SST`. Undefined when every
/// target is equal.
pub fn r2(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Degenerate("R² is undefined for constant targets".into()));
    }
    Ok(1.0 - sse(truth, pred)? / sst)
}

/// Smallest and largest `|k - k̂| / |k|` over samples with `k != 0`.
pub fn relative_error_range(truth: &[f64], pred: &[f64]) -> Result<Option<(f64, f64)>> {
    check_pair(truth, pred)?;
    let errs: Vec<f64> = truth
        .iter()
        .zip(pred)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, p)| (t - p).abs() / t.abs())
        .collect();
    if errs.is_empty() {
        return Ok(None);
    }
    let lo = errs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errs.iter().copied().fold(0.0, f64::max);
    Ok(Some((lo, hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    #[serde(rename = "k_true_mD")]
    pub k_true_md: f64,
    #[serde(rename = "k_pred_mD")]
    pub k_pred_md: f64,
}

/// Evaluation summary in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r2: f64,
    #[serde(rename = "rmse_mD")]
    pub rmse_md: f64,
    /// Relative errors skip samples whose true permeability is zero;
    /// `null` when every sample has zero permeability.
    pub min_rel_err: Option<f64>,
    pub max_rel_err: Option<f64>,
    pub samples: Vec<Prediction>,
}

impl MetricsReport {
    pub fn from_predictions(samples: Vec<Prediction>) -> Result<Self> {
        let truth: Vec<f64> = samples.iter().map(|s| s.k_true_md).collect();
        let pred: Vec<f64> = samples.iter().map(|s| s.k_pred_md).collect();
        let range = relative_error_range(&truth, &pred)?;
        Ok(MetricsReport {
            r2: r2(&truth, &pred)?,
            rmse_md: rmse(&truth, &pred)?,
            min_rel_err: range.map(|r| r.0),
            max_rel_err: range.map(|r| r.1),
            samples,
        })
    }

    /// `id,k_true_mD,k_pred_mD` rows for scatter plots.
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("id,k_true_mD,k_pred_mD\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{}\n", s.id, s.k_true_md, s.k_pred_md));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_mean_predictors() {
        let k = [3.0, 7.0, 1.0, 9.0];
        assert_eq!(r2(&k, &k).unwrap(), 1.0);
        assert_eq!(rmse(&k, &k).unwrap(), 0.0);
        let mean = [5.0; 4];
        assert!(r2(&k, &mean).unwrap().abs() < 1e-15);
        assert!(r2(&k, &[0.0; 4]).unwrap() < 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(r2(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::Degenerate(_))));
        assert!(matches!(mse(&[], &[]), Err(Error::Usage(_))));
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn relative_errors_skip_zero_truth() {
        let r = relative_error_range(&[0.0, 2.0, 4.0], &[1.0, 1.0, 5.0]).unwrap();
        assert_eq!(r, Some((0.25, 0.5)));
        assert_eq!(relative_error_range(&[0.0], &[1.0]).unwrap(), None);
    }

    proptest! {
        #[test]
        fn rmse_squared_times_count_is_sse(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (t, p): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let lhs = rmse(&t, &p).unwrap().powi(2) * t.len() as f64;
            let rhs = sse(&t, &p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
        }

        #[test]
        fn r2_is_affine_invariant(
            v in prop::collection::vec((-10f64..10.0, -10f64..10.0), 3..30),
            scale in 0.1f64..100.0,
            shift in -1e3f64..1e3,
        ) {
            let (t, p): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            prop_assume!(t.iter().any(|x| (x - t[0]).abs() > 1e-3));
            let a = r2(&t, &p).unwrap();
            let ts: Vec<f64> = t.iter().map(|x| scale * x + shift).collect();
            let ps: Vec<f64> = p.iter().map(|x| scale * x + shift).collect();
            let b = r2(&ts, &ps).unwrap();
            prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
        }
    }
}
