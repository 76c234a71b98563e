use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::artifact::Regressor;
use crate::error::{MetricsError, StatsError};
use crate::preprocess::{Column, NormParams, Samples};
use crate::stats::{mean, pearson_r};

/// Hit-rate error margins in wt% P.
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.001, 0.002, 0.003, 0.004];

pub const SCALE_NOTE: &str =
    "mse, rmse, r2 and r use min-max normalized targets; hit rates use absolute errors in wt% P";

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<(), MetricsError> {
    if pred.len() != actual.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn mse(pred: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred, actual)?;
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    mse(pred, actual).map(f64::sqrt)
}

/// Coefficient of determination `1 − SS_res / SS_tot`; negative when the
/// predictions are worse than the mean of the actuals.
pub fn r2(pred: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred, actual)?;
    let m = mean(actual);
    let ss_tot: f64 = actual.iter().map(|a| (a - m) * (a - m)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ConstantActuals);
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitRate {
    pub threshold: f64,
    pub fraction: f64,
}

/// `|ŷ − y| ≤ τ` counts as a hit. A few ulps of slack keep decimal
/// boundaries such as `0.011 − 0.010` on the inclusive side.
pub fn is_hit(pred: f64, actual: f64, threshold: f64) -> bool {
    let slack = 4.0 * f64::EPSILON * pred.abs().max(actual.abs()).max(threshold);
    (pred - actual).abs() <= threshold + slack
}

/// Fraction of hits per threshold, in the order given.
pub fn hit_rate(pred_wtpct: &[f64], actual_wtpct: &[f64], thresholds: &[f64]) -> Result<Vec<HitRate>, MetricsError> {
    check_lengths(pred_wtpct, actual_wtpct)?;
    let n = pred_wtpct.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let hits = pred_wtpct.iter().zip(actual_wtpct).filter(|(p, a)| is_hit(**p, **a, threshold)).count();
            HitRate { threshold, fraction: hits as f64 / n }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub mse: f64,
    pub rmse: f64,
    pub r2: f64,
    /// Absent when the predictions are constant.
    pub r: Option<f64>,
    pub hit_rates: Vec<HitRate>,
    pub scale_note: String,
}

impl EvaluationReport {
    pub fn hit_rate_at(&self, threshold: f64) -> Option<f64> {
        self.hit_rates.iter().find(|h| (h.threshold - threshold).abs() < 1e-12).map(|h| h.fraction)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "n,{}", self.n);
        let _ = writeln!(out, "mse,{}", self.mse);
        let _ = writeln!(out, "rmse,{}", self.rmse);
        let _ = writeln!(out, "r2,{}", self.r2);
        let _ = writeln!(out, "r,{}", self.r.map_or(String::new(), |r| r.to_string()));
        for h in &self.hit_rates {
            let _ = writeln!(out, "hit_rate_{},{}", h.threshold, h.fraction);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Report from normalized predictions and targets.
pub fn report_from_predictions(
    pred_norm: &[f64],
    actual_norm: &[f64],
    norm: &NormParams,
    thresholds: &[f64],
) -> Result<EvaluationReport, MetricsError> {
    let mse = mse(pred_norm, actual_norm)?;
    let r2 = r2(pred_norm, actual_norm)?;
    let r = match pearson_r(pred_norm, actual_norm) {
        Ok(r) => Some(r),
        Err(StatsError::ConstantVector) => None,
        Err(e) => return Err(e.into()),
    };
    let to_wt = |v: &[f64]| v.iter().map(|z| norm.denormalize(*z, Column::Target)).collect::<Vec<_>>();
    let hit_rates = hit_rate(&to_wt(pred_norm), &to_wt(actual_norm), thresholds)?;
    Ok(EvaluationReport {
        n: pred_norm.len(),
        mse,
        rmse: mse.sqrt(),
        r2,
        r,
        hit_rates,
        scale_note: SCALE_NOTE.to_string(),
    })
}

/// Scores any regressor on a normalized test set.
pub fn evaluate<M: Regressor + ?Sized>(
    model: &M,
    test: &Samples,
    norm: &NormParams,
    thresholds: &[f64],
) -> Result<EvaluationReport, MetricsError> {
    let pred: Vec<f64> = test.inputs.iter().map(|x| model.predict_normalized(x)).collect();
    report_from_predictions(&pred, &test.targets, norm, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_definitions() {
        let a = [0.2, 0.4, 0.9];
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((mse(&shifted, &a).unwrap() - 0.01).abs() < 1e-15);
        assert!((rmse(&shifted, &a).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(mse(&a, &a[..2]), Err(MetricsError::LengthMismatch(3, 2)));
        assert_eq!(mse(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn r2_cases() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(r2(&[2.0; 3], &y).unwrap(), 0.0);
        // mirrored about the mean: SS_res = 4 SS_tot
        assert_eq!(r2(&[3.0, 2.0, 1.0], &y).unwrap(), -3.0);
        assert_eq!(r2(&y, &[1.0; 3]), Err(MetricsError::ConstantActuals));
    }

    #[test]
    fn hit_boundary_is_inclusive() {
        let rates = hit_rate(&[0.011], &[0.010], &[0.001]).unwrap();
        assert_eq!(rates[0].fraction, 1.0);
        let rates = hit_rate(&[0.0111], &[0.010], &[0.001]).unwrap();
        assert_eq!(rates[0].fraction, 0.0);
        let perfect = hit_rate(&[0.01, 0.02], &[0.01, 0.02], &DEFAULT_THRESHOLDS).unwrap();
        assert!(perfect.iter().all(|h| h.fraction == 1.0));
    }
}
