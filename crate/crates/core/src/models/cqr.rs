//! Split-conformal calibration of quantile-regression intervals.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::scalar::ceil_tolerant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
}

/// Offset `Q`: the `ceil((1 - alpha)(n + 1))`-th smallest conformity score
/// `max(qlo - y, y - qhi)` on the calibration rows.
pub fn cqr_calibrate(qlo: &[f64], qhi: &[f64], y: &[f64], alpha: f64) -> Result<f64, ModelError> {
    if qlo.len() != y.len() || qhi.len() != y.len() {
        return Err(ModelError::Shape("calibration lengths differ".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ModelError::InvalidParams(format!("alpha = {alpha}")));
    }
    let n = y.len();
    let rank = ceil_tolerant((1.0 - alpha) * (n as f64 + 1.0)) as usize;
    if rank > n || rank == 0 {
        return Err(ModelError::CalibrationTooSmall { rank, n });
    }
    let mut scores: Vec<f64> = (0..n).map(|i| (qlo[i] - y[i]).max(y[i] - qhi[i])).collect();
    scores.sort_by(f64::total_cmp);
    Ok(scores[rank - 1])
}

/// `[qlo - Q, qhi + Q]`. Bounds that cross after a negative offset collapse
/// to their midpoint.
pub fn cqr_intervals(qlo: &[f64], qhi: &[f64], q: f64) -> Vec<PredictionInterval> {
    qlo.iter()
        .zip(qhi)
        .map(|(&lo, &hi)| {
            let (lower, upper) = (lo - q, hi + q);
            if lower <= upper {
                PredictionInterval { lower, upper }
            } else {
                let mid = lower + (upper - lower) / 2.0;
                PredictionInterval { lower: mid, upper: mid }
            }
        })
        .collect()
}

/// Fraction of targets inside their closed interval.
pub fn coverage(intervals: &[PredictionInterval], y: &[f64]) -> f64 {
    let hit = intervals.iter().zip(y).filter(|(iv, &v)| iv.lower <= v && v <= iv.upper).count();
    hit as f64 / y.len() as f64
}
