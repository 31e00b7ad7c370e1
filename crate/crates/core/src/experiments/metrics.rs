//! Detection and accuracy metrics.

use crate::error::{Error, Result};
use crate::sh::Direction;

/// Estimates at or beyond this angular error are anomalous.
pub const ANOMALY_THRESHOLD_DEG: f64 = 10.0;

/// Great-circle angle between two directions, in degrees.
pub fn angular_error(est: Direction, truth: Direction) -> f64 {
    est.unit_vector().dot(&truth.unit_vector()).clamp(-1.0, 1.0).acos().to_degrees()
}

pub fn is_anomalous(psi_e_deg: f64) -> bool {
    !(psi_e_deg.abs() < ANOMALY_THRESHOLD_DEG)
}

/// Fraction of errors strictly below the anomaly threshold.
pub fn probability_of_detection(errors_deg: &[f64]) -> Result<f64> {
    if errors_deg.is_empty() {
        return Err(Error::config("probability of detection needs at least one estimate"));
    }
    let hits = errors_deg.iter().filter(|e| !is_anomalous(**e)).count();
    Ok(hits as f64 / errors_deg.len() as f64)
}

/// RMS of the nonanomalous errors; `None` when every estimate is anomalous.
pub fn doa_rmse(errors_deg: &[f64]) -> Option<f64> {
    let good: Vec<f64> = errors_deg.iter().copied().filter(|e| !is_anomalous(*e)).collect();
    if good.is_empty() {
        return None;
    }
    Some((good.iter().map(|e| e * e).sum::<f64>() / good.len() as f64).sqrt())
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}
