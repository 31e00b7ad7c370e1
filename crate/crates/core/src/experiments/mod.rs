//! Evaluation harness: metrics, simulated sweeps over reverberation and
//! noise, and report files.

pub mod metrics;
pub mod report;
pub mod sweep;

pub use metrics::{angular_error, doa_rmse, is_anomalous, mean_std, probability_of_detection, ANOMALY_THRESHOLD_DEG};
pub use report::{summarize, write_report, CellSummary};
pub use sweep::{run_sweep, simulate_scene, SceneFailure, SweepReport, TrialResult};
