//! Sparse covariance estimation inside concentration confidence balls.
//!
//! The estimator thresholds the empirical correlation matrix as hard as it
//! can while staying within a ball of radius `r` around it. The radius is
//! either calibrated to a target false positive rate, derived from a
//! coverage level under a concentration assumption, or given directly.
//!
//! ```
//! use covcal::{empirical_cov, sparse_estimate, EstimatorConfig, Sample};
//!
//! let sample = Sample::from_rows(&[
//!     vec![1.0, 2.0, 0.5],
//!     vec![0.3, 1.1, -0.2],
//!     vec![-0.8, -1.9, 0.4],
//!     vec![0.1, 0.2, -0.9],
//! ])
//! .unwrap();
//! let fit = sparse_estimate(&empirical_cov(&sample), &EstimatorConfig::fpr(0.05)).unwrap();
//! assert!(fit.lambda_star >= 0.0 && fit.lambda_star <= 1.0);
//! ```

pub mod baseline;
pub mod calibrate;
pub mod concentration;
pub mod covmodel;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod simharness;
pub mod threshold;

pub use baseline::{cv_threshold, diagonal_estimator, CvConfig, CvResult};
pub use calibrate::{
    eta_split, keep_quantile_threshold, radius_for_fpr, radius_for_target, support_metrics,
    theorem1_gap, FprRadius, FprTarget, SupportMetrics,
};
pub use concentration::{alpha_from_radius, radius_from_alpha, Regime};
pub use covmodel::{empirical_cov, model_matrix, to_correlation, Correlation, CovModel, Sample};
pub use error::{CovError, Result};
pub use estimator::{
    psd_repair, sparse_estimate, support_of, EstimatorConfig, Metric, PsdRepair, RadiusSource,
    RepairMode, SparseCovEstimate, Support,
};
pub use linalg::SymMatrix;
pub use simharness::{
    fstat_rank, run_experiment, symmetrization_scan, Distribution, ExperimentReport,
    ExperimentSpec, Generator, Method,
};
pub use threshold::{apply_threshold, shrink, ThresholdRule};
