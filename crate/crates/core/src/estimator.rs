//! Sparse covariance estimation by threshold search inside a confidence ball.
//!
//! The covariance is normalized to unit diagonal, a ball radius is resolved
//! from the configured source, and a bisection on `lambda` in `[0, 1]` looks
//! for the largest threshold whose estimate stays within the radius of the
//! correlation matrix. The result is mapped back to the covariance scale.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::calibrate::{radius_for_fpr, FprRadius};
use crate::concentration::{radius_from_alpha, Regime};
use crate::covmodel::to_correlation;
use crate::error::{check_domain, CovError, Result};
use crate::linalg::{entrywise_norm, sym_eigen, SymMatrix};
use crate::threshold::{apply_threshold, ThresholdRule};

/// Off-diagonal index pairs `(i, j)` with `i > j`, zero-based.
pub type Support = BTreeSet<(usize, usize)>;

pub const DEFAULT_ITERATIONS: u32 = 10;

/// Distance used for the feasibility test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Metric {
    #[default]
    OperatorNorm,
    FrobeniusNorm,
    Entrywise {
        p: f64,
        q: f64,
    },
}

impl Metric {
    pub fn distance(&self, a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
        let diff = a.sub(b)?;
        self.norm(&diff)
    }

    pub fn norm(&self, m: &SymMatrix) -> Result<f64> {
        match *self {
            Metric::OperatorNorm => Ok(m.operator_norm()),
            Metric::FrobeniusNorm => Ok(m.frobenius_norm()),
            Metric::Entrywise { p, q } => entrywise_norm(m.as_matrix(), p, q),
        }
    }

    /// Entrywise metrics make the distance monotone in the threshold.
    pub fn is_monotone(&self) -> bool {
        !matches!(self, Metric::OperatorNorm)
    }

    pub fn validate(&self) -> Result<()> {
        if let Metric::Entrywise { p, q } = *self {
            check_domain("p", p, p >= 1.0, "norm exponent must be >= 1 or infinity")?;
            check_domain("q", q, q >= 1.0, "norm exponent must be >= 1 or infinity")?;
        }
        Ok(())
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::OperatorNorm => f.write_str("op"),
            Metric::FrobeniusNorm => f.write_str("fro"),
            Metric::Entrywise { p, q } => write!(f, "entrywise:{p}:{q}"),
        }
    }
}

/// Where the ball radius comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RadiusSource {
    /// Calibrate to a target false positive rate in `(0, 0.5]`.
    Fpr {
        rho: f64,
    },
    /// Coverage level `alpha` under a concentration regime for `n` samples.
    Alpha {
        regime: Regime,
        alpha: f64,
        n: usize,
    },
    Explicit {
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub rule: ThresholdRule,
    pub metric: Metric,
    pub iterations: u32,
    pub radius_source: RadiusSource,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            rule: ThresholdRule::Hard,
            metric: Metric::OperatorNorm,
            iterations: DEFAULT_ITERATIONS,
            radius_source: RadiusSource::Fpr { rho: 0.05 },
        }
    }
}

impl EstimatorConfig {
    pub fn fpr(rho: f64) -> Self {
        Self {
            radius_source: RadiusSource::Fpr { rho },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        self.metric.validate()?;
        if self.iterations == 0 {
            return Err(CovError::Config("iterations must be at least 1".into()));
        }
        match self.radius_source {
            RadiusSource::Fpr { rho } => check_domain(
                "rho",
                rho,
                rho > 0.0 && rho <= 0.5,
                "false positive rate must lie in (0, 0.5]",
            ),
            RadiusSource::Alpha { regime, alpha, n } => {
                radius_from_alpha(regime, n, alpha).map(drop)
            }
            RadiusSource::Explicit { radius } => check_domain(
                "radius",
                radius,
                radius >= 0.0 && radius.is_finite(),
                "radius must be finite and >= 0",
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseCovEstimate {
    /// Estimate on the covariance scale.
    #[serde(skip)]
    pub matrix: SymMatrix,
    /// Thresholded unit-diagonal matrix.
    #[serde(skip)]
    pub corr_matrix: SymMatrix,
    pub scale: Vec<f64>,
    pub lambda_star: f64,
    pub radius: f64,
    /// Distance between `corr_matrix` and the input correlation.
    pub distance: f64,
    /// Present when the radius came from a false-positive-rate target.
    pub calibration: Option<FprRadius>,
    pub support: Support,
    pub config: EstimatorConfig,
    pub warnings: Vec<String>,
}

pub fn sparse_estimate(m: &SymMatrix, config: &EstimatorConfig) -> Result<SparseCovEstimate> {
    config.validate()?;
    let normalized = to_correlation(m)?;
    let corr = &normalized.corr;

    let mut warnings = Vec::new();
    let (radius, calibration) = match config.radius_source {
        RadiusSource::Fpr { rho } => {
            if config.rule != ThresholdRule::Hard {
                warnings.push(format!(
                    "false-positive calibration assumes hard thresholding; rule {} is uncalibrated",
                    config.rule
                ));
            }
            let cal = radius_for_fpr(corr, rho)?;
            (cal.radius, Some(cal))
        }
        RadiusSource::Alpha { regime, alpha, n } => (radius_from_alpha(regime, n, alpha)?, None),
        RadiusSource::Explicit { radius } => (radius, None),
    };

    let search = bisect_threshold(corr, config.rule, config.metric, radius, config.iterations)?;
    let corr_matrix = apply_threshold(corr, config.rule, search.lambda)?;
    let matrix = normalized.rescale(&corr_matrix)?;
    let support = support_of(&corr_matrix, 0.0)?;
    Ok(SparseCovEstimate {
        matrix,
        corr_matrix,
        scale: normalized.scale,
        lambda_star: search.lambda,
        radius,
        distance: search.distance,
        calibration,
        support,
        config: *config,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SearchResult {
    pub lambda: f64,
    pub distance: f64,
}

/// Bisection on `[0, 1]` starting at `1/2` with steps `2^{-t-1}` after the
/// `t`-th evaluation. Returns the largest feasible threshold visited; `0` is
/// always feasible. If no visited point was infeasible, `1` is tried too.
pub(crate) fn bisect_threshold(
    corr: &SymMatrix,
    rule: ThresholdRule,
    metric: Metric,
    radius: f64,
    iterations: u32,
) -> Result<SearchResult> {
    let distance_at = |lambda: f64| -> Result<f64> {
        let est = apply_threshold(corr, rule, lambda)?;
        metric.distance(&est, corr)
    };
    // every rule is the identity at lambda = 0
    let mut best = SearchResult {
        lambda: 0.0,
        distance: 0.0,
    };
    let mut lambda = 0.5;
    let mut saw_infeasible = false;
    for t in 1..=iterations {
        let dist = distance_at(lambda)?;
        let step = 0.5f64.powi(t as i32 + 1);
        if dist <= radius {
            if lambda > best.lambda {
                best = SearchResult {
                    lambda,
                    distance: dist,
                };
            }
            lambda += step;
        } else {
            saw_infeasible = true;
            lambda -= step;
        }
    }
    if !saw_infeasible {
        let dist = distance_at(1.0)?;
        if dist <= radius {
            best = SearchResult {
                lambda: 1.0,
                distance: dist,
            };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    /// Add `gamma * I`; off-diagonal support is untouched.
    ShiftIdentity,
    /// Clamp negative eigenvalues to zero; destroys sparsity.
    ClipEigen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdRepair {
    pub matrix: SymMatrix,
    /// Diagonal shift applied in [`RepairMode::ShiftIdentity`].
    pub gamma: Option<f64>,
}

/// Shift: `gamma = max(0, -lambda_min) + epsilon`. Clip: eigenvalues below
/// zero are set to zero.
pub fn psd_repair(m: &SymMatrix, mode: RepairMode, epsilon: f64) -> Result<PsdRepair> {
    check_domain(
        "epsilon",
        epsilon,
        epsilon > 0.0 && epsilon.is_finite(),
        "epsilon must be positive",
    )?;
    match mode {
        RepairMode::ShiftIdentity => {
            let min = m.eigenvalues().last().copied().unwrap_or(0.0);
            let gamma = (-min).max(0.0) + epsilon;
            let mut out = m.as_matrix().clone();
            for i in 0..m.dim() {
                out[(i, i)] += gamma;
            }
            Ok(PsdRepair {
                matrix: SymMatrix::from_trusted(out),
                gamma: Some(gamma),
            })
        }
        RepairMode::ClipEigen => {
            let eig = sym_eigen(m);
            let clipped = eig.values.map(|v| v.max(0.0));
            let out = &eig.vectors * DMatrix::from_diagonal(&clipped) * eig.vectors.transpose();
            Ok(PsdRepair {
                matrix: SymMatrix::symmetrize(out)?,
                gamma: None,
            })
        }
    }
}

/// Pairs `(i, j)`, `i > j`, with `|m_ij| > tol`.
pub fn support_of(m: &SymMatrix, tol: f64) -> Result<Support> {
    check_domain("tol", tol, tol >= 0.0, "tolerance must be >= 0")?;
    let d = m.dim();
    let mut out = Support::new();
    for j in 0..d {
        for i in (j + 1)..d {
            if m.get(i, j).abs() > tol {
                out.insert((i, j));
            }
        }
    }
    Ok(out)
}
