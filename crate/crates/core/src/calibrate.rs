//! False-positive-rate calibration of the confidence-ball radius, and
//! support-recovery bookkeeping.
//!
//! A target rate `rho` is lifted to a reference rate `eta = 2^a rho` in
//! `(0.5, 1]`. Hard thresholding the correlation matrix at the threshold
//! that keeps at most an `eta` fraction of off-diagonal pairs removes a part
//! whose operator norm, scaled back up by `2^a`, is the ball radius.

use rayon::prelude::*;
use serde::Serialize;

use crate::covmodel::{empirical_cov, to_correlation, CovModel};
use crate::error::{check_domain, CovError, Result};
use crate::linalg::{same_dim, SymMatrix};
use crate::simharness::{replication_rng, Distribution, Generator};
use crate::threshold::{apply_threshold, ThresholdRule};

/// Relative slack when comparing a pair count against `eta * N`.
const COUNT_SLACK: f64 = 1e-12;
/// Tolerated deviation of a correlation diagonal from one.
const UNIT_DIAGONAL_TOL: f64 = 1e-12;

/// `eta = 2^a * rho` with `eta` in `(0.5, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FprTarget {
    pub rho: f64,
    pub a: u32,
    pub eta: f64,
}

impl FprTarget {
    pub fn scale(&self) -> f64 {
        2f64.powi(self.a as i32)
    }
}

pub fn eta_split(rho: f64) -> Result<FprTarget> {
    check_domain(
        "rho",
        rho,
        rho > 0.0 && rho <= 0.5,
        "false positive rate must lie in (0, 0.5]",
    )?;
    let mut a = 0u32;
    let mut eta = rho;
    // doubling is exact in binary floating point
    while eta <= 0.5 {
        eta *= 2.0;
        a += 1;
    }
    Ok(FprTarget { rho, a, eta })
}

/// Smallest `lambda >= 0` with `#{|sigma_ij| > lambda, i < j} <= eta * N`,
/// `N = d (d - 1) / 2`.
pub fn keep_quantile_threshold(corr: &SymMatrix, eta: f64) -> Result<f64> {
    check_domain(
        "eta",
        eta,
        eta > 0.0 && eta <= 1.0,
        "eta must lie in (0, 1]",
    )?;
    if corr.dim() < 2 {
        return Err(CovError::TooFewVariables {
            required: 2,
            actual: corr.dim(),
        });
    }
    Ok(keep_quantile_of(corr.off_diagonal_magnitudes(), eta))
}

/// Same threshold computed from a bag of magnitudes.
pub(crate) fn keep_quantile_of(mut mags: Vec<f64>, eta: f64) -> f64 {
    let total = mags.len();
    let allowed = eta * total as f64 * (1.0 + COUNT_SLACK);
    mags.sort_by(f64::total_cmp);
    let positive = mags.iter().filter(|&&m| m > 0.0).count();
    if positive as f64 <= allowed {
        return 0.0;
    }
    let mut k = 0;
    while k < total {
        // advance to the last element of the tie group starting at k
        let mut end = k;
        while end + 1 < total && mags[end + 1] == mags[k] {
            end += 1;
        }
        let above = total - end - 1;
        if above as f64 <= allowed {
            return mags[k];
        }
        k = end + 1;
    }
    // unreachable: at the largest magnitude nothing lies strictly above
    mags[total - 1]
}

/// Radius of the operator-norm ball that calibrates to a false positive rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FprRadius {
    pub radius: f64,
    pub target: FprTarget,
    pub lambda_eta: f64,
}

pub fn radius_for_fpr(corr: &SymMatrix, rho: f64) -> Result<FprRadius> {
    radius_for_target(corr, eta_split(rho)?)
}

/// As [`radius_for_fpr`] with the split `eta = 2^a * rho` supplied directly.
pub fn radius_for_target(corr: &SymMatrix, target: FprTarget) -> Result<FprRadius> {
    check_unit_diagonal(corr)?;
    check_domain(
        "eta",
        target.eta,
        target.eta > 0.0 && target.eta <= 1.0,
        "eta must lie in (0, 1]",
    )?;
    let lambda_eta = keep_quantile_threshold(corr, target.eta)?;
    let kept = apply_threshold(corr, ThresholdRule::Hard, lambda_eta)?;
    let removed = corr.sub(&kept)?;
    Ok(FprRadius {
        radius: target.scale() * removed.operator_norm(),
        target,
        lambda_eta,
    })
}

pub(crate) fn check_unit_diagonal(corr: &SymMatrix) -> Result<()> {
    for (i, v) in corr.diagonal().into_iter().enumerate() {
        if (v - 1.0).abs() > UNIT_DIAGONAL_TOL {
            return Err(CovError::Config(format!(
                "expected a unit-diagonal correlation matrix, entry ({i}, {i}) is {v}"
            )));
        }
    }
    Ok(())
}

/// Off-diagonal support recovery counts over pairs `i > j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportMetrics {
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
    pub fp_count: usize,
    pub tp_count: usize,
    pub true_zero_count: usize,
    pub true_nonzero_count: usize,
}

impl SupportMetrics {
    /// False positives over all `d (d - 1) / 2` pairs rather than over the
    /// true zeros.
    pub fn fpr_over_all_pairs(&self) -> f64 {
        let pairs = self.true_zero_count + self.true_nonzero_count;
        ratio(self.fp_count, pairs)
    }

    /// No false positives and every true nonzero found.
    pub fn exact_recovery(&self) -> bool {
        self.fp_count == 0 && self.tp_count == self.true_nonzero_count
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Compares off-diagonal supports; an estimate entry counts as nonzero when
/// `|entry| > tol`, a truth entry when it is exactly nonzero.
pub fn support_metrics(
    estimate: &SymMatrix,
    truth: &SymMatrix,
    tol: f64,
) -> Result<SupportMetrics> {
    same_dim(truth, estimate)?;
    check_domain("tol", tol, tol >= 0.0, "tolerance must be >= 0")?;
    let d = truth.dim();
    let (mut fp, mut tp, mut zeros, mut nonzeros) = (0, 0, 0, 0);
    for j in 0..d {
        for i in (j + 1)..d {
            let found = estimate.get(i, j).abs() > tol;
            if truth.get(i, j) != 0.0 {
                nonzeros += 1;
                tp += found as usize;
            } else {
                zeros += 1;
                fp += found as usize;
            }
        }
    }
    Ok(SupportMetrics {
        false_positive_rate: ratio(fp, zeros),
        true_positive_rate: ratio(tp, nonzeros),
        fp_count: fp,
        tp_count: tp,
        true_zero_count: zeros,
        true_nonzero_count: nonzeros,
    })
}

/// Sparsity class: at most `kappa` nonzeros per row and every nonzero at
/// least `delta` in magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityClass {
    pub kappa: usize,
    pub delta: f64,
}

impl SparsityClass {
    pub fn new(kappa: usize, delta: f64) -> Result<Self> {
        if kappa == 0 {
            return Err(CovError::Config("kappa must be positive".into()));
        }
        check_domain("delta", delta, delta > 0.0, "delta must be positive")?;
        Ok(Self { kappa, delta })
    }

    pub fn contains(&self, m: &SymMatrix) -> bool {
        let d = m.dim();
        if self.kappa > d {
            return false;
        }
        (0..d).all(|i| {
            let mut count = 0;
            for j in 0..d {
                let v = m.get(i, j);
                if v != 0.0 {
                    if v.abs() < self.delta {
                        return false;
                    }
                    count += 1;
                }
            }
            count <= self.kappa
        })
    }
}

/// Simulation design for the interpolation-gap diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct GapDesign {
    pub d: usize,
    pub n: usize,
    pub model: CovModel,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapEstimate {
    pub rho: f64,
    pub eta: f64,
    pub reps: usize,
    /// `|eta * E||S_rho - S_0|| / E||S_eta - S_0|| - rho|`
    pub gap: f64,
    /// Delta-method standard error of `gap`.
    pub std_error: f64,
    pub mean_norm_rho: f64,
    pub mean_norm_eta: f64,
}

/// Monte Carlo estimate of how far the norm ratio of oracle-thresholded
/// estimators sits from the target rate, with `eta` from [`eta_split`].
pub fn theorem1_gap(design: &GapDesign, rho: f64, reps: usize, seed: u64) -> Result<GapEstimate> {
    let target = eta_split(rho)?;
    theorem1_gap_at(design, rho, target.eta, reps, seed)
}

/// As [`theorem1_gap`] with an explicit reference rate `eta`.
///
/// Both oracle estimators keep exactly the requested fraction of true-zero
/// pairs (largest magnitudes first) by hard thresholding the correlation
/// matrix against the known truth; `S_0` is the identity.
pub fn theorem1_gap_at(
    design: &GapDesign,
    rho: f64,
    eta: f64,
    reps: usize,
    seed: u64,
) -> Result<GapEstimate> {
    check_domain(
        "rho",
        rho,
        rho > 0.0 && rho <= 1.0,
        "rate must lie in (0, 1]",
    )?;
    check_domain(
        "eta",
        eta,
        eta > 0.0 && eta <= 1.0,
        "rate must lie in (0, 1]",
    )?;
    if reps == 0 {
        return Err(CovError::Config("reps must be positive".into()));
    }
    let truth = design.model.matrix(design.d)?;
    let generator = Generator::new(design.distribution, &truth)?;
    let norms: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep as u64);
            let sample = generator.draw(design.n, &mut rng)?;
            let corr = to_correlation(&empirical_cov(&sample))?.corr;
            let x = oracle_threshold(&corr, &truth, rho).sub(&SymMatrix::identity(design.d))?;
            let y = oracle_threshold(&corr, &truth, eta).sub(&SymMatrix::identity(design.d))?;
            Ok((x.operator_norm(), y.operator_norm()))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| CovError::Replication {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let m = reps as f64;
    let mean_x = norms.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = norms.iter().map(|p| p.1).sum::<f64>() / m;
    let ratio = if mean_y > 0.0 { mean_x / mean_y } else { 0.0 };
    let gap = (eta * ratio - rho).abs();
    let std_error = if reps < 2 || mean_y == 0.0 {
        0.0
    } else {
        let var = norms
            .iter()
            .map(|&(x, y)| (x - ratio * y).powi(2))
            .sum::<f64>()
            / (m - 1.0);
        eta * (var / m).sqrt() / mean_y
    };
    Ok(GapEstimate {
        rho,
        eta,
        reps,
        gap,
        std_error,
        mean_norm_rho: mean_x,
        mean_norm_eta: mean_y,
    })
}

/// Hard thresholds `corr` at the magnitude that keeps `round(rate * Z)` of
/// the `Z` true-zero pairs.
fn oracle_threshold(corr: &SymMatrix, truth: &SymMatrix, rate: f64) -> SymMatrix {
    let d = corr.dim();
    let mut null_mags = Vec::new();
    for j in 0..d {
        for i in (j + 1)..d {
            if truth.get(i, j) == 0.0 {
                null_mags.push(corr.get(i, j).abs());
            }
        }
    }
    null_mags.sort_by(|a, b| b.total_cmp(a));
    let keep = (rate * null_mags.len() as f64).round() as usize;
    let lambda = if keep == 0 {
        f64::INFINITY
    } else {
        null_mags[keep.min(null_mags.len()) - 1]
    };
    corr.map_off_diagonal(|_, _, z| if z.abs() >= lambda { z } else { 0.0 })
}
