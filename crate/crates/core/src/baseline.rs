//! Comparison estimators: universal thresholding with split-half
//! cross-validation, and the empirical diagonal.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::covmodel::{empirical_cov, to_correlation, Sample};
use crate::error::{CovError, Result};
use crate::linalg::{same_dim, SymMatrix};
use crate::threshold::{apply_threshold, ThresholdRule};

pub const DEFAULT_GRID_SIZE: usize = 50;
pub const DEFAULT_SPLITS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvConfig {
    pub rule: ThresholdRule,
    /// Candidate thresholds; `None` means `grid_size` evenly spaced points on
    /// `[0, max |off-diagonal|]` of the full-sample correlation matrix.
    pub grid: Option<Vec<f64>>,
    pub grid_size: usize,
    pub splits: usize,
}

impl CvConfig {
    pub fn new(rule: ThresholdRule) -> Self {
        Self {
            rule,
            grid: None,
            grid_size: DEFAULT_GRID_SIZE,
            splits: DEFAULT_SPLITS,
        }
    }

    fn resolve_grid(&self, corr: &SymMatrix) -> Result<Vec<f64>> {
        let grid = match &self.grid {
            Some(g) => g.clone(),
            None => {
                if self.grid_size == 0 {
                    return Err(CovError::Config("grid size must be positive".into()));
                }
                let top = corr.max_abs_off_diagonal();
                let steps = self.grid_size.saturating_sub(1).max(1) as f64;
                (0..self.grid_size)
                    .map(|k| top * k as f64 / steps)
                    .collect()
            }
        };
        if grid.is_empty() {
            return Err(CovError::Config("threshold grid is empty".into()));
        }
        if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CovError::Config(
                "grid values must be finite and >= 0".into(),
            ));
        }
        if grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(CovError::Config("threshold grid must be ascending".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda: f64,
    pub estimate: SymMatrix,
    pub grid: Vec<f64>,
    /// Mean squared Frobenius risk per grid point.
    pub risk: Vec<f64>,
}

/// Squared Frobenius distance between the thresholded first-half estimate
/// and the raw second-half estimate, for each grid point.
pub fn split_risk(
    train: &SymMatrix,
    test: &SymMatrix,
    rule: ThresholdRule,
    grid: &[f64],
) -> Result<Vec<f64>> {
    same_dim(train, test)?;
    rule.validate()?;
    if let Some(&bad) = grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(CovError::Domain {
            name: "lambda",
            value: bad,
            expected: "threshold must be finite and >= 0",
        });
    }
    let d = train.dim();
    let (a, b) = (train.as_matrix(), test.as_matrix());
    let diagonal: f64 = (0..d).map(|i| (a[(i, i)] - b[(i, i)]).powi(2)).sum();
    let pairs: Vec<(f64, f64)> = (0..d)
        .flat_map(|j| ((j + 1)..d).map(move |i| (a[(i, j)], b[(i, j)])))
        .collect();
    Ok(grid
        .iter()
        .map(|&lambda| {
            let off: f64 = pairs
                .iter()
                .map(|&(x, y)| (rule.apply(x, lambda) - y).powi(2))
                .sum();
            diagonal + 2.0 * off
        })
        .collect())
}

/// Index of the minimum risk; ties go to the larger threshold.
pub fn select_lambda(grid: &[f64], risk: &[f64]) -> usize {
    let mut best = 0;
    for (k, r) in risk.iter().enumerate() {
        if *r <= risk[best] {
            best = k;
        }
    }
    debug_assert!(best < grid.len());
    best
}

/// Split-half cross-validation of a universal threshold.
///
/// The risk compares thresholded and raw half-sample covariances; the final
/// estimate thresholds the full-sample correlation matrix at the selected
/// threshold and is returned on the covariance scale.
pub fn cv_threshold(s: &Sample, cfg: &CvConfig, rng: &mut impl Rng) -> Result<CvResult> {
    let n = s.n();
    if n < 4 {
        return Err(CovError::SampleSize {
            required: 4,
            actual: n,
        });
    }
    if cfg.splits == 0 {
        return Err(CovError::Config("splits must be positive".into()));
    }
    cfg.rule.validate()?;
    let full = to_correlation(&empirical_cov(s))?;
    let grid = cfg.resolve_grid(&full.corr)?;

    // draw every permutation up front so the result does not depend on how
    // the splits are scheduled
    let perms: Vec<Vec<usize>> = (0..cfg.splits)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx
        })
        .collect();
    let half = n / 2;
    let per_split: Vec<Vec<f64>> = perms
        .par_iter()
        .map(|perm| {
            let train = empirical_cov(&s.select_rows(&perm[..half])?);
            let test = empirical_cov(&s.select_rows(&perm[half..])?);
            split_risk(&train, &test, cfg.rule, &grid)
        })
        .collect::<Result<_>>()?;

    let splits = per_split.len() as f64;
    let risk: Vec<f64> = (0..grid.len())
        .map(|k| per_split.iter().map(|r| r[k]).sum::<f64>() / splits)
        .collect();
    let lambda = grid[select_lambda(&grid, &risk)];
    Ok(CvResult {
        lambda,
        estimate: full.rescale(&apply_threshold(&full.corr, cfg.rule, lambda)?)?,
        grid,
        risk,
    })
}

/// Empirical variances on the diagonal, zeros elsewhere.
pub fn diagonal_estimator(s: &Sample) -> SymMatrix {
    empirical_cov(s).diagonal_part()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::support_of;
    use crate::linalg::test_util::rng;
    use nalgebra::DMatrix;
    use rand_distr::StandardNormal;

    fn gaussian_sample(g: &mut impl Rng, n: usize, d: usize) -> Sample {
        Sample::new(DMatrix::from_fn(n, d, |_, _| g.sample(StandardNormal))).unwrap()
    }

    #[test]
    fn single_variable_ties_to_largest_grid_point() {
        let mut g = rng(1);
        let s = gaussian_sample(&mut g, 20, 1);
        let cfg = CvConfig {
            grid: Some(vec![0.0, 0.1, 0.2, 0.3]),
            ..CvConfig::new(ThresholdRule::Soft)
        };
        let r = cv_threshold(&s, &cfg, &mut g).unwrap();
        assert_eq!(r.lambda, 0.3);
        assert!(r.risk.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn constructed_split_risk() {
        let train = SymMatrix::from_rows(&[&[1.0, 0.9], &[0.9, 1.0]]).unwrap();
        let test = SymMatrix::identity(2);
        let grid = [0.0, 0.3, 0.6, 0.9, 0.95];
        let risk = split_risk(&train, &test, ThresholdRule::Hard, &grid).unwrap();
        for (lam, r) in grid.iter().zip(&risk) {
            let expect = if *lam <= 0.9 { 2.0 * 0.81 } else { 0.0 };
            assert!((r - expect).abs() < 1e-12, "lambda {lam}");
        }
        assert_eq!(grid[select_lambda(&grid, &risk)], 0.95);
    }

    /// Oracle: the hard-threshold risk only changes where the grid crosses an
    /// off-diagonal magnitude of the training half.
    #[test]
    fn hard_risk_is_piecewise_constant() {
        let mut g = rng(9);
        for _ in 0..20 {
            let train = empirical_cov(&gaussian_sample(&mut g, 6, 5));
            let test = empirical_cov(&gaussian_sample(&mut g, 6, 5));
            let grid: Vec<f64> = (0..400).map(|k| k as f64 * 0.005).collect();
            let risk = split_risk(&train, &test, ThresholdRule::Hard, &grid).unwrap();
            let mags = train.off_diagonal_magnitudes();
            for k in 1..grid.len() {
                assert!(risk[k] >= 0.0);
                let crosses = mags.iter().any(|&m| grid[k - 1] < m && m <= grid[k]);
                if !crosses {
                    assert_eq!(risk[k], risk[k - 1]);
                }
            }
            // brute force: direct sum over entries
            for (k, &lam) in grid.iter().enumerate().step_by(37) {
                let mut expect = 0.0;
                for i in 0..5 {
                    for j in 0..5 {
                        let a = train.get(i, j);
                        let kept = if i == j || a.abs() >= lam { a } else { 0.0 };
                        expect += (kept - test.get(i, j)).powi(2);
                    }
                }
                assert!((risk[k] - expect).abs() <= 1e-12 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn cv_is_reproducible_and_on_grid() {
        let s = gaussian_sample(&mut rng(10), 30, 8);
        let cfg = CvConfig::new(ThresholdRule::Soft);
        let a = cv_threshold(&s, &cfg, &mut rng(77)).unwrap();
        let b = cv_threshold(&s, &cfg, &mut rng(77)).unwrap();
        assert_eq!(a, b);
        assert!(a.grid.contains(&a.lambda));
        assert_eq!(a.grid.len(), DEFAULT_GRID_SIZE);
        let full = to_correlation(&empirical_cov(&s)).unwrap();
        let expect = full
            .rescale(&apply_threshold(&full.corr, ThresholdRule::Soft, a.lambda).unwrap())
            .unwrap();
        assert_eq!(a.estimate, expect);
        assert!((a.grid.last().unwrap() - full.corr.max_abs_off_diagonal()).abs() < 1e-15);
    }

    #[test]
    fn cv_rejects_small_samples_and_bad_grids() {
        let mut g = rng(11);
        let s = gaussian_sample(&mut g, 3, 4);
        assert!(matches!(
            cv_threshold(&s, &CvConfig::new(ThresholdRule::Hard), &mut g),
            Err(CovError::SampleSize { required: 4, .. })
        ));
        let s = gaussian_sample(&mut g, 9, 4);
        let bad = CvConfig {
            grid: Some(vec![0.2, 0.1]),
            ..CvConfig::new(ThresholdRule::Hard)
        };
        assert!(cv_threshold(&s, &bad, &mut g).is_err());
        let empty = CvConfig {
            grid: Some(vec![]),
            ..CvConfig::new(ThresholdRule::Hard)
        };
        assert!(cv_threshold(&s, &empty, &mut g).is_err());
    }

    #[test]
    fn odd_sample_sizes_split_floor_ceil() {
        let mut g = rng(12);
        let s = gaussian_sample(&mut g, 5, 3);
        assert!(cv_threshold(&s, &CvConfig::new(ThresholdRule::Hard), &mut g).is_ok());
    }

    #[test]
    fn diagonal_estimator_has_empty_support() {
        let mut g = rng(13);
        let s = gaussian_sample(&mut g, 10, 6);
        let est = diagonal_estimator(&s);
        assert!(support_of(&est, 0.0).unwrap().is_empty());
        assert_eq!(est.diagonal(), empirical_cov(&s).diagonal());
    }

    #[test]
    fn diagonal_estimator_commutes_with_permutation() {
        let mut g = rng(14);
        let s = gaussian_sample(&mut g, 10, 6);
        let perm = [5, 3, 1, 0, 2, 4];
        assert_eq!(
            diagonal_estimator(&s.select_columns(&perm).unwrap()),
            diagonal_estimator(&s).permute(&perm).unwrap()
        );
    }
}
