//! Data generators, replicated simulation experiments and Monte Carlo
//! diagnostics.
//!
//! Every replication draws from its own ChaCha stream derived from the master
//! seed and the replication index, so reports do not depend on the number of
//! worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{
    cv_threshold, diagonal_estimator, CvConfig, DEFAULT_GRID_SIZE, DEFAULT_SPLITS,
};
use crate::calibrate::{check_unit_diagonal, support_metrics, SupportMetrics};
use crate::covmodel::{empirical_cov, CovModel, Sample};
use crate::error::{check_domain, CovError, Result};
use crate::estimator::{sparse_estimate, EstimatorConfig};
use crate::linalg::{psd_sqrt, SymMatrix};
use crate::threshold::ThresholdRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Gaussian,
    /// `X = sqrt(V) Z` with `V ~ Exp(1)` per row and `Z ~ N(0, Sigma)`.
    Laplace,
    /// Signs of a latent Gaussian whose correlations are `sin(pi sigma / 2)`.
    Rademacher,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Laplace => "laplace",
            Distribution::Rademacher => "rademacher",
        })
    }
}

impl FromStr for Distribution {
    type Err = CovError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            "laplace" => Ok(Distribution::Laplace),
            "rademacher" => Ok(Distribution::Rademacher),
            _ => Err(CovError::Config(format!("unknown distribution `{s}`"))),
        }
    }
}

/// Independent random stream for replication `rep` of a run seeded by `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Sampler with the matrix square root precomputed.
#[derive(Debug, Clone)]
pub struct Generator {
    distribution: Distribution,
    root: DMatrix<f64>,
}

impl Generator {
    pub fn new(distribution: Distribution, sigma: &SymMatrix) -> Result<Self> {
        let factor_of = match distribution {
            Distribution::Rademacher => {
                check_unit_diagonal(sigma)?;
                sigma.map_off_diagonal(|_, _, v| (std::f64::consts::FRAC_PI_2 * v).sin())
            }
            _ => sigma.clone(),
        };
        let root = psd_sqrt(&factor_of).map_err(|e| match e {
            CovError::NotPsd { min_eigenvalue } => CovError::ModelParameter(format!(
                "{distribution} generator needs a PSD matrix (min eigenvalue {min_eigenvalue:e})"
            )),
            other => other,
        })?;
        Ok(Self {
            distribution,
            root: root.into_inner(),
        })
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution
    }

    pub fn dim(&self) -> usize {
        self.root.nrows()
    }

    pub fn draw(&self, n: usize, rng: &mut impl Rng) -> Result<Sample> {
        let d = self.dim();
        let z = DMatrix::<f64>::from_fn(n, d, |_, _| rng.sample(StandardNormal));
        let mut x = z * &self.root;
        match self.distribution {
            Distribution::Gaussian => {}
            Distribution::Laplace => {
                for mut row in x.row_iter_mut() {
                    let v: f64 = rng.sample(Exp1);
                    row *= v.sqrt();
                }
            }
            Distribution::Rademacher => {
                x.apply(|v| *v = if *v < 0.0 { -1.0 } else { 1.0 });
            }
        }
        Sample::new(x)
    }
}

pub fn gen_gaussian(sigma: &SymMatrix, n: usize, rng: &mut impl Rng) -> Result<Sample> {
    Generator::new(Distribution::Gaussian, sigma)?.draw(n, rng)
}

pub fn gen_laplace(sigma: &SymMatrix, n: usize, rng: &mut impl Rng) -> Result<Sample> {
    Generator::new(Distribution::Laplace, sigma)?.draw(n, rng)
}

pub fn gen_rademacher(sigma: &SymMatrix, n: usize, rng: &mut impl Rng) -> Result<Sample> {
    Generator::new(Distribution::Rademacher, sigma)?.draw(n, rng)
}

/// An estimator compared in a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Confidence-ball estimator calibrated to false positive rate `rho`.
    CoM {
        rho: f64,
    },
    /// Universal threshold chosen by split-half cross-validation.
    Baseline {
        rule: ThresholdRule,
    },
    Diagonal,
    Empirical,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::CoM { rho } => write!(f, "com:{rho}"),
            Method::Baseline { rule } => write!(f, "{rule}"),
            Method::Diagonal => f.write_str("diagonal"),
            Method::Empirical => f.write_str("empirical"),
        }
    }
}

impl FromStr for Method {
    type Err = CovError;

    /// `com:0.05`, `diagonal`, `empirical`, or any threshold rule name.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if let Some(rho) = t.strip_prefix("com:") {
            let rho: f64 = rho
                .parse()
                .map_err(|_| CovError::Config(format!("bad rate in method `{s}`")))?;
            return Ok(Method::CoM { rho });
        }
        match t.as_str() {
            "diagonal" => Ok(Method::Diagonal),
            "empirical" => Ok(Method::Empirical),
            _ => t
                .parse()
                .map(|rule| Method::Baseline { rule })
                .map_err(|_| CovError::Config(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub distribution: Distribution,
    #[serde(serialize_with = "serialize_display")]
    pub model: CovModel,
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Also report the operator-norm distance to the true covariance.
    pub loss_report: bool,
    pub cv_splits: usize,
    pub cv_grid_size: usize,
}

fn serialize_display<T: fmt::Display, S: serde::Serializer>(
    v: &T,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl ExperimentSpec {
    pub fn new(distribution: Distribution, model: CovModel, n: usize, d: usize) -> Self {
        Self {
            distribution,
            model,
            n,
            d,
            reps: 100,
            methods: vec![Method::CoM { rho: 0.05 }],
            seed: 0,
            loss_report: false,
            cv_splits: DEFAULT_SPLITS,
            cv_grid_size: DEFAULT_GRID_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(CovError::Config("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(CovError::Config("no methods to compare".into()));
        }
        if self.n < 2 {
            return Err(CovError::SampleSize {
                required: 2,
                actual: self.n,
            });
        }
        let has_baseline = self
            .methods
            .iter()
            .any(|m| matches!(m, Method::Baseline { .. }));
        if has_baseline && self.n < 4 {
            return Err(CovError::SampleSize {
                required: 4,
                actual: self.n,
            });
        }
        if has_baseline && (self.cv_splits == 0 || self.cv_grid_size == 0) {
            return Err(CovError::Config(
                "cross-validation needs splits and grid points".into(),
            ));
        }
        for m in &self.methods {
            match m {
                Method::CoM { rho } => EstimatorConfig::fpr(*rho).validate()?,
                Method::Baseline { rule } => rule.validate()?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// Mean and sample standard deviation over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        };
        Self { mean, sd }
    }

    pub fn std_error(&self, reps: usize) -> f64 {
        self.sd / (reps as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub label: String,
    /// False positives as a percentage of true-zero pairs.
    pub fp_percent: Summary,
    /// True positives as a percentage of true-nonzero pairs.
    pub tp_percent: Summary,
    pub op_loss: Option<Summary>,
    pub exact_recovery_rate: f64,
    /// Selected threshold on the correlation scale (CoM) or covariance scale
    /// (baselines); absent for methods without one.
    pub lambda: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub methods: Vec<MethodReport>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

#[derive(Debug, Clone, Copy)]
struct Fit {
    metrics: SupportMetrics,
    loss: Option<f64>,
    lambda: Option<f64>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let start = Instant::now();
    let truth = spec.model.matrix(spec.d)?;
    let generator = Generator::new(spec.distribution, &truth)?;

    let per_rep: Vec<Vec<Fit>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(spec.seed, rep as u64);
            replicate(spec, &generator, &truth, &mut rng).map_err(|e| CovError::Replication {
                index: rep,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let methods = spec
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let fits: Vec<Fit> = per_rep.iter().map(|r| r[k]).collect();
            let collect = |f: &dyn Fn(&Fit) -> Option<f64>| -> Option<Summary> {
                let v: Option<Vec<f64>> = fits.iter().map(f).collect();
                v.map(|v| Summary::of(&v))
            };
            MethodReport {
                method,
                label: method.to_string(),
                fp_percent: Summary::of(
                    &fits
                        .iter()
                        .map(|f| 100.0 * f.metrics.false_positive_rate)
                        .collect::<Vec<_>>(),
                ),
                tp_percent: Summary::of(
                    &fits
                        .iter()
                        .map(|f| 100.0 * f.metrics.true_positive_rate)
                        .collect::<Vec<_>>(),
                ),
                op_loss: collect(&|f| f.loss),
                exact_recovery_rate: fits.iter().filter(|f| f.metrics.exact_recovery()).count()
                    as f64
                    / fits.len() as f64,
                lambda: collect(&|f| f.lambda),
            }
        })
        .collect();

    let mut notes = Vec::new();
    if spec.distribution == Distribution::Rademacher {
        notes.push(
            "rademacher data are signs of a latent gaussian with correlation sin(pi*sigma/2)"
                .to_string(),
        );
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        methods,
        notes,
        wall_clock: start.elapsed(),
    })
}

fn replicate(
    spec: &ExperimentSpec,
    generator: &Generator,
    truth: &SymMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Fit>> {
    let sample = generator.draw(spec.n, rng)?;
    let emp = empirical_cov(&sample);
    spec.methods
        .iter()
        .map(|method| {
            let (estimate, lambda) = match *method {
                Method::CoM { rho } => {
                    let fit = sparse_estimate(&emp, &EstimatorConfig::fpr(rho))?;
                    (fit.matrix, Some(fit.lambda_star))
                }
                Method::Baseline { rule } => {
                    let cfg = CvConfig {
                        splits: spec.cv_splits,
                        grid_size: spec.cv_grid_size,
                        ..CvConfig::new(rule)
                    };
                    let cv = cv_threshold(&sample, &cfg, rng)?;
                    (cv.estimate, Some(cv.lambda))
                }
                Method::Diagonal => (diagonal_estimator(&sample), None),
                Method::Empirical => (emp.clone(), None),
            };
            let loss = if spec.loss_report {
                Some(estimate.sub(truth)?.operator_norm())
            } else {
                None
            };
            Ok(Fit {
                metrics: support_metrics(&estimate, truth, 0.0)?,
                loss,
                lambda,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub rho: f64,
    pub mean_norm: f64,
}

/// Mean operator norm of `(R o B) o eps` where `R` has iid Uniform(-1, 1)
/// off-diagonal entries and zero diagonal, `B` is a symmetric Bernoulli(rho)
/// mask and `eps` a symmetric Rademacher sign matrix.
pub fn symmetrization_scan(
    d: usize,
    rho_grid: &[f64],
    reps: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ScanPoint>> {
    if reps == 0 {
        return Err(CovError::Config("reps must be at least 1".into()));
    }
    rho_grid
        .iter()
        .map(|&rho| {
            check_domain(
                "rho",
                rho,
                (0.0..=1.0).contains(&rho),
                "rate must lie in [0, 1]",
            )?;
            let mask = Bernoulli::new(rho).expect("rho checked");
            let mut total = 0.0;
            for _ in 0..reps {
                let m = SymMatrix::from_lower_fn(d, |i, j| {
                    if i == j {
                        return 0.0;
                    }
                    let r: f64 = rng.random_range(-1.0..1.0);
                    let keep = rng.sample(mask);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    if keep {
                        r * sign
                    } else {
                        0.0
                    }
                })?;
                total += m.operator_norm();
            }
            Ok(ScanPoint {
                rho,
                mean_norm: total / reps as f64,
            })
        })
        .collect()
}

/// Least-squares slope of `log(mean_norm)` against `log(rho)`; points with a
/// zero rate or norm are skipped.
pub fn loglog_slope(points: &[ScanPoint]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.rho > 0.0 && p.mean_norm > 0.0)
        .map(|p| (p.rho.ln(), p.mean_norm.ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let m = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / m;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FStat {
    pub index: usize,
    pub f: f64,
}

/// One-way ANOVA F statistic per variable, sorted by decreasing `f`; ties
/// keep variable order.
pub fn fstat_rank<L: Ord>(s: &Sample, labels: &[L]) -> Result<Vec<FStat>> {
    let n = s.n();
    if labels.len() != n {
        return Err(CovError::Labels(format!(
            "{} labels for {} observations",
            labels.len(),
            n
        )));
    }
    let mut classes: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (row, label) in labels.iter().enumerate() {
        classes.entry(label).or_default().push(row);
    }
    let k = classes.len();
    if k < 2 {
        return Err(CovError::Labels(format!(
            "need at least 2 classes, found {k}"
        )));
    }
    if let Some((pos, rows)) = classes.values().enumerate().find(|(_, r)| r.len() < 2) {
        return Err(CovError::Labels(format!(
            "class {} has {} observation(s); at least 2 required",
            pos + 1,
            rows.len()
        )));
    }

    let data = s.data();
    let mut stats: Vec<FStat> = (0..s.d())
        .map(|col| {
            let column = data.column(col);
            let grand = column.mean();
            let (mut between, mut within) = (0.0, 0.0);
            for rows in classes.values() {
                let nm = rows.len() as f64;
                let mean = rows.iter().map(|&r| column[r]).sum::<f64>() / nm;
                between += nm * (mean - grand).powi(2);
                within += rows
                    .iter()
                    .map(|&r| (column[r] - mean).powi(2))
                    .sum::<f64>();
            }
            let num = between / (k - 1) as f64;
            let den = within / (n - k) as f64;
            let f = if den > 0.0 {
                num / den
            } else if num > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            FStat { index: col, f }
        })
        .collect();
    stats.sort_by(|a, b| b.f.total_cmp(&a.f).then(a.index.cmp(&b.index)));
    Ok(stats)
}
