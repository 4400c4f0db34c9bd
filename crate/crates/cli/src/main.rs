mod csvio;
mod simspec;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covcal::calibrate::{theorem1_gap, FprRadius, GapDesign};
use covcal::simharness::{loglog_slope, MethodReport, ScanPoint};
use covcal::{
    empirical_cov, fstat_rank, psd_repair, run_experiment, sparse_estimate, symmetrization_scan,
    CovError, CovModel, Distribution, EstimatorConfig, ExperimentReport, Metric, RadiusSource,
    Regime, RepairMode, SparseCovEstimate, SymMatrix, ThresholdRule,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::csvio::{read_labels, read_sample, write_json, write_matrix, Table};
use crate::simspec::{parse_spec, DEFAULT_SEED};

const THREADS_ENV: &str = "COVCAL_THREADS";

#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Degenerate(String),
    Conflict(String),
    Io(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Conflict(_) => 4,
            CliError::Io(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Degenerate(m) => write!(f, "degenerate data: {m}"),
            CliError::Conflict(m) => write!(f, "invalid flag combination: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

fn runtime(e: CovError) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "covcal",
    version,
    about = "Sparse covariance estimation in calibrated confidence balls"
)]
struct Cli {
    /// Worker threads (falls back to COVCAL_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a sparse covariance matrix from a CSV sample.
    Estimate(EstimateArgs),
    /// Run replicated simulations described by a spec file.
    Simulate(SimulateArgs),
    /// Rank variables by class F statistic and estimate on the selected block.
    Genes(GenesArgs),
    /// Monte Carlo diagnostics.
    #[command(subcommand)]
    Diagnostics(Diagnostic),
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeKind {
    Logconcave,
    Subexp,
    Bounded,
}

#[derive(Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PsdMode {
    None,
    Shift,
    Clip,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Target false positive rate in (0, 0.5]; the default when no radius
    /// source is given is 0.05.
    #[arg(long)]
    rho: Option<f64>,
    /// Coverage level for a concentration-based radius.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    regime: Option<RegimeKind>,
    /// Log-concavity constant.
    #[arg(long = "c")]
    c: Option<f64>,
    /// Sub-exponential constant.
    #[arg(long = "K", alias = "k")]
    k: Option<f64>,
    /// Norm bound for bounded data.
    #[arg(long = "U", alias = "u")]
    u: Option<f64>,
    #[arg(long, default_value = "hard")]
    rule: String,
    #[arg(long, default_value = "op")]
    metric: String,
    #[arg(long, default_value_t = 10)]
    iters: u32,
    #[arg(long, value_enum, default_value = "none")]
    psd: PsdMode,
    /// Eigenvalue floor used by the PSD repair.
    #[arg(long, default_value_t = 1e-6)]
    psd_eps: f64,
    #[arg(long)]
    output_prefix: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    output_prefix: PathBuf,
}

#[derive(Args)]
struct GenesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 40)]
    top: usize,
    #[arg(long, default_value_t = 160)]
    bottom: usize,
    #[arg(long, default_value_t = 0.05)]
    rho: f64,
    #[arg(long)]
    output_prefix: PathBuf,
}

#[derive(Subcommand)]
enum Diagnostic {
    /// Interpolation gap between oracle-thresholded estimators.
    Theorem1 {
        #[arg(long, default_value_t = 100)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0.25)]
        rho: f64,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long, default_value = "ar:0")]
        model: String,
        #[arg(long, default_value = "gaussian")]
        distribution: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Write JSON here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Operator norm of masked, sign-flipped random matrices across rates.
    Lemma2 {
        #[arg(long, default_value_t = 200)]
        d: usize,
        /// Comma-separated rates; defaults to 2^-8, ..., 2^-2.
        #[arg(long, value_delimiter = ',')]
        rho_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads(cli.threads).and_then(|()| match cli.command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Genes(a) => cmd_genes(&a),
        Command::Diagnostics(d) => cmd_diagnostics(d),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("covcal: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Parse(format!("{THREADS_ENV}=`{v}` is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Parse("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_sample(path: &Path) -> Result<Table, CliError> {
    if !path.is_file() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    read_sample(path)
}

/// Degenerate-variable errors name the offending column.
fn estimate_error(e: CovError, names: &[String]) -> CliError {
    match e {
        CovError::DegenerateVariable { index, variance } => CliError::Degenerate(format!(
            "column {} (`{}`) has variance {variance}",
            index + 1,
            names.get(index).map(String::as_str).unwrap_or("?")
        )),
        CovError::TooFewVariables { .. } | CovError::SampleSize { .. } => {
            CliError::Degenerate(e.to_string())
        }
        other => runtime(other),
    }
}

fn check_output_dir(prefix: &Path) -> Result<(), CliError> {
    match prefix.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::Io(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn radius_source(a: &EstimateArgs, n: usize) -> Result<RadiusSource, CliError> {
    let conflict = |m: &str| Err(CliError::Conflict(m.into()));
    let constants = [a.c.is_some(), a.k.is_some(), a.u.is_some()];
    match (a.rho, a.alpha) {
        (Some(_), Some(_)) => conflict("--rho and --alpha are mutually exclusive"),
        (rho, None) => {
            if a.regime.is_some() || constants.iter().any(|&c| c) {
                return conflict("--regime and its constants require --alpha");
            }
            Ok(RadiusSource::Fpr {
                rho: rho.unwrap_or(0.05),
            })
        }
        (None, Some(alpha)) => {
            let Some(kind) = a.regime else {
                return conflict("--alpha requires --regime");
            };
            if constants.iter().filter(|&&c| c).count() != 1 {
                return conflict("give exactly one regime constant (--c, --K or --U)");
            }
            let parse = |e: CovError| CliError::Parse(e.to_string());
            let regime = match (kind, a.c, a.k, a.u) {
                (RegimeKind::Logconcave, Some(c), _, _) => Regime::log_concave(c).map_err(parse)?,
                (RegimeKind::Subexp, _, Some(k), _) => Regime::sub_exponential(k).map_err(parse)?,
                (RegimeKind::Bounded, _, _, Some(u)) => Regime::bounded(u).map_err(parse)?,
                _ => return conflict("regime constant does not match --regime"),
            };
            Ok(RadiusSource::Alpha { regime, alpha, n })
        }
    }
}

fn parse_metric(s: &str) -> Result<Metric, CliError> {
    let t = s.trim().to_ascii_lowercase();
    let bad = || CliError::Parse(format!("unknown metric `{s}`"));
    match t.as_str() {
        "op" | "operator" => Ok(Metric::OperatorNorm),
        "fro" | "frobenius" => Ok(Metric::FrobeniusNorm),
        _ => {
            let rest = t.strip_prefix("entrywise:").ok_or_else(bad)?;
            let (p, q) = rest.split_once(':').ok_or_else(bad)?;
            let num = |v: &str| -> Result<f64, CliError> {
                match v {
                    "inf" => Ok(f64::INFINITY),
                    _ => v.parse().map_err(|_| bad()),
                }
            };
            Ok(Metric::Entrywise {
                p: num(p)?,
                q: num(q)?,
            })
        }
    }
}

#[derive(Serialize)]
struct RepairReport {
    mode: PsdMode,
    epsilon: f64,
    gamma: Option<f64>,
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    schema: &'static str,
    input: String,
    n: usize,
    d: usize,
    variables: &'a [String],
    rho: Option<f64>,
    alpha: Option<f64>,
    radius: f64,
    lambda_star: f64,
    distance: f64,
    calibration: Option<FprRadius>,
    support_size: usize,
    /// 1-indexed `(i, j)` with `i > j`.
    support: Vec<[usize; 2]>,
    psd_repair: Option<RepairReport>,
    config: EstimatorConfig,
    warnings: &'a [String],
    seed: u64,
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let table = load_sample(&a.input)?;
    check_output_dir(&a.output_prefix)?;
    let rule: ThresholdRule = a
        .rule
        .parse()
        .map_err(|e: CovError| CliError::Parse(e.to_string()))?;
    if a.psd != PsdMode::None && !(a.psd_eps >= 0.0 && a.psd_eps.is_finite()) {
        return Err(CliError::Parse("--psd-eps must be finite and >= 0".into()));
    }
    let config = EstimatorConfig {
        rule,
        metric: parse_metric(&a.metric)?,
        iterations: a.iters,
        radius_source: radius_source(a, table.sample.n())?,
    };
    config
        .validate()
        .map_err(|e| CliError::Parse(e.to_string()))?;

    let emp = empirical_cov(&table.sample);
    let fit: SparseCovEstimate =
        sparse_estimate(&emp, &config).map_err(|e| estimate_error(e, &table.names))?;
    let (matrix, repair) = match a.psd {
        PsdMode::None => (fit.matrix.clone(), None),
        mode => {
            let repair_mode = if mode == PsdMode::Shift {
                RepairMode::ShiftIdentity
            } else {
                RepairMode::ClipEigen
            };
            let r = psd_repair(&fit.matrix, repair_mode, a.psd_eps).map_err(runtime)?;
            let report = RepairReport {
                mode,
                epsilon: a.psd_eps,
                gamma: r.gamma,
            };
            (r.matrix, Some(report))
        }
    };

    let header = table.has_header.then_some(table.names.as_slice());
    write_matrix(
        &with_suffix(&a.output_prefix, ".matrix.csv"),
        &matrix,
        header,
    )?;
    let (rho, alpha) = match config.radius_source {
        RadiusSource::Fpr { rho } => (Some(rho), None),
        RadiusSource::Alpha { alpha, .. } => (None, Some(alpha)),
        RadiusSource::Explicit { .. } => (None, None),
    };
    let report = EstimateReport {
        schema: "covcal.estimate/1",
        input: a.input.display().to_string(),
        n: table.sample.n(),
        d: table.sample.d(),
        variables: &table.names,
        rho,
        alpha,
        radius: fit.radius,
        lambda_star: fit.lambda_star,
        distance: fit.distance,
        calibration: fit.calibration,
        support_size: fit.support.len(),
        support: fit.support.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        psd_repair: repair,
        config,
        warnings: &fit.warnings,
        seed: a.seed,
    };
    write_json(&with_suffix(&a.output_prefix, ".json"), &report)?;
    for w in &fit.warnings {
        eprintln!("covcal: warning: {w}");
    }
    eprintln!(
        "lambda* = {}, radius = {}, support size = {}",
        fit.lambda_star,
        fit.radius,
        fit.support.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    schema: &'static str,
    reports: &'a [ExperimentReport],
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.spec)
        .map_err(|e| CliError::Io(format!("{}: {e}", a.spec.display())))?;
    let specs = parse_spec(&text)?;
    check_output_dir(&a.output_prefix)?;
    let mut reports = Vec::with_capacity(specs.len());
    for spec in &specs {
        let report = run_experiment(spec).map_err(runtime)?;
        eprintln!(
            "d = {}: {} replications in {:.2?}",
            spec.d, spec.reps, report.wall_clock
        );
        reports.push(report);
    }
    write_table(&with_suffix(&a.output_prefix, ".csv"), &reports)?;
    write_json(
        &with_suffix(&a.output_prefix, ".json"),
        &SimulateReport {
            schema: "covcal.simulate/1",
            reports: &reports,
        },
    )
}

/// Methods as rows, dimensions as columns.
type StatFn = fn(&MethodReport) -> Option<f64>;

fn write_table(path: &Path, reports: &[ExperimentReport]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["method".to_string(), "statistic".to_string()];
    header.extend(reports.iter().map(|r| format!("d={}", r.spec.d)));
    w.write_record(&header).map_err(io)?;
    let Some(first) = reports.first() else {
        return Ok(());
    };
    for (k, method) in first.methods.iter().enumerate() {
        let mut rows: Vec<(&str, StatFn)> = vec![
            ("fp_mean", |m| Some(m.fp_percent.mean)),
            ("fp_sd", |m| Some(m.fp_percent.sd)),
            ("tp_mean", |m| Some(m.tp_percent.mean)),
            ("tp_sd", |m| Some(m.tp_percent.sd)),
        ];
        if first.spec.loss_report {
            rows.push(("loss_mean", |m| m.op_loss.map(|s| s.mean)));
            rows.push(("loss_sd", |m| m.op_loss.map(|s| s.sd)));
        }
        for (stat, get) in rows {
            let mut record = vec![method.label.clone(), stat.to_string()];
            record.extend(reports.iter().map(|r| {
                get(&r.methods[k])
                    .map(|v| format!("{v:.3}"))
                    .unwrap_or_default()
            }));
            w.write_record(&record).map_err(io)?;
        }
    }
    w.flush()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct RankedVariable<'a> {
    rank: usize,
    variable: &'a str,
    column: usize,
    f: f64,
}

#[derive(Serialize)]
struct BlockSummary {
    /// Nonzero off-diagonal percentage inside the top-ranked block.
    informative_percent: Option<f64>,
    /// Nonzero percentage over every other off-diagonal pair.
    uninformative_percent: Option<f64>,
}

#[derive(Serialize)]
struct GenesReport<'a> {
    schema: &'static str,
    n: usize,
    d: usize,
    classes: usize,
    top: usize,
    bottom: usize,
    rho: f64,
    selected: Vec<&'a str>,
    lambda_star: f64,
    radius: f64,
    nonzero: BlockSummary,
}

fn cmd_genes(a: &GenesArgs) -> Result<(), CliError> {
    let table = load_sample(&a.data)?;
    check_output_dir(&a.output_prefix)?;
    let labels = read_labels(&a.labels, table.sample.n())?;
    let d = table.sample.d();
    if a.top == 0 {
        return Err(CliError::Conflict("--top must be positive".into()));
    }
    if a.top + a.bottom > d {
        return Err(CliError::Conflict(format!(
            "--top {} plus --bottom {} exceeds the {d} variables",
            a.top, a.bottom
        )));
    }
    let ranked = fstat_rank(&table.sample, &labels).map_err(|e| match e {
        CovError::Labels(m) => CliError::Parse(m),
        other => runtime(other),
    })?;

    let mut fstat = csv::Writer::from_path(with_suffix(&a.output_prefix, ".fstat.csv"))
        .map_err(|e| CliError::Io(e.to_string()))?;
    for (rank, s) in ranked.iter().enumerate() {
        fstat
            .serialize(RankedVariable {
                rank: rank + 1,
                variable: &table.names[s.index],
                column: s.index + 1,
                f: s.f,
            })
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    fstat.flush().map_err(|e| CliError::Io(e.to_string()))?;

    let selected: Vec<usize> = ranked[..a.top]
        .iter()
        .chain(&ranked[d - a.bottom..])
        .map(|s| s.index)
        .collect();
    let block = table.sample.select_columns(&selected).map_err(runtime)?;
    let names: Vec<String> = selected.iter().map(|&j| table.names[j].clone()).collect();
    let fit = sparse_estimate(&empirical_cov(&block), &EstimatorConfig::fpr(a.rho)).map_err(
        |e| match e {
            CovError::Domain { .. } => CliError::Parse(e.to_string()),
            other => estimate_error(other, &names),
        },
    )?;
    write_matrix(
        &with_suffix(&a.output_prefix, ".matrix.csv"),
        &fit.matrix,
        Some(&names),
    )?;
    let summary = block_summary(&fit.corr_matrix, a.top);
    eprintln!(
        "informative nonzero: {}, uninformative nonzero: {}",
        fmt_percent(summary.informative_percent),
        fmt_percent(summary.uninformative_percent)
    );
    write_json(
        &with_suffix(&a.output_prefix, ".json"),
        &GenesReport {
            schema: "covcal.genes/1",
            n: table.sample.n(),
            d,
            classes: labels
                .iter()
                .collect::<std::collections::BTreeSet<_>>()
                .len(),
            top: a.top,
            bottom: a.bottom,
            rho: a.rho,
            selected: names.iter().map(String::as_str).collect(),
            lambda_star: fit.lambda_star,
            radius: fit.radius,
            nonzero: summary,
        },
    )
}

fn fmt_percent(v: Option<f64>) -> String {
    v.map(|p| format!("{p:.1}%"))
        .unwrap_or_else(|| "n/a".into())
}

fn block_summary(m: &SymMatrix, top: usize) -> BlockSummary {
    let (mut inner, mut inner_nz, mut outer, mut outer_nz) = (0usize, 0usize, 0usize, 0usize);
    let d = m.dim();
    for j in 0..d {
        for i in (j + 1)..d {
            let nz = m.get(i, j) != 0.0;
            if i < top {
                inner += 1;
                inner_nz += nz as usize;
            } else {
                outer += 1;
                outer_nz += nz as usize;
            }
        }
    }
    let pct = |k: usize, total: usize| (total > 0).then(|| 100.0 * k as f64 / total as f64);
    BlockSummary {
        informative_percent: pct(inner_nz, inner),
        uninformative_percent: pct(outer_nz, outer),
    }
}

#[derive(Serialize)]
struct Lemma2Report {
    schema: &'static str,
    d: usize,
    reps: usize,
    seed: u64,
    points: Vec<ScanPoint>,
    loglog_slope: Option<f64>,
}

fn cmd_diagnostics(d: Diagnostic) -> Result<(), CliError> {
    let parse = |e: CovError| CliError::Parse(e.to_string());
    match d {
        Diagnostic::Theorem1 {
            d,
            n,
            rho,
            reps,
            model,
            distribution,
            seed,
            output,
        } => {
            let design = GapDesign {
                d,
                n,
                model: model.parse::<CovModel>().map_err(parse)?,
                distribution: distribution.parse::<Distribution>().map_err(parse)?,
            };
            let gap = theorem1_gap(&design, rho, reps, seed).map_err(|e| match e {
                CovError::Domain { .. } | CovError::Config(_) => parse(e),
                other => runtime(other),
            })?;
            emit(output.as_deref(), &gap)
        }
        Diagnostic::Lemma2 {
            d,
            rho_grid,
            reps,
            seed,
            output,
        } => {
            let grid = rho_grid.unwrap_or_else(|| (2..=8).rev().map(|k| 0.5f64.powi(k)).collect());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points = symmetrization_scan(d, &grid, reps, &mut rng).map_err(parse)?;
            let report = Lemma2Report {
                schema: "covcal.lemma2/1",
                d,
                reps,
                seed,
                loglog_slope: loglog_slope(&points),
                points,
            };
            emit(output.as_deref(), &report)
        }
    }
}

fn emit<T: Serialize>(output: Option<&Path>, value: &T) -> Result<(), CliError> {
    match output {
        Some(path) => write_json(path, value),
        None => {
            let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
            println!("{s}");
            Ok(())
        }
    }
}
