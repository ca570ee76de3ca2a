//! Command-line front end: `estimate`, `toy` and `impossibility`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{fit_temperature, TemperatureModel};
use crate::data::{score, softmax_rows, Matrix, PredictionSet, ScoreKind};
use crate::error::{Error, Result};
use crate::estimators::{
    ac_estimate, atc_estimate, doc_estimate, fit_atc, gde_estimate, im_estimate, AtcModel,
    Estimate, Method, DEFAULT_BINS,
};
use crate::evaluation::{EstimateReport, ReportMetadata};
use crate::io::{load_labels, load_matrix, MatrixFile};
use crate::shift::{example1_errors, GaussianMixtureSpec};
use crate::toy::{run_consistency_experiment, ConsistencyRow, LinearSigmoidClassifier, ToyConfig};

pub const THREADS_ENV: &str = "SHIFT_ORACLE_THREADS";
pub const REPORT_SCHEMA: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_MISSING_LABELS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "shift-oracle", version, about = "Estimate classifier accuracy on unlabeled shifted data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate target accuracy from source validation outputs and target outputs.
    Estimate(EstimateArgs),
    /// Run the spurious-feature toy experiment and print a CSV table.
    Toy(ToyArgs),
    /// Compare covariate-shift and label-shift reweighted error on a Gaussian mixture.
    Impossibility(ImpossibilityArgs),
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Source validation logits.
    #[arg(long, conflicts_with = "source_probs", required_unless_present = "source_probs")]
    source_logits: Option<PathBuf>,
    /// Source validation class probabilities.
    #[arg(long)]
    source_probs: Option<PathBuf>,
    /// Source labels (CSV with header `y`).
    #[arg(long)]
    source_labels: Option<PathBuf>,
    /// Target outputs, same kind as the source (logits or probabilities). Repeatable.
    #[arg(long, required = true)]
    target: Vec<PathBuf>,
    /// Labels for each `--target`, in the same order, to report true accuracy.
    #[arg(long)]
    target_labels: Vec<PathBuf>,
    /// Second model's outputs on each `--target`, for gde.
    #[arg(long)]
    target_b: Vec<PathBuf>,
    /// Comma-separated methods: atc-mc, atc-ne, ac, doc, im, gde.
    #[arg(long, value_delimiter = ',', default_value = "atc-mc,atc-ne,ac,doc,im")]
    method: Vec<String>,
    /// Fit temperature scaling on the source split before estimating.
    #[arg(long)]
    calibrate: bool,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Record the wall-clock time in the report metadata.
    #[arg(long)]
    timestamp: bool,
}

#[derive(Debug, Args)]
struct ToyArgs {
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Narrower target support bound for x_inv.
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    p_spr: f64,
    /// Comma-separated target agreement rates.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    p_grid: Vec<f64>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    w_inv: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    w_spr: f64,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of label 1 in the target.
    #[arg(long, default_value_t = 0.5)]
    target_label_p1: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImpossibilityArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    mu1: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    mu2: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    tau: f64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a, stdout),
        Command::Toy(a) => cmd_toy(&a, stdout),
        Command::Impossibility(a) => cmd_impossibility(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingLabels(_) => EXIT_MISSING_LABELS,
        _ => EXIT_INVALID,
    }
}

fn emit(out_path: Option<&Path>, body: &str, stdout: &mut dyn Write) -> Result<()> {
    match out_path {
        Some(p) => std::fs::write(p, body)?,
        None => stdout.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return positive_threads(n);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{THREADS_ENV}='{v}' is not a thread count")))?;
        return positive_threads(n);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn positive_threads(n: usize) -> Result<usize> {
    if n == 0 {
        Err(Error::invalid("thread count must be at least 1"))
    } else {
        Ok(n)
    }
}

#[derive(Serialize)]
struct ModelSection {
    temperature: Option<TemperatureModel>,
    atc: BTreeMap<Method, AtcModel>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema: u32,
    model: ModelSection,
    metadata: &'a ReportMetadata,
    estimates: &'a [crate::evaluation::ReportEntry],
}

/// Everything derived from the source split that estimators need.
struct SourceFit {
    preds: PredictionSet,
    temperature: Option<TemperatureModel>,
    atc: BTreeMap<Method, AtcModel>,
}

/// Turns a loaded matrix into probabilities, applying the temperature when there is one.
fn to_predictions(m: &Matrix, is_logits: bool, temperature: Option<&TemperatureModel>) -> Result<PredictionSet> {
    match (is_logits, temperature) {
        (true, t) => softmax_rows(m, t.map_or(1.0, |t| t.temperature)),
        (false, None) => PredictionSet::new(m.clone(), None, ""),
        (false, Some(t)) => softmax_rows(&log_probs(m)?, t.temperature),
    }
}

/// Log-probabilities act as logits: softmax(ln p) = p. Zeros are floored.
fn log_probs(m: &Matrix) -> Result<Matrix> {
    // validate as probabilities first
    let p = PredictionSet::new(m.clone(), None, "")?;
    let data = p
        .probs()
        .as_slice()
        .iter()
        .map(|&v| v.max(f64::MIN_POSITIVE).ln())
        .collect();
    Matrix::new(m.rows(), m.cols(), data)
}

fn parse_methods(raw: &[String]) -> Result<Vec<Method>> {
    let mut methods: Vec<Method> = Vec::new();
    for s in raw.iter().filter(|s| !s.trim().is_empty()) {
        let m: Method = s.parse()?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(Error::invalid("no methods selected"));
    }
    Ok(methods)
}

fn needs_source_labels(m: Method) -> bool {
    matches!(m, Method::AtcMc | Method::AtcNe | Method::Doc | Method::Im)
}

fn cmd_estimate(a: &EstimateArgs, stdout: &mut dyn Write) -> Result<()> {
    let methods = parse_methods(&a.method)?;
    if a.bins < 2 {
        return Err(Error::invalid(format!("--bins must be at least 2, got {}", a.bins)));
    }
    if let Some(m) = methods.iter().find(|&&m| needs_source_labels(m)) {
        if a.source_labels.is_none() {
            return Err(Error::MissingLabels(format!("method {m} needs --source-labels")));
        }
    }
    if a.calibrate && a.source_labels.is_none() {
        return Err(Error::MissingLabels("--calibrate needs --source-labels".into()));
    }
    if !a.target_labels.is_empty() && a.target_labels.len() != a.target.len() {
        return Err(Error::invalid("give one --target-labels per --target"));
    }
    if methods.contains(&Method::Gde) && a.target_b.len() != a.target.len() {
        return Err(Error::invalid("gde needs one --target-b per --target"));
    }
    let threads = thread_count(a.threads)?;

    let (source_path, is_logits) = match (&a.source_logits, &a.source_probs) {
        (Some(p), _) => (p, true),
        (None, Some(p)) => (p, false),
        (None, None) => return Err(Error::invalid("need --source-logits or --source-probs")),
    };
    let source = fit_source(a, source_path, is_logits, &methods)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {threads} threads: {e}")))?;
    let per_target: Vec<Result<Vec<TargetRow>>> = pool.install(|| {
        (0..a.target.len())
            .into_par_iter()
            .map(|i| estimate_target(a, i, is_logits, &source, &methods))
            .collect()
    });

    let metadata = ReportMetadata {
        calibrated: source.temperature.is_some(),
        score_kinds: [ScoreKind::MaxConfidence, ScoreKind::NegativeEntropy]
            .into_iter()
            .filter(|&k| methods.contains(&Method::atc_score(k)))
            .collect(),
        seed: a.seed,
        created_unix: a.timestamp.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        }),
    };
    let mut report = EstimateReport::new(metadata);
    for r in per_target {
        for (name, est, truth) in r? {
            report.push(&name, &est, truth)?;
        }
    }
    let json = JsonReport {
        schema: REPORT_SCHEMA,
        model: ModelSection {
            temperature: source.temperature,
            atc: source.atc,
        },
        metadata: &report.metadata,
        estimates: &report.entries,
    };
    let mut body = serde_json::to_string_pretty(&json)
        .map_err(|e| Error::invalid(format!("cannot serialize report: {e}")))?;
    body.push('\n');
    emit(a.out.as_deref(), &body, stdout)
}

fn fit_source(a: &EstimateArgs, path: &Path, is_logits: bool, methods: &[Method]) -> Result<SourceFit> {
    let raw = load_matrix(&MatrixFile::new(path, is_logits))?;
    let labels = a.source_labels.as_deref().map(load_labels).transpose()?;
    let temperature = if a.calibrate {
        let logits = if is_logits { raw.clone() } else { log_probs(&raw)? };
        let labels = labels.as_deref().expect("checked above");
        if labels.len() != logits.rows() {
            return Err(Error::invalid(format!(
                "{} source rows but {} labels",
                logits.rows(),
                labels.len()
            )));
        }
        Some(fit_temperature(&logits, labels)?)
    } else {
        None
    };
    let preds = to_predictions(&raw, is_logits, temperature.as_ref())?;
    let preds = match labels {
        Some(l) => preds.with_labels(l)?,
        None => preds,
    }
    .with_name(path.display().to_string());

    let mut atc = BTreeMap::new();
    for kind in [ScoreKind::MaxConfidence, ScoreKind::NegativeEntropy] {
        let method = Method::atc_score(kind);
        if methods.contains(&method) {
            let correct = preds.correctness()?;
            atc.insert(method, fit_atc(&score(&preds, kind), &correct)?);
        }
    }
    Ok(SourceFit {
        preds,
        temperature,
        atc,
    })
}

/// Target name, estimate, and true accuracy when labels were given.
type TargetRow = (String, Estimate, Option<f64>);

fn estimate_target(
    a: &EstimateArgs,
    i: usize,
    is_logits: bool,
    source: &SourceFit,
    methods: &[Method],
) -> Result<Vec<TargetRow>> {
    let path = &a.target[i];
    let name = path.display().to_string();
    let raw = load_matrix(&MatrixFile::new(path, is_logits))?;
    let mut target = to_predictions(&raw, is_logits, source.temperature.as_ref())?.with_name(&name);
    if target.num_classes() != source.preds.num_classes() {
        return Err(Error::invalid(format!(
            "{name} has {} classes, source has {}",
            target.num_classes(),
            source.preds.num_classes()
        )));
    }
    let truth = match a.target_labels.get(i) {
        Some(lp) => {
            target = target.with_labels(load_labels(lp)?)?;
            Some(1.0 - crate::data::error_rate(&target)?)
        }
        None => None,
    };

    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let est = match m {
            Method::AtcMc | Method::AtcNe => {
                let model = &source.atc[&m];
                atc_estimate(model, &score(&target, model.kind))?
            }
            Method::Ac => ac_estimate(&target),
            Method::Doc => doc_estimate(&source.preds, &target)?,
            Method::Im => im_estimate(&source.preds, &target, a.bins)?,
            Method::Gde => {
                let bp = &a.target_b[i];
                let b_raw = load_matrix(&MatrixFile::new(bp, is_logits))?;
                let b = to_predictions(&b_raw, is_logits, source.temperature.as_ref())?;
                gde_estimate(&target, &b)?
            }
        };
        out.push((name.clone(), est, truth));
    }
    Ok(out)
}

fn cmd_toy(a: &ToyArgs, stdout: &mut dyn Write) -> Result<()> {
    let config = ToyConfig {
        gamma: a.gamma,
        c: a.c,
        p_spr: a.p_spr,
        p_spr_target: a.p_spr,
        n: a.n,
        seed: a.seed,
        c_target: a.c1,
        target_label_p1: a.target_label_p1,
    };
    if a.p_grid.is_empty() {
        return Err(Error::invalid("--p-grid is empty"));
    }
    let clf = LinearSigmoidClassifier::new(a.w_inv, a.w_spr);
    let table = run_consistency_experiment(&clf, &config, &a.p_grid)?;
    let mut body = ConsistencyRow::HEADER.join(",");
    body.push('\n');
    for row in &table.rows {
        let line: Vec<String> = row.values().iter().map(|v| v.to_string()).collect();
        body.push_str(&line.join(","));
        body.push('\n');
    }
    emit(a.out.as_deref(), &body, stdout)
}

#[derive(Serialize)]
struct ImpossibilityJson {
    schema: u32,
    alpha: f64,
    beta: f64,
    mu1: f64,
    mu2: f64,
    tau: f64,
    samples: usize,
    seed: u64,
    #[serde(rename = "E1")]
    e1: f64,
    #[serde(rename = "E2")]
    e2: f64,
    stderrs: Stderrs,
}

#[derive(Serialize)]
struct Stderrs {
    #[serde(rename = "E1")]
    e1: f64,
    #[serde(rename = "E2")]
    e2: f64,
    diff: f64,
}

fn cmd_impossibility(a: &ImpossibilityArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec = GaussianMixtureSpec {
        mu1: a.mu1,
        mu2: a.mu2,
        alpha: a.alpha,
        beta: a.beta,
    };
    let r = example1_errors(&spec, a.tau, a.samples, a.seed)?;
    let json = ImpossibilityJson {
        schema: REPORT_SCHEMA,
        alpha: a.alpha,
        beta: a.beta,
        mu1: a.mu1,
        mu2: a.mu2,
        tau: a.tau,
        samples: a.samples,
        seed: a.seed,
        e1: r.e1,
        e2: r.e2,
        stderrs: Stderrs {
            e1: r.stderr_e1,
            e2: r.stderr_e2,
            diff: r.stderr_diff,
        },
    };
    let mut body = serde_json::to_string_pretty(&json)
        .map_err(|e| Error::invalid(format!("cannot serialize result: {e}")))?;
    body.push('\n');
    emit(a.out.as_deref(), &body, stdout)
}
