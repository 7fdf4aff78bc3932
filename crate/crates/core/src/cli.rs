//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage error, 3 data error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::datagen::{self, CorpusSpec};
use crate::document::{self, LabeledDocument};
use crate::estimator::{DecodeMode, HierarchicalEstimator, Mode};
use crate::hierarchy::{kzis, ClassCode, HierarchyTree};
use crate::linear::TrainConfig;
use crate::metrics::{self, CoderPair, CoderTable};
use crate::persist::{self, write_atomic};
use crate::report::{self, ReportError};
use crate::sampling::{self, StrataKey};
use crate::text::{TfidfModel, DEFAULT_MIN_DF};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug)]
enum CliError {
    /// Bad or inconsistent input data.
    Data(String),
    /// Anything else: failed writes, violated internal guarantees.
    Internal(String),
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

type CliResult = Result<i32, CliError>;

#[derive(Debug, Parser)]
#[command(name = "htax", version, about = "Hierarchical probability estimation for prefix-code taxonomies")]
struct Cli {
    /// Seed for training, sampling and corpus generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Pin the worker pool to one thread unless --threads is given.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a hierarchical estimator.
    Train(TrainArgs),
    /// Write per-level top-k predictions as JSONL.
    Predict(PredictArgs),
    /// Evaluate a model and write a JSON report.
    Evaluate(EvaluateArgs),
    /// Draw a stratified sample.
    Sample(SampleArgs),
    /// Split documents into train and test sets.
    Split(SplitArgs),
    /// Coder agreement and Cohen's kappa per digit level.
    Agree(AgreeArgs),
    /// Generate a synthetic long-tailed corpus.
    Synth(SynthArgs),
    /// Check a dataset against a hierarchy.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct TreeArgs {
    /// Hierarchy file: one leaf code per line, optional tab-separated label.
    #[arg(long)]
    hierarchy: PathBuf,
    /// Digits per code segment.
    #[arg(long, default_value = "1,1,1,1,2", value_delimiter = ',')]
    segments: Vec<usize>,
}

impl TreeArgs {
    fn load(&self) -> Result<HierarchyTree, CliError> {
        HierarchyTree::from_hierarchy_file(&self.hierarchy, &self.segments).map_err(data)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value = "bottom_up")]
    mode: Mode,
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_DF)]
    min_df: usize,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    warmup_steps: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value = "leaf_argmax")]
    decode: DecodeMode,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "leaf_argmax")]
    decode: DecodeMode,
    /// Report file (default: stdout).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    /// Comma-separated strata fields: source, code, chars.
    #[arg(long, default_value = "source,code", value_parser = StrataKey::parse)]
    strata: StrataKey,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    /// Sources sent wholly to the training set (e.g. a code dictionary).
    #[arg(long, value_delimiter = ',')]
    always_train: Vec<String>,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AgreeArgs {
    /// JSONL of {"coder_a": .., "coder_b": .., "weight": ..}.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "1,2,4,6", value_delimiter = ',')]
    digits: Vec<usize>,
    #[arg(long, default_value = "1,1,1,1,2", value_delimiter = ',')]
    segments: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Use the built-in KZiS-shaped tree instead of --hierarchy.
    #[arg(long, conflicts_with = "hierarchy")]
    kzis: bool,
    #[arg(long, required_unless_present = "kzis")]
    hierarchy: Option<PathBuf>,
    #[arg(long, default_value = "1,1,1,1,2", value_delimiter = ',')]
    segments: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    docs: usize,
    #[arg(long, default_value_t = 1.0, conflicts_with = "tune_tail")]
    tail_exponent: f64,
    /// Pick the exponent so this share of leaves has fewer than
    /// --tail-threshold documents.
    #[arg(long)]
    tune_tail: Option<f64>,
    #[arg(long, default_value_t = 10)]
    tail_threshold: usize,
    #[arg(long, default_value_t = 0.5)]
    signal: f64,
    #[arg(long, default_value_t = 0.0)]
    multi_code_rate: f64,
    #[arg(long, default_value = "synthetic")]
    source: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write the hierarchy used.
    #[arg(long)]
    hierarchy_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long)]
    data: PathBuf,
    /// Exit with a data error on any finding.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = cli.threads.or(cli.deterministic.then_some(1));
    let pool = match threads.map(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build()) {
        Some(Ok(pool)) => Some(pool),
        Some(Err(e)) => {
            eprintln!("error: {e}");
            return EXIT_INTERNAL;
        }
        None => None,
    };
    let result = match pool {
        Some(pool) => pool.install(|| dispatch(&cli)),
        None => dispatch(&cli),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Data(msg)) => {
            eprintln!("data error: {msg}");
            EXIT_DATA
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INTERNAL
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Train(a) => train(a, cli.seed),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sample(a) => sample(a, cli.seed),
        Command::Split(a) => split(a, cli.seed),
        Command::Agree(a) => agree(a),
        Command::Synth(a) => synth(a, cli.seed),
        Command::Validate(a) => validate(a),
    }
}

fn read_docs(path: &Path) -> Result<Vec<LabeledDocument>, CliError> {
    let file = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    document::read_jsonl(BufReader::new(file)).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_docs(path: &Path, docs: &[LabeledDocument]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    document::write_jsonl(&mut buf, docs).map_err(internal)?;
    write_file(path, &buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(internal)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Writes to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(internal(e)),
                _ => Ok(()),
            }
        }
    }
}

fn train(a: &TrainArgs, seed: u64) -> CliResult {
    let tree = a.tree.load()?;
    let docs = read_docs(&a.data)?;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: a.learning_rate.unwrap_or(defaults.learning_rate),
        weight_decay: a.weight_decay.unwrap_or(defaults.weight_decay),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        warmup_steps: a.warmup_steps.unwrap_or(defaults.warmup_steps),
        seed,
        ..defaults
    };
    config.validate().map_err(data)?;
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let tfidf = TfidfModel::fit(&texts, a.min_df).map_err(data)?;
    let est = HierarchicalEstimator::train(a.mode, &tree, &docs, &tfidf, &config).map_err(data)?;
    est.save(&a.out).map_err(internal)?;
    eprintln!(
        "trained {} model(s) over {} leaves, vocabulary {}; wrote {}",
        est.model_count(),
        tree.leaf_count(),
        tfidf.vocabulary_size(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn load_model(path: &Path) -> Result<HierarchicalEstimator, CliError> {
    HierarchicalEstimator::load(path).map_err(|e| match e {
        persist::PersistError::Io(io) => data(format!("{}: {io}", path.display())),
        other => data(format!("{}: {other}", path.display())),
    })
}

#[derive(Serialize)]
struct ScoredCode {
    code: ClassCode,
    probability: f64,
}

#[derive(Serialize)]
struct LevelPrediction {
    level: usize,
    digits: usize,
    top: Vec<ScoredCode>,
}

#[derive(Serialize)]
struct Prediction {
    id: String,
    path: Vec<ClassCode>,
    levels: Vec<LevelPrediction>,
}

fn predict(a: &PredictArgs) -> CliResult {
    use rayon::prelude::*;
    if a.top_k == 0 {
        return Err(data("--top-k must be at least 1"));
    }
    let est = load_model(&a.model)?;
    let docs = read_docs(&a.data)?;
    let digits = est.tree().digit_lengths();
    let lines = docs
        .par_iter()
        .map(|d| {
            let profile = est.estimate(&d.text);
            let levels = (1..=profile.level_count())
                .map(|level| {
                    let top = profile.top_k(level, a.top_k).map_err(internal)?;
                    Ok(LevelPrediction {
                        level,
                        digits: digits[level - 1],
                        top: top
                            .into_iter()
                            .map(|(code, probability)| ScoredCode { code, probability })
                            .collect(),
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let p = Prediction {
                id: d.id.clone(),
                path: profile.predict_path(a.decode),
                levels,
            };
            serde_json::to_string(&p).map_err(internal)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn evaluate(a: &EvaluateArgs) -> CliResult {
    let est = load_model(&a.model)?;
    let docs = read_docs(&a.data)?;
    let report = report::evaluate(&est, &docs, a.decode).map_err(|e| match e {
        ReportError::NonMonotonePath { .. } => internal(e),
        other => data(other),
    })?;
    let mut text = report.to_json();
    text.push('\n');
    emit(a.report.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn sample(a: &SampleArgs, seed: u64) -> CliResult {
    let docs = read_docs(&a.data)?;
    let s = sampling::stratified_sample(&docs, &a.strata, a.fraction, seed).map_err(data)?;
    write_docs(&a.out, &s.documents)?;
    if let Some(m) = &a.manifest {
        write_json(m, &s.manifest)?;
    }
    eprintln!("sampled {} of {} documents", s.documents.len(), docs.len());
    Ok(EXIT_OK)
}

fn split(a: &SplitArgs, seed: u64) -> CliResult {
    let docs = read_docs(&a.data)?;
    let always: BTreeSet<String> = a.always_train.iter().cloned().collect();
    let s = sampling::train_test_split(&docs, &always, a.train_fraction, seed).map_err(data)?;
    write_docs(&a.train_out, &s.train)?;
    write_docs(&a.test_out, &s.test)?;
    if let Some(m) = &a.manifest {
        write_json(m, &s.manifest)?;
    }
    eprintln!("train {} / test {}", s.train.len(), s.test.len());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct AgreementRow {
    #[serde(flatten)]
    estimate: metrics::AgreementEstimate,
    kappa: Option<f64>,
}

fn agree(a: &AgreeArgs) -> CliResult {
    let file = File::open(&a.data).map_err(|e| data(format!("{}: {e}", a.data.display())))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(data)?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: CoderPair = serde_json::from_str(&line).map_err(|e| data(format!("line {}: {e}", i + 1)))?;
        pairs.push(pair);
    }
    let allowed: Vec<usize> = a
        .segments
        .iter()
        .scan(0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let table = CoderTable::new(pairs, allowed);
    let rows = a
        .digits
        .iter()
        .map(|&d| {
            let estimate = metrics::agreement_rate(&table, d).map_err(data)?;
            // kappa is undefined when both coders use a single category
            let kappa = metrics::cohens_kappa(&table, d).ok();
            Ok(AgreementRow { estimate, kappa })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut text = serde_json::to_string_pretty(&rows).map_err(internal)?;
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn synth(a: &SynthArgs, seed: u64) -> CliResult {
    let tree = if a.kzis {
        kzis::kzis_shaped_tree().map_err(internal)?
    } else {
        let path = a.hierarchy.as_ref().expect("clap enforces --hierarchy");
        HierarchyTree::from_hierarchy_file(path, &a.segments).map_err(data)?
    };
    let tail_exponent = match a.tune_tail {
        Some(target) if (0.0..=1.0).contains(&target) => {
            datagen::tune_tail_exponent(tree.leaf_count(), a.docs, a.tail_threshold, target)
        }
        Some(target) => return Err(data(format!("--tune-tail {target} is not a fraction"))),
        None => a.tail_exponent,
    };
    let spec = CorpusSpec {
        total_docs: a.docs,
        tail_exponent,
        class_token_signal: a.signal,
        multi_code_rate: a.multi_code_rate,
        source: a.source.clone(),
        seed,
        ..CorpusSpec::default()
    };
    let docs = datagen::generate_corpus(&tree, &spec).map_err(data)?;
    write_docs(&a.out, &docs)?;
    if let Some(h) = &a.hierarchy_out {
        write_file(h, tree.to_hierarchy_text().as_bytes())?;
    }
    let counts = datagen::zipf_counts(tree.leaf_count(), a.docs, tail_exponent);
    if let Some(target) = a.tune_tail {
        let got = datagen::fraction_below(&counts, a.tail_threshold);
        if (got - target).abs() > 0.05 {
            eprintln!(
                "warning: --tune-tail {target} is not attainable with {} documents over {} leaves",
                a.docs,
                tree.leaf_count()
            );
        }
    }
    eprintln!(
        "wrote {} documents; tail exponent {tail_exponent:.4}; {:.1}% of leaves below {} documents",
        docs.len(),
        100.0 * datagen::fraction_below(&counts, a.tail_threshold),
        a.tail_threshold
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Default, Serialize)]
struct ValidationReport {
    records: usize,
    unknown_codes: Vec<CodeFinding>,
    empty_texts: Vec<String>,
    duplicate_ids: Vec<String>,
}

#[derive(Debug, Serialize)]
struct CodeFinding {
    id: String,
    code: String,
    reason: String,
}

impl ValidationReport {
    fn is_clean(&self) -> bool {
        self.unknown_codes.is_empty() && self.empty_texts.is_empty() && self.duplicate_ids.is_empty()
    }
}

fn validate(a: &ValidateArgs) -> CliResult {
    let tree = a.tree.load()?;
    let docs = read_docs(&a.data)?;
    let mut report = ValidationReport {
        records: docs.len(),
        ..ValidationReport::default()
    };
    let mut seen = BTreeMap::<&str, usize>::new();
    for d in &docs {
        *seen.entry(d.id.as_str()).or_default() += 1;
        if d.text.trim().is_empty() {
            report.empty_texts.push(d.id.clone());
        }
        for code in &d.codes {
            let reason = match tree.lookup(code) {
                Ok(c) if tree.is_leaf(&c) => continue,
                Ok(_) => "not a leaf".to_string(),
                Err(e) => e.to_string(),
            };
            report.unknown_codes.push(CodeFinding {
                id: d.id.clone(),
                code: code.clone(),
                reason,
            });
        }
    }
    report.duplicate_ids = seen
        .into_iter()
        .filter(|&(_, n)| n > 1)
        .map(|(id, _)| id.to_string())
        .collect();
    let mut text = serde_json::to_string_pretty(&report).map_err(internal)?;
    text.push('\n');
    emit(a.report.as_deref(), &text)?;
    if a.strict && !report.is_clean() {
        return Err(data("validation found problems (--strict)"));
    }
    Ok(EXIT_OK)
}
