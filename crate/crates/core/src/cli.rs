//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input data, 3 runtime
//! failure. Summaries go to stdout as one `key=value` record per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::audit::report::{self, AUDIT_SCHEMA};
use crate::audit::CrossTestReport;
use crate::corpus::{generate_synthetic, load_corpus, save_corpus, Corpus, SynthSpec};
use crate::error::{Error, Result};
use crate::harness::{
    self, run_cross_test, run_experiment, run_year_sweep, write_outputs, ExperimentConfig, SweepParams,
};
use crate::learners::{fit, ModelKind};
use crate::seed::derive_seed;
use crate::variants::{build_variant, BuiltinVariant, Ratio, VariantSpec};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tempaudit", version, about = "Audit explainable malware classifiers for time bias")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Gen(GenArgs),
    /// Build one dataset variant and save it as a corpus file.
    Variant(VariantArgs),
    /// Train a model and save it as JSON.
    Train(TrainArgs),
    /// Run a cross-validated audit experiment.
    Audit(AuditArgs),
    /// Pin malware to one year and sweep the benign year.
    Sweep(SweepArgs),
    /// Train on one variant and audit another.
    Crosstest(CrosstestArgs),
    /// Render report.json files as a table, CSV or merged JSON.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    AndrozooRatio,
    Unbiased,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::AndrozooRatio => "androzoo-ratio",
            Preset::Unbiased => "unbiased",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generator spec (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in generator preset.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Output corpus path (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed; overrides the seed in --spec.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VariantArgs {
    /// Corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Built-in variant.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub variant: Option<BuiltinVariant>,
    /// Variant spec (JSON).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Samples drawn per (year, class) cell for a built-in variant; defaults to the smallest cell.
    #[arg(long)]
    pub per_year: Option<usize>,
    /// Output corpus path holding only the variant's samples.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus file; every sample is used unless --variant is given.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Model kind.
    #[arg(long)]
    pub model: ModelKind,
    /// Train on this built-in variant instead of the whole corpus.
    #[arg(long)]
    pub variant: Option<BuiltinVariant>,
    /// Experiment config supplying hyperparameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output model path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Corpus file; overrides the corpus named in the config.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Master seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Experiment config for models, LIME and hyperparameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model kinds (repeatable); overrides the config.
    #[arg(long = "model")]
    pub models: Vec<ModelKind>,
    /// Malware year (default: first corpus year).
    #[arg(long)]
    pub malware_year: Option<i32>,
    /// Malware:benign ratios (repeatable, e.g. 4:1).
    #[arg(long = "ratio")]
    pub ratios: Vec<Ratio>,
    /// Samples drawn per (year, class) cell before ratio downsampling.
    #[arg(long)]
    pub per_year: Option<usize>,
    /// Folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CrosstestArgs {
    /// Corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Training variant.
    #[arg(long)]
    pub train: BuiltinVariant,
    /// Test variant.
    #[arg(long)]
    pub test: BuiltinVariant,
    /// Model kind.
    #[arg(long)]
    pub model: ModelKind,
    /// Experiment config for LIME, hyperparameters and Top-T.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Samples per (year, class) cell.
    #[arg(long)]
    pub per_year: Option<usize>,
    /// Allow train and test to share samples.
    #[arg(long)]
    pub allow_overlap: bool,
    /// Output report path (JSON); stdout summary only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json files to combine.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `std::env::args` and run; returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                EXIT_DATA
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn emit(out: &mut impl Write, line: String) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn builtin_variant(corpus: &Corpus, v: BuiltinVariant, per_year: Option<usize>, seed: u64) -> Result<VariantSpec> {
    let cfg = ExperimentConfig {
        seed,
        per_year_per_class: per_year,
        ..Default::default()
    };
    harness::resolve_variant(&harness::VariantRef::Builtin(v), corpus, &cfg)
}

pub fn execute(command: Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Variant(a) => cmd_variant(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Crosstest(a) => cmd_crosstest(a, out),
        Command::Report(a) => cmd_report(a, out),
    }
}

fn cmd_gen(a: GenArgs, out: &mut impl Write) -> Result<()> {
    let spec = match (&a.spec, a.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut spec: SynthSpec = serde_json::from_str(&text)?;
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            spec
        }
        (None, preset) => {
            let name = preset.unwrap_or(Preset::Default).name();
            SynthSpec::preset(name, a.seed.unwrap_or(42)).expect("every preset name resolves")
        }
    };
    let corpus = generate_synthetic(&spec)?;
    save_corpus(&corpus, &a.out)?;
    emit(out, format!("samples={}", corpus.samples.len()))?;
    emit(out, format!("features={}", corpus.n_features()))?;
    emit(out, format!("malware_ratio={:.4}", corpus.malware_ratio()))?;
    emit(out, format!("out={}", a.out.display()))
}

fn cmd_variant(a: VariantArgs, out: &mut impl Write) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let spec = match (&a.spec, a.variant) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)?
        }
        (None, Some(v)) => builtin_variant(&corpus, v, a.per_year, a.seed)?,
        (None, None) => unreachable!("clap requires --variant or --spec"),
    };
    let variant = build_variant(&corpus, &spec)?;
    let subset = Corpus::new(corpus.catalog.clone(), variant.samples.clone())?;
    save_corpus(&subset, &a.out)?;
    emit(out, format!("variant={}", spec.name))?;
    emit(out, format!("malware={}", variant.count(crate::corpus::Label::Malware)))?;
    emit(out, format!("benign={}", variant.count(crate::corpus::Label::Benign)))?;
    emit(out, format!("temporally_consistent={}", spec.is_temporally_consistent()))?;
    emit(out, format!("out={}", a.out.display()))
}

fn cmd_train(a: TrainArgs, out: &mut impl Write) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let cfg = load_config(a.config.as_deref())?;
    let samples = match a.variant {
        Some(v) => build_variant(&corpus, &builtin_variant(&corpus, v, cfg.per_year_per_class, a.seed)?)?.samples,
        None => corpus.samples.clone(),
    };
    let refs: Vec<_> = samples.iter().collect();
    let model = fit(a.model, corpus.n_features(), &refs, &cfg.hyperparams, derive_seed(a.seed, &["train"]))?;
    let correct = samples
        .iter()
        .map(|s| model.predict(s).map(|p| p.label == s.label))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&c| c)
        .count();
    model.save(&a.out)?;
    emit(out, format!("model={}", a.model))?;
    emit(out, format!("train_samples={}", samples.len()))?;
    emit(out, format!("train_accuracy={:.4}", correct as f64 / samples.len() as f64))?;
    emit(out, format!("out={}", a.out.display()))
}

fn experiment_corpus(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<Corpus> {
    match (path, &cfg.corpus) {
        (Some(p), _) => load_corpus(p),
        (None, Some(source)) => harness::load_source(source, cfg.seed),
        (None, None) => Err(Error::InvalidSpec("no corpus: pass --corpus or set `corpus` in the config".into())),
    }
}

fn cmd_audit(a: AuditArgs, out: &mut impl Write) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if a.jobs.is_some() {
        cfg.jobs = a.jobs;
    }
    let corpus = experiment_corpus(&cfg, a.corpus.as_deref())?;
    let dir = a
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("audit-out"));
    let records = run_experiment(&cfg, &corpus)?;
    write_outputs(&records, &corpus, &dir)?;
    for r in &records {
        emit(out, r.summary_line())?;
    }
    emit(out, format!("out={}", dir.display()))
}

fn cmd_sweep(a: SweepArgs, out: &mut impl Write) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if !a.models.is_empty() {
        cfg.models = a.models.clone();
    }
    if cfg.models.is_empty() {
        cfg.models = vec![ModelKind::Svm];
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if a.jobs.is_some() {
        cfg.jobs = a.jobs;
    }
    let corpus = load_corpus(&a.corpus)?;
    let mut sweep = SweepParams {
        malware_year: a.malware_year,
        per_year_per_class: a.per_year,
        ..Default::default()
    };
    if !a.ratios.is_empty() {
        sweep.ratios = a.ratios.clone();
    }
    let records = run_year_sweep(&cfg, &corpus, &sweep)?;
    write_outputs(&records, &corpus, &a.out)?;
    for r in &records {
        let p = r.sweep.expect("sweep records carry their coordinates");
        emit(
            out,
            format!(
                "gap={} ratio={} {} containment_added_benign_t10={}",
                p.gap(),
                p.ratio,
                r.summary_line(),
                r.containment_added(crate::corpus::Label::Benign, 10)
                    .map_or("na".to_string(), |v| format!("{v:.4}"))
            ),
        )?;
    }
    emit(out, format!("out={}", a.out.display()))
}

#[derive(Serialize)]
struct CrossTestDocument<'a> {
    audit_schema: &'a str,
    #[serde(flatten)]
    report: &'a CrossTestReport,
}

fn cmd_crosstest(a: CrosstestArgs, out: &mut impl Write) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if a.per_year.is_some() {
        cfg.per_year_per_class = a.per_year;
    }
    let corpus = load_corpus(&a.corpus)?;
    let resolve = |v: BuiltinVariant| {
        let spec = harness::resolve_variant(&harness::VariantRef::Builtin(v), &corpus, &cfg)?;
        build_variant(&corpus, &spec)
    };
    let train = resolve(a.train)?;
    let test = resolve(a.test)?;
    let (report, _) = run_cross_test(&cfg, &corpus, &train, &test, a.model, a.allow_overlap)?;
    if let Some(path) = &a.out {
        let doc = CrossTestDocument {
            audit_schema: AUDIT_SCHEMA,
            report: &report,
        };
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    let m = &report.metrics;
    emit(
        out,
        format!(
            "train={} test={} model={} accuracy={:.4} precision={:.4} recall={:.4} f1={:.4}",
            report.train_variant, report.test_variant, report.model, m.accuracy, m.precision, m.recall, m.f1
        ),
    )?;
    if let Some(path) = &a.out {
        emit(out, format!("out={}", path.display()))?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs, out: &mut impl Write) -> Result<()> {
    let mut runs = Vec::new();
    for path in &a.inputs {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        runs.extend(report::parse_json(&text)?.runs);
    }
    let text = match a.format {
        ReportFormat::Json => report::emit_json(&runs)?,
        ReportFormat::Csv => report::emit_csv(&runs)?,
        ReportFormat::Table => {
            let mut top_ts: Vec<usize> = runs
                .iter()
                .flat_map(|r| r.time_bias.rows.iter().map(|row| row.t))
                .collect();
            top_ts.sort_unstable();
            top_ts.dedup();
            let rows: Vec<(String, _)> = runs
                .iter()
                .map(|r| (format!("{}/{}", r.variant, r.model), r.time_bias.clone()))
                .collect();
            report::render_time_bias_table(&rows, &top_ts)
        }
    };
    match &a.out {
        Some(path) => {
            fs::write(path, &text).map_err(|e| Error::io(path, e))?;
            emit(out, format!("out={}", path.display()))
        }
        None => out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}
