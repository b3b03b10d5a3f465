//! Experiment orchestration: variants × model kinds, stratified k-fold
//! cross-validation, held-out explanations, and audit aggregation.
//!
//! Every cell's randomness is derived from the master seed and the cell's
//! identity (variant name, model kind, fold id), so cells can run in any
//! order or concurrently without changing results.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::report::{self, RunReport, TopFeatures};
use crate::audit::{
    self, grouping_labels, summarize_importance, time_bias_table, AuditOptions, CrossTestReport,
    FeatureImportanceSummary, Grouping, MetricsReport, TimeBiasTable,
};
use crate::corpus::{generate_synthetic, load_corpus, Corpus, Label, SynthSpec, YearRange};
use crate::error::{Error, Result};
use crate::explainers::{explain, write_explanations_jsonl, ExplanationVector, LimeConfig};
use crate::learners::{fit, Hyperparams, ModelKind};
use crate::seed::derive_seed;
use crate::variants::{
    build_variant, split_holdout, stratified_kfold, sweep_name, year_sweep_specs, BuiltinVariant, Ratio, Variant,
    VariantSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Path(PathBuf),
    Synthetic(SynthSpec),
    Preset(String),
}

/// A variant named by builtin setting, given inline, or stored in a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VariantRef {
    Builtin(BuiltinVariant),
    File { file: PathBuf },
    Inline(VariantSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: Option<CorpusSource>,
    pub variants: Vec<VariantRef>,
    pub models: Vec<ModelKind>,
    pub k: usize,
    pub lime: LimeConfig,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub top_t: Vec<usize>,
    /// Draw per (year, label) cell for builtin variants; defaults to the
    /// smallest cell in the corpus.
    pub per_year_per_class: Option<usize>,
    pub grouping: Grouping,
    pub averaging: Averaging,
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
    pub cell_timeout_secs: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: None,
            variants: Vec::new(),
            models: Vec::new(),
            k: 10,
            lime: LimeConfig::default(),
            hyperparams: Hyperparams::default(),
            seed: 42,
            output_dir: None,
            top_t: audit::DEFAULT_TOP_T.to_vec(),
            per_year_per_class: None,
            grouping: Grouping::Predicted,
            averaging: Averaging::Micro,
            jobs: None,
            cell_timeout_secs: 600,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidSpec(format!("k must be >= 2, got {}", self.k)));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidSpec("no model kinds configured".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidSpec("no variants configured".into()));
        }
        if self.top_t.is_empty() || self.top_t.contains(&0) {
            return Err(Error::InvalidSpec(format!("top_t must be non-empty positive values, got {:?}", self.top_t)));
        }
        self.lime.validate()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn lime_config(&self) -> LimeConfig {
        LimeConfig {
            seed: derive_seed(self.seed, &["lime"]),
            ..self.lime
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            builder = builder.num_threads(j.max(1));
        }
        builder
            .build()
            .map_err(|e| Error::InvalidSpec(format!("cannot start worker pool: {e}")))
    }
}

pub fn load_source(source: &CorpusSource, seed: u64) -> Result<Corpus> {
    match source {
        CorpusSource::Path(p) => load_corpus(p),
        CorpusSource::Synthetic(spec) => generate_synthetic(spec),
        CorpusSource::Preset(name) => {
            let spec = SynthSpec::preset(name, seed)
                .ok_or_else(|| Error::InvalidSpec(format!("unknown corpus preset {name:?}")))?;
            generate_synthetic(&spec)
        }
    }
}

fn default_per_year(corpus: &Corpus) -> usize {
    corpus.cell_counts().values().copied().min().unwrap_or(0)
}

/// Resolve a variant reference against a corpus.
pub fn resolve_variant(r: &VariantRef, corpus: &Corpus, cfg: &ExperimentConfig) -> Result<VariantSpec> {
    match r {
        VariantRef::Builtin(b) => {
            let years = corpus.year_range().ok_or(Error::EmptyInput("corpus samples"))?;
            let per_year = cfg.per_year_per_class.unwrap_or_else(|| default_per_year(corpus));
            b.spec(years, per_year, derive_seed(cfg.seed, &["variant", b.as_str()]))
        }
        VariantRef::File { file } => {
            let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
            Ok(serde_json::from_str(&text)?)
        }
        VariantRef::Inline(spec) => Ok(spec.clone()),
    }
}

/// Sweep coordinates of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub malware_year: i32,
    pub benign_year: i32,
    pub ratio: Ratio,
}

impl SweepPoint {
    pub fn gap(&self) -> i32 {
        self.benign_year - self.malware_year
    }
}

/// Everything recorded for one (variant, model) cell.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub variant: String,
    pub model: ModelKind,
    pub fold_metrics: Vec<MetricsReport>,
    pub pooled: MetricsReport,
    pub importance: FeatureImportanceSummary,
    pub time_bias: TimeBiasTable,
    /// One explanation per variant sample, from the fold that held it out.
    pub explanations: Vec<ExplanationVector>,
    pub true_labels: Vec<Label>,
    pub duration: Duration,
    pub timed_out: bool,
    pub sweep: Option<SweepPoint>,
}

impl RunRecord {
    pub fn to_report(&self, corpus: &Corpus, window: YearRange) -> RunReport {
        RunReport {
            variant: self.variant.clone(),
            model: self.model,
            metrics: self.pooled,
            fold_metrics: self.fold_metrics.clone(),
            time_bias: self.time_bias.clone(),
            top_features: TopFeatures::from_summary(&self.importance, &corpus.catalog, window, 20),
            timed_out: self.timed_out,
        }
    }

    pub fn containment_added(&self, class: Label, t: usize) -> Option<f64> {
        self.time_bias.row(class, t).map(|r| r.containment_added)
    }

    /// One-line `key=value` summary.
    pub fn summary_line(&self) -> String {
        let m = &self.pooled;
        format!(
            "variant={} model={} folds={} accuracy={:.4} precision={:.4} recall={:.4} f1={:.4} timed_out={} seconds={:.2}",
            self.variant,
            self.model,
            self.fold_metrics.len(),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            self.timed_out,
            self.duration.as_secs_f64()
        )
    }
}

struct FoldOutcome {
    metrics: MetricsReport,
    explained: Vec<(usize, ExplanationVector)>,
}

fn run_fold(
    corpus: &Corpus,
    variant: &Variant,
    test_idx: &[usize],
    train_idx: &[usize],
    kind: ModelKind,
    cfg: &ExperimentConfig,
    lime: &LimeConfig,
    seed: u64,
) -> Result<FoldOutcome> {
    let train: Vec<_> = train_idx.iter().map(|&i| &variant.samples[i]).collect();
    let model = fit(kind, corpus.n_features(), &train, &cfg.hyperparams, seed)?;
    let mut pairs = Vec::with_capacity(test_idx.len());
    let mut explained = Vec::with_capacity(test_idx.len());
    for &i in test_idx {
        let s = &variant.samples[i];
        let e = explain(&model, s, lime)?;
        pairs.push((s.label, e.predicted_label));
        explained.push((i, e));
    }
    Ok(FoldOutcome {
        metrics: audit::metrics(&pairs)?,
        explained,
    })
}

/// k-fold cross-validation of one model kind on one built variant.
pub fn run_cell(corpus: &Corpus, variant: &Variant, kind: ModelKind, cfg: &ExperimentConfig) -> Result<RunRecord> {
    let started = Instant::now();
    let name = variant.spec.name.as_str();
    let context = format!("variant {name}, model {kind}");
    let window = corpus.year_range().ok_or(Error::EmptyInput("corpus samples"))?;
    let folds = stratified_kfold(variant, cfg.k, derive_seed(cfg.seed, &[name, "folds"]))
        .map_err(|e| e.in_cell(&context))?;
    let lime = cfg.lime_config();
    let timeout = Duration::from_secs(cfg.cell_timeout_secs);

    let outcomes: Vec<Option<Result<FoldOutcome>>> = (0..cfg.k)
        .into_par_iter()
        .map(|fold| {
            if started.elapsed() > timeout {
                return None;
            }
            let seed = derive_seed(cfg.seed, &[name, kind.as_str(), &fold.to_string()]);
            Some(run_fold(
                corpus,
                variant,
                &folds.test_indices(fold),
                &folds.train_indices(fold),
                kind,
                cfg,
                &lime,
                seed,
            ))
        })
        .collect();

    let mut timed_out = false;
    let mut fold_metrics = Vec::with_capacity(cfg.k);
    let mut slots: Vec<Option<ExplanationVector>> = vec![None; variant.samples.len()];
    for outcome in outcomes {
        match outcome {
            None => timed_out = true,
            Some(result) => {
                let o = result.map_err(|e| e.in_cell(&context))?;
                fold_metrics.push(o.metrics);
                for (i, e) in o.explained {
                    slots[i] = Some(e);
                }
            }
        }
    }
    let (explanations, true_labels): (Vec<ExplanationVector>, Vec<Label>) = slots
        .into_iter()
        .zip(&variant.samples)
        .filter_map(|(e, s)| e.map(|e| (e, s.label)))
        .unzip();
    let pooled = match cfg.averaging {
        Averaging::Micro => MetricsReport::pooled(&fold_metrics),
        Averaging::Macro => MetricsReport::macro_average(&fold_metrics),
    };
    let groups = grouping_labels(&explanations, &true_labels, cfg.grouping);
    let importance = summarize_importance(&explanations, &groups, corpus.n_features(), &cfg.top_t)
        .map_err(|e| e.in_cell(&context))?;
    let time_bias = time_bias_table(&explanations, &groups, &corpus.catalog, window, &cfg.top_t, cfg.grouping)
        .map_err(|e| e.in_cell(&context))?;
    Ok(RunRecord {
        variant: name.to_string(),
        model: kind,
        fold_metrics,
        pooled,
        importance,
        time_bias,
        explanations,
        true_labels,
        duration: started.elapsed(),
        timed_out,
        sweep: None,
    })
}

fn run_cells(corpus: &Corpus, variants: &[Variant], cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let cells: Vec<(usize, ModelKind)> = (0..variants.len())
        .flat_map(|v| cfg.models.iter().map(move |&m| (v, m)))
        .collect();
    let pool = cfg.pool()?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, kind)| run_cell(corpus, &variants[v], kind, cfg))
            .collect()
    })
}

/// Run every configured (variant, model) cell on the given corpus.
pub fn run_experiment(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let variants = cfg
        .variants
        .iter()
        .map(|r| {
            let spec = resolve_variant(r, corpus, cfg)?;
            build_variant(corpus, &spec).map_err(|e| e.in_cell(format!("variant {}", spec.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    run_cells(corpus, &variants, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepParams {
    /// Defaults to the first corpus year.
    pub malware_year: Option<i32>,
    /// Defaults to every corpus year.
    pub benign_years: Option<Vec<i32>>,
    pub ratios: Vec<Ratio>,
    /// Defaults to the smallest corpus cell.
    pub per_year_per_class: Option<usize>,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            malware_year: None,
            benign_years: None,
            ratios: vec![Ratio::new(1, 1), Ratio::new(4, 1), Ratio::new(1, 4)],
            per_year_per_class: None,
        }
    }
}

/// Malware pinned to one year, benign drawn from each sweep year in turn.
pub fn run_year_sweep(cfg: &ExperimentConfig, corpus: &Corpus, sweep: &SweepParams) -> Result<Vec<RunRecord>> {
    if cfg.models.is_empty() {
        return Err(Error::InvalidSpec("no model kinds configured".into()));
    }
    let years = corpus.year_range().ok_or(Error::EmptyInput("corpus samples"))?;
    let malware_year = sweep.malware_year.unwrap_or(years.start);
    let benign_years = sweep.benign_years.clone().unwrap_or_else(|| years.years().collect());
    let per_year = sweep
        .per_year_per_class
        .or(cfg.per_year_per_class)
        .unwrap_or_else(|| default_per_year(corpus));
    let specs = year_sweep_specs(
        malware_year,
        &benign_years,
        &sweep.ratios,
        per_year,
        derive_seed(cfg.seed, &["sweep"]),
    )?;
    let variants = specs
        .iter()
        .map(|s| build_variant(corpus, s).map_err(|e| e.in_cell(format!("variant {}", s.name))))
        .collect::<Result<Vec<_>>>()?;
    let mut records = run_cells(corpus, &variants, cfg)?;
    for r in &mut records {
        let spec = specs.iter().find(|s| s.name == r.variant).expect("record from a sweep spec");
        r.sweep = Some(SweepPoint {
            malware_year,
            benign_year: spec.benign_years.start,
            ratio: spec.malware_to_benign_ratio,
        });
        debug_assert_eq!(
            r.variant,
            sweep_name(malware_year, spec.benign_years.start, spec.malware_to_benign_ratio)
        );
    }
    Ok(records)
}

/// Train on the whole of `train` and audit every sample of `test`.
pub fn run_cross_test(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    train: &Variant,
    test: &Variant,
    kind: ModelKind,
    allow_overlap: bool,
) -> Result<(CrossTestReport, Vec<ExplanationVector>)> {
    let context = format!("cross-test {} -> {}, model {kind}", train.spec.name, test.spec.name);
    let window = corpus.year_range().ok_or(Error::EmptyInput("corpus samples"))?;
    let refs: Vec<_> = train.samples.iter().collect();
    // hyperparameters are fixed across folds, so the best fold's settings are
    // the configured ones
    let seed = derive_seed(cfg.seed, &[&train.spec.name, kind.as_str(), "full"]);
    let model = fit(kind, corpus.n_features(), &refs, &cfg.hyperparams, seed).map_err(|e| e.in_cell(&context))?;
    let opts = AuditOptions {
        lime: cfg.lime_config(),
        window,
        top_ts: cfg.top_t.clone(),
        grouping: cfg.grouping,
        allow_overlap,
    };
    audit::cross_test(&model, train, test, &corpus.catalog, &opts).map_err(|e| e.in_cell(&context))
}

/// Split `variant` into train and holdout parts and cross-test between them.
pub fn run_holdout(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    variant: &Variant,
    kind: ModelKind,
    test_fraction: f64,
) -> Result<CrossTestReport> {
    let (train, test) = split_holdout(variant, test_fraction, derive_seed(cfg.seed, &[&variant.spec.name, "holdout"]))?;
    Ok(run_cross_test(cfg, corpus, &train, &test, kind, false)?.0)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write `report.json`, `report.csv` and `explanations.jsonl` for each cell
/// under `<dir>/<variant>__<model>/`, plus combined `report.json` and
/// `report.csv` in `dir`.
pub fn write_outputs(records: &[RunRecord], corpus: &Corpus, dir: &Path) -> Result<Vec<PathBuf>> {
    let window = corpus.year_range().ok_or(Error::EmptyInput("corpus samples"))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut reports = Vec::with_capacity(records.len());
    let k_top = 20;
    for r in records {
        let report = r.to_report(corpus, window);
        let cell_dir = dir.join(format!("{}__{}", r.variant, r.model));
        fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;

        let path = cell_dir.join("report.json");
        write_file(&path, &report::emit_json(std::slice::from_ref(&report))?)?;
        written.push(path);
        let path = cell_dir.join("report.csv");
        write_file(&path, &report::emit_csv(std::slice::from_ref(&report))?)?;
        written.push(path);

        let path = cell_dir.join("explanations.jsonl");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        write_explanations_jsonl(&r.explanations, &corpus.catalog, k_top, &mut out)
            .and_then(|_| std::io::Write::flush(&mut out))
            .map_err(|e| Error::io(&path, e))?;
        written.push(path);
        reports.push(report);
    }
    let path = dir.join("report.json");
    write_file(&path, &report::emit_json(&reports)?)?;
    written.push(path);
    let path = dir.join("report.csv");
    write_file(&path, &report::emit_csv(&reports)?)?;
    written.push(path);
    Ok(written)
}
