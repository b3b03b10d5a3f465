//! Feature catalog, sample data model, corpus I/O and the synthetic corpus
//! generator.
//!
//! A corpus file is UTF-8 JSON lines: the first line is the catalog object,
//! every following line is one sample.
//!
//! ```text
//! {"schema_version":"1","features":[{"id":0,"name":"...","category":"restricted_api","added_year":2013}]}
//! {"sample_id":"a1","year":2014,"label":"malware","features":[0]}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const SCHEMA_VERSION: &str = "1";
const MIN_YEAR: i32 = 1990;
const MAX_YEAR: i32 = 2100;

/// The eight Drebin feature sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    HardwareComponent,
    RequestedPermission,
    AppComponent,
    FilteredIntent,
    RestrictedApi,
    UsedPermission,
    SuspiciousApi,
    NetworkAddress,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::HardwareComponent,
        Category::RequestedPermission,
        Category::AppComponent,
        Category::FilteredIntent,
        Category::RestrictedApi,
        Category::UsedPermission,
        Category::SuspiciousApi,
        Category::NetworkAddress,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::HardwareComponent => "hardware_component",
            Category::RequestedPermission => "requested_permission",
            Category::AppComponent => "app_component",
            Category::FilteredIntent => "filtered_intent",
            Category::RestrictedApi => "restricted_api",
            Category::UsedPermission => "used_permission",
            Category::SuspiciousApi => "suspicious_api",
            Category::NetworkAddress => "network_address",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Malware,
    Benign,
}

impl Label {
    pub fn is_malware(self) -> bool {
        self == Label::Malware
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Malware => "malware",
            Label::Benign => "benign",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive calendar-year range. Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Self {
        YearRange { start, end }
    }

    pub fn single(year: i32) -> Self {
        YearRange::new(year, year)
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    /// Number of years covered.
    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.end - self.start + 1) as usize
        }
    }

    pub fn contains(&self, year: i32) -> bool {
        self.start <= year && year <= self.end
    }

    pub fn contains_range(&self, other: &YearRange) -> bool {
        self.contains(other.start) && self.contains(other.end)
    }

    pub fn overlaps(&self, other: &YearRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

impl From<(i32, i32)> for YearRange {
    fn from((start, end): (i32, i32)) -> Self {
        YearRange { start, end }
    }
}

impl From<YearRange> for (i32, i32) {
    fn from(r: YearRange) -> Self {
        (r.start, r.end)
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub id: usize,
    pub name: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub added_year: Option<i32>,
    /// Removal or deprecation year.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed_year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malice_signal: Option<bool>,
}

impl FeatureDescriptor {
    pub fn new(id: usize, name: impl Into<String>, category: Category) -> Self {
        FeatureDescriptor {
            id,
            name: name.into(),
            category,
            added_year: None,
            removed_year: None,
            malice_signal: None,
        }
    }

    pub fn has_lifecycle(&self) -> bool {
        self.added_year.is_some() || self.removed_year.is_some()
    }

    /// Whether an app released in `year` can contain this feature at all.
    pub fn available_in(&self, year: i32) -> bool {
        self.added_year.map_or(true, |a| a <= year) && self.removed_year.map_or(true, |r| r >= year)
    }

    pub fn is_malice_signal(&self) -> bool {
        self.malice_signal.unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub schema_version: String,
    pub features: Vec<FeatureDescriptor>,
}

impl FeatureCatalog {
    pub fn new(features: Vec<FeatureDescriptor>) -> Result<Self> {
        let catalog = FeatureCatalog {
            schema_version: SCHEMA_VERSION.to_string(),
            features,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.features[id].name
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::with_capacity(self.features.len());
        for (pos, f) in self.features.iter().enumerate() {
            if f.id != pos {
                return Err(Error::InvalidCatalog(format!(
                    "feature {:?} has id {} at position {}",
                    f.name, f.id, pos
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::InvalidCatalog(format!("duplicate feature name {:?}", f.name)));
            }
            for year in [f.added_year, f.removed_year].into_iter().flatten() {
                if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
                    return Err(Error::InvalidCatalog(format!(
                        "feature {:?} has year {} outside [{}, {}]",
                        f.name, year, MIN_YEAR, MAX_YEAR
                    )));
                }
            }
            if let (Some(a), Some(r)) = (f.added_year, f.removed_year) {
                if a > r {
                    return Err(Error::InvalidCatalog(format!(
                        "feature {:?} added in {} after removal in {}",
                        f.name, a, r
                    )));
                }
            }
        }
        Ok(())
    }

    /// The curated catalog of real Android framework features shipped with
    /// the crate. Lifecycle years follow the first release year of the API
    /// level that introduced or deprecated each feature.
    pub fn android_reference() -> FeatureCatalog {
        let text = include_str!("../fixtures/android_catalog.jsonl");
        let corpus = parse_corpus(BufReader::new(text.as_bytes()))
            .expect("bundled catalog fixture is valid");
        corpus.catalog
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub year: i32,
    pub label: Label,
    /// Strictly ascending ids of the features present in the app.
    #[serde(rename = "features")]
    pub present: Vec<u32>,
}

impl Sample {
    pub fn new(sample_id: impl Into<String>, year: i32, label: Label, mut present: Vec<u32>) -> Self {
        present.sort_unstable();
        present.dedup();
        Sample {
            sample_id: sample_id.into(),
            year,
            label,
            present,
        }
    }

    pub fn has(&self, feature: u32) -> bool {
        self.present.binary_search(&feature).is_ok()
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        let bad = |message: String| Error::InvalidSample {
            sample_id: self.sample_id.clone(),
            message,
        };
        if let Some(&id) = self.present.iter().find(|&&id| id as usize >= n_features) {
            return Err(bad(format!("feature id {id} out of range for {n_features}-feature catalog")));
        }
        if self.present.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("feature ids not strictly ascending".to_string()));
        }
        Ok(())
    }

    /// Dense 0/1 vector of length `n_features`.
    pub fn dense(&self, n_features: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_features];
        for &id in &self.present {
            v[id as usize] = 1.0;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub catalog: FeatureCatalog,
    pub samples: Vec<Sample>,
}

impl Corpus {
    pub fn new(catalog: FeatureCatalog, samples: Vec<Sample>) -> Result<Self> {
        let corpus = Corpus { catalog, samples };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        self.catalog.validate()?;
        let mut ids = HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            s.validate(self.catalog.len())?;
            if !ids.insert(s.sample_id.as_str()) {
                return Err(Error::InvalidSample {
                    sample_id: s.sample_id.clone(),
                    message: "duplicate sample_id".to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.catalog.len()
    }

    /// Observed year range, `None` for an empty corpus.
    pub fn year_range(&self) -> Option<YearRange> {
        let min = self.samples.iter().map(|s| s.year).min()?;
        let max = self.samples.iter().map(|s| s.year).max()?;
        Some(YearRange::new(min, max))
    }

    pub fn cell_counts(&self) -> BTreeMap<(i32, Label), usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry((s.year, s.label)).or_insert(0) += 1;
        }
        counts
    }

    pub fn cell_count(&self, year: i32, label: Label) -> usize {
        self.samples
            .iter()
            .filter(|s| s.year == year && s.label == label)
            .count()
    }

    pub fn malware_ratio(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let m = self.samples.iter().filter(|s| s.label.is_malware()).count();
        m as f64 / self.samples.len() as f64
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file))
}

/// Parse the JSON-lines corpus format from any reader.
pub fn parse_corpus(reader: impl BufRead) -> Result<Corpus> {
    let mut catalog: Option<FeatureCatalog> = None;
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: line_no,
            message: e.to_string(),
        };
        match &catalog {
            None => catalog = Some(serde_json::from_str(&line).map_err(parse_err)?),
            Some(_) => samples.push(serde_json::from_str::<Sample>(&line).map_err(parse_err)?),
        }
    }
    let catalog = catalog.ok_or(Error::Parse {
        line: 1,
        message: "missing catalog header".to_string(),
    })?;
    Corpus::new(catalog, samples)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_corpus(corpus, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Canonical encoding: sorted feature ids, samples in input order.
pub fn write_corpus(corpus: &Corpus, out: &mut impl Write) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, &corpus.catalog)?;
    out.write_all(b"\n")?;
    for s in &corpus.samples {
        let mut canonical = s.clone();
        canonical.present.sort_unstable();
        canonical.present.dedup();
        serde_json::to_writer(&mut *out, &canonical)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleClass {
    Added,
    Removed,
    Neutral,
}

/// Both lifecycle memberships of a feature relative to a study window.
/// A feature may be added and removed at once; audits count it in both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LifecycleFlags {
    pub added: bool,
    pub removed: bool,
}

impl LifecycleFlags {
    pub fn is_composite(&self) -> bool {
        self.added && self.removed
    }
}

pub fn lifecycle_flags(f: &FeatureDescriptor, window: YearRange) -> LifecycleFlags {
    LifecycleFlags {
        // apps released at the start of the window cannot contain it
        added: f.added_year.is_some_and(|a| a > window.start),
        // apps released at the end of the window are unlikely to contain it
        removed: f.removed_year.is_some_and(|r| r < window.end),
    }
}

/// Classify a feature against a study window. Features with both events
/// report the event closer to its window boundary (added wins ties); use
/// [`lifecycle_flags`] for the composite.
pub fn lifecycle_class(f: &FeatureDescriptor, window: YearRange) -> LifecycleClass {
    let flags = lifecycle_flags(f, window);
    match (flags.added, flags.removed) {
        (false, false) => LifecycleClass::Neutral,
        (true, false) => LifecycleClass::Added,
        (false, true) => LifecycleClass::Removed,
        (true, true) => {
            let added_gap = f.added_year.unwrap_or(window.start) - window.start;
            let removed_gap = window.end - f.removed_year.unwrap_or(window.end);
            if added_gap <= removed_gap {
                LifecycleClass::Added
            } else {
                LifecycleClass::Removed
            }
        }
    }
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub years: YearRange,
    /// Samples per (year, label) cell.
    pub per_cell_count: usize,
    /// Overrides `per_cell_count` for benign cells, for imbalanced corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benign_per_cell_count: Option<usize>,
    pub n_features_per_category: BTreeMap<Category, usize>,
    pub lifecycle_fraction_added: f64,
    pub lifecycle_fraction_removed: f64,
    pub base_presence_prob: f64,
    pub malice_features: usize,
    pub p_malware: f64,
    pub p_benign: f64,
}

impl SynthSpec {
    /// Balanced 2010-2020 corpus, 200 apps per cell, where era-dependent
    /// features separate the classes far better than the weak malice signal.
    pub fn preset_default(seed: u64) -> Self {
        SynthSpec {
            seed,
            years: YearRange::new(2010, 2020),
            per_cell_count: 200,
            benign_per_cell_count: None,
            n_features_per_category: Category::ALL.iter().map(|&c| (c, 20)).collect(),
            lifecycle_fraction_added: 0.3,
            lifecycle_fraction_removed: 0.3,
            base_presence_prob: 0.25,
            malice_features: 16,
            p_malware: 0.4,
            p_benign: 0.2,
        }
    }

    /// Same feature structure as the default preset with a 17.3% malware ratio.
    pub fn preset_androzoo_ratio(seed: u64) -> Self {
        SynthSpec {
            per_cell_count: 173,
            benign_per_cell_count: Some(827),
            ..Self::preset_default(seed)
        }
    }

    /// No lifecycle events at all and a strong malice signal.
    pub fn preset_unbiased(seed: u64) -> Self {
        SynthSpec {
            lifecycle_fraction_added: 0.0,
            lifecycle_fraction_removed: 0.0,
            malice_features: 20,
            p_malware: 0.5,
            p_benign: 0.15,
            ..Self::preset_default(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "default" => Some(Self::preset_default(seed)),
            "androzoo-ratio" => Some(Self::preset_androzoo_ratio(seed)),
            "unbiased" => Some(Self::preset_unbiased(seed)),
            _ => None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features_per_category.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let probs = [
            ("lifecycle_fraction_added", self.lifecycle_fraction_added),
            ("lifecycle_fraction_removed", self.lifecycle_fraction_removed),
            ("base_presence_prob", self.base_presence_prob),
            ("p_malware", self.p_malware),
            ("p_benign", self.p_benign),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.p_malware == self.p_benign {
            return bad("p_malware equals p_benign; the malice features carry no signal".into());
        }
        if self.years.is_empty() {
            return bad(format!("empty year range {}", self.years));
        }
        if self.years.start < MIN_YEAR || self.years.end > MAX_YEAR {
            return bad(format!("years {} outside [{MIN_YEAR}, {MAX_YEAR}]", self.years));
        }
        if self.malice_features > self.n_features() {
            return bad(format!(
                "{} malice features requested from a {}-feature catalog",
                self.malice_features,
                self.n_features()
            ));
        }
        Ok(())
    }
}

/// Generate a synthetic corpus. Samples are ordered by year, then label
/// (malware first), then index within the cell.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);

    let mut features = Vec::with_capacity(spec.n_features());
    for (&category, &count) in &spec.n_features_per_category {
        for i in 0..count {
            let id = features.len();
            features.push(FeatureDescriptor::new(id, format!("{}.{:03}", category.as_str(), i), category));
        }
    }
    let n = features.len();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &id in &order[..spec.malice_features] {
        features[id].malice_signal = Some(true);
    }
    let mut eligible: Vec<usize> = order[spec.malice_features..].to_vec();
    eligible.sort_unstable();

    let years = spec.years;
    let n_added = (spec.lifecycle_fraction_added * eligible.len() as f64).round() as usize;
    let n_removed = (spec.lifecycle_fraction_removed * eligible.len() as f64).round() as usize;
    if years.len() > 1 {
        eligible.shuffle(&mut rng);
        for &id in &eligible[..n_added] {
            features[id].added_year = Some(rng.gen_range(years.start + 1..=years.end));
        }
        eligible.shuffle(&mut rng);
        for &id in &eligible[..n_removed] {
            features[id].removed_year = Some(rng.gen_range(years.start..years.end));
        }
        for f in &mut features {
            if let (Some(a), Some(r)) = (f.added_year, f.removed_year) {
                if a > r {
                    f.added_year = Some(r);
                    f.removed_year = Some(a);
                }
            }
        }
    }
    let catalog = FeatureCatalog::new(features)?;

    let benign_count = spec.benign_per_cell_count.unwrap_or(spec.per_cell_count);
    let mut samples = Vec::with_capacity(years.len() * (spec.per_cell_count + benign_count));
    for year in years.years() {
        for (label, count) in [(Label::Malware, spec.per_cell_count), (Label::Benign, benign_count)] {
            for i in 0..count {
                let mut present = Vec::new();
                for f in &catalog.features {
                    // one draw per feature keeps the stream aligned across specs
                    let u: f64 = rng.gen();
                    let p = if f.is_malice_signal() {
                        match label {
                            Label::Malware => spec.p_malware,
                            Label::Benign => spec.p_benign,
                        }
                    } else if f.available_in(year) {
                        spec.base_presence_prob
                    } else {
                        0.0
                    };
                    if u < p {
                        present.push(f.id as u32);
                    }
                }
                samples.push(Sample {
                    sample_id: format!("{}-{}-{:05}", label.as_str(), year, i),
                    year,
                    label,
                    present,
                });
            }
        }
    }
    Corpus::new(catalog, samples)
}
