//! Temporal training variants, class-ratio resampling and stratified folds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label, Sample, YearRange};
use crate::error::{Error, Result};
use crate::seed;

/// Malware-to-benign count ratio, written `m:b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(u32, u32)", into = "(u32, u32)")]
pub struct Ratio {
    pub malware: u32,
    pub benign: u32,
}

impl Ratio {
    pub const BALANCED: Ratio = Ratio { malware: 1, benign: 1 };

    pub fn new(malware: u32, benign: u32) -> Self {
        Ratio { malware, benign }
    }
}

impl From<(u32, u32)> for Ratio {
    fn from((malware, benign): (u32, u32)) -> Self {
        Ratio { malware, benign }
    }
}

impl From<Ratio> for (u32, u32) {
    fn from(r: Ratio) -> Self {
        (r.malware, r.benign)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.malware, self.benign)
    }
}

impl FromStr for Ratio {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (m, b) = s.split_once(':').ok_or_else(|| format!("expected m:b, got {s:?}"))?;
        let m: u32 = m.trim().parse().map_err(|_| format!("bad ratio component {m:?}"))?;
        let b: u32 = b.trim().parse().map_err(|_| format!("bad ratio component {b:?}"))?;
        if m == 0 || b == 0 {
            return Err(format!("ratio components must be >= 1, got {s:?}"));
        }
        Ok(Ratio::new(m, b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: String,
    pub malware_years: YearRange,
    pub benign_years: YearRange,
    /// Samples drawn from every (year, label) cell before ratio enforcement.
    pub per_year_per_class: usize,
    #[serde(default = "balanced")]
    pub malware_to_benign_ratio: Ratio,
    #[serde(default)]
    pub seed: u64,
}

fn balanced() -> Ratio {
    Ratio::BALANCED
}

impl VariantSpec {
    /// True when both classes come from the same period.
    pub fn is_temporally_consistent(&self) -> bool {
        self.malware_years == self.benign_years
    }

    fn validate(&self) -> Result<()> {
        for range in [self.malware_years, self.benign_years] {
            if range.is_empty() {
                return Err(Error::InvalidSpec(format!("variant {}: empty year range {range}", self.name)));
            }
        }
        let r = self.malware_to_benign_ratio;
        if r.malware == 0 || r.benign == 0 {
            return Err(Error::InvalidSpec(format!("variant {}: ratio {r} has a zero component", self.name)));
        }
        Ok(())
    }
}

/// The five named training settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinVariant {
    Baseline,
    V1,
    V2,
    V3,
    V4,
}

impl BuiltinVariant {
    pub const ALL: [BuiltinVariant; 5] = [
        BuiltinVariant::Baseline,
        BuiltinVariant::V1,
        BuiltinVariant::V2,
        BuiltinVariant::V3,
        BuiltinVariant::V4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinVariant::Baseline => "baseline",
            BuiltinVariant::V1 => "v1",
            BuiltinVariant::V2 => "v2",
            BuiltinVariant::V3 => "v3",
            BuiltinVariant::V4 => "v4",
        }
    }

    /// Spec for this setting over a corpus year range (at least six years).
    pub fn spec(self, corpus_years: YearRange, per_year_per_class: usize, seed: u64) -> Result<VariantSpec> {
        if corpus_years.len() < 6 {
            return Err(Error::RangeTooShort(corpus_years.len()));
        }
        let first = YearRange::new(corpus_years.start, corpus_years.start + 2);
        let latest = YearRange::new(corpus_years.end - 2, corpus_years.end);
        let (malware_years, benign_years) = match self {
            BuiltinVariant::Baseline => (corpus_years, corpus_years),
            BuiltinVariant::V1 => (latest, latest),
            BuiltinVariant::V2 => (first, first),
            BuiltinVariant::V3 => (latest, first),
            BuiltinVariant::V4 => (first, latest),
        };
        Ok(VariantSpec {
            name: self.as_str().to_string(),
            malware_years,
            benign_years,
            per_year_per_class,
            malware_to_benign_ratio: Ratio::BALANCED,
            seed,
        })
    }
}

impl fmt::Display for BuiltinVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuiltinVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        BuiltinVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant {s:?} (expected baseline, v1, v2, v3 or v4)"))
    }
}

/// Baseline and Variants 1-4 for the given corpus range.
pub fn builtin_specs(corpus_years: YearRange, per_year_per_class: usize, seed: u64) -> Result<Vec<VariantSpec>> {
    BuiltinVariant::ALL
        .iter()
        .map(|v| v.spec(corpus_years, per_year_per_class, seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub spec: VariantSpec,
    pub samples: Vec<Sample>,
}

impl Variant {
    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

pub fn build_variant(corpus: &Corpus, spec: &VariantSpec) -> Result<Variant> {
    spec.validate()?;
    let corpus_years = corpus.year_range().unwrap_or(YearRange::new(0, -1));
    for range in [spec.malware_years, spec.benign_years] {
        if !corpus_years.contains_range(&range) {
            return Err(Error::EmptyRange {
                start: range.start,
                end: range.end,
                corpus_start: corpus_years.start,
                corpus_end: corpus_years.end,
            });
        }
    }

    // cells keyed by (year, label); members sorted by sample_id so the draw
    // does not depend on corpus file order
    let mut cells: BTreeMap<(i32, Label), Vec<&Sample>> = BTreeMap::new();
    for s in &corpus.samples {
        cells.entry((s.year, s.label)).or_default().push(s);
    }
    for members in cells.values_mut() {
        members.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    }

    let mut rng = seed::rng(spec.seed);
    let mut pools: [Vec<&Sample>; 2] = [Vec::new(), Vec::new()];
    for (slot, label, years) in [(0, Label::Malware, spec.malware_years), (1, Label::Benign, spec.benign_years)] {
        for year in years.years() {
            let members = cells.get(&(year, label)).map(Vec::as_slice).unwrap_or(&[]);
            if members.len() < spec.per_year_per_class {
                return Err(Error::Insufficient {
                    year,
                    label,
                    requested: spec.per_year_per_class,
                    available: members.len(),
                });
            }
            let mut drawn = members.to_vec();
            drawn.shuffle(&mut rng);
            drawn.truncate(spec.per_year_per_class);
            pools[slot].extend(drawn);
        }
    }

    let ratio = spec.malware_to_benign_ratio;
    let units = (pools[0].len() / ratio.malware as usize).min(pools[1].len() / ratio.benign as usize);
    if units == 0 {
        return Err(Error::InvalidSpec(format!("variant {} would contain no samples", spec.name)));
    }
    let targets = [units * ratio.malware as usize, units * ratio.benign as usize];
    let mut samples = Vec::with_capacity(targets[0] + targets[1]);
    for (pool, target) in pools.iter_mut().zip(targets) {
        if pool.len() > target {
            pool.shuffle(&mut rng);
            pool.truncate(target);
        }
        samples.extend(pool.iter().map(|s| (*s).clone()));
    }
    samples.shuffle(&mut rng);
    Ok(Variant {
        spec: spec.clone(),
        samples,
    })
}

/// Fold membership for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold assignment over a list of labels.
pub fn stratified_kfold_labels(labels: &[Label], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidSpec(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut rng = seed::rng(seed);
    let mut order = Vec::with_capacity(labels.len());
    for label in [Label::Malware, Label::Benign] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if members.len() < k {
            return Err(Error::TooFewSamples {
                k,
                label,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        order.extend(members);
    }
    // dealing both classes round-robin from one running counter balances
    // total fold sizes and per-class counts at once
    let mut fold_of = vec![0; labels.len()];
    for (pos, &idx) in order.iter().enumerate() {
        fold_of[idx] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

pub fn stratified_kfold(variant: &Variant, k: usize, seed: u64) -> Result<FoldAssignment> {
    stratified_kfold_labels(&variant.labels(), k, seed)
}

/// Stratified holdout split: returns (train, test) with roughly
/// `test_fraction` of each class in the test part.
pub fn split_holdout(variant: &Variant, test_fraction: f64, seed: u64) -> Result<(Variant, Variant)> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::InvalidSpec(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let mut rng = seed::rng(seed);
    let mut test_mask = vec![false; variant.samples.len()];
    for label in [Label::Malware, Label::Benign] {
        let mut members: Vec<usize> = (0..variant.samples.len())
            .filter(|&i| variant.samples[i].label == label)
            .collect();
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64) * test_fraction).round() as usize;
        if n_test == 0 || n_test == members.len() {
            return Err(Error::TooFewSamples {
                k: 2,
                label,
                count: members.len(),
            });
        }
        for &i in &members[..n_test] {
            test_mask[i] = true;
        }
    }
    let pick = |want_test: bool, suffix: &str| Variant {
        spec: VariantSpec {
            name: format!("{}-{}", variant.spec.name, suffix),
            ..variant.spec.clone()
        },
        samples: variant
            .samples
            .iter()
            .zip(&test_mask)
            .filter(|(_, &t)| t == want_test)
            .map(|(s, _)| s.clone())
            .collect(),
    };
    Ok((pick(false, "train"), pick(true, "holdout")))
}

/// One spec per (benign year, ratio) with malware pinned to a single year.
pub fn year_sweep_specs(
    fixed_malware_year: i32,
    benign_years: &[i32],
    ratios: &[Ratio],
    per_year_per_class: usize,
    seed: u64,
) -> Result<Vec<VariantSpec>> {
    if benign_years.is_empty() {
        return Err(Error::EmptyInput("benign_years"));
    }
    if ratios.is_empty() {
        return Err(Error::EmptyInput("ratios"));
    }
    let mut specs = Vec::with_capacity(benign_years.len() * ratios.len());
    for &ratio in ratios {
        for &year in benign_years {
            specs.push(VariantSpec {
                name: sweep_name(fixed_malware_year, year, ratio),
                malware_years: YearRange::single(fixed_malware_year),
                benign_years: YearRange::single(year),
                per_year_per_class,
                malware_to_benign_ratio: ratio,
                seed,
            });
        }
    }
    Ok(specs)
}

pub fn sweep_name(malware_year: i32, benign_year: i32, ratio: Ratio) -> String {
    format!("sweep-m{malware_year}-b{benign_year}-{}to{}", ratio.malware, ratio.benign)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(m: usize, b: usize) -> Vec<Label> {
        let mut v = vec![Label::Malware; m];
        v.extend(vec![Label::Benign; b]);
        v
    }

    #[test]
    fn builtin_ranges() {
        let specs = builtin_specs(YearRange::new(2010, 2020), 100, 0).unwrap();
        let v2 = &specs[2];
        assert_eq!(v2.malware_years, YearRange::new(2010, 2012));
        assert_eq!(v2.benign_years, YearRange::new(2010, 2012));
        let v4 = &specs[4];
        assert_eq!(v4.malware_years, YearRange::new(2010, 2012));
        assert_eq!(v4.benign_years, YearRange::new(2018, 2020));
        for s in &specs[..3] {
            assert!(s.is_temporally_consistent());
        }
        for s in &specs[3..] {
            assert!(!s.malware_years.overlaps(&s.benign_years));
        }
    }

    #[test]
    fn builtin_needs_six_years() {
        assert!(matches!(
            builtin_specs(YearRange::new(2010, 2013), 10, 0),
            Err(Error::RangeTooShort(4))
        ));
    }

    #[test]
    fn kfold_balanced_examples() {
        let f = stratified_kfold_labels(&labels(10, 10), 10, 3).unwrap();
        for fold in 0..10 {
            let test = f.test_indices(fold);
            assert_eq!(test.len(), 2);
            assert_eq!(test.iter().filter(|&&i| i < 10).count(), 1);
        }
        let f = stratified_kfold_labels(&labels(11, 10), 10, 3).unwrap();
        assert!(f.fold_sizes().iter().all(|&s| s == 2 || s == 3));
    }

    #[test]
    fn kfold_rejects_small_classes() {
        assert!(matches!(
            stratified_kfold_labels(&labels(3, 20), 5, 0),
            Err(Error::TooFewSamples { label: Label::Malware, count: 3, .. })
        ));
        assert!(stratified_kfold_labels(&labels(10, 10), 1, 0).is_err());
    }

    #[test]
    fn sweep_counts() {
        let years: Vec<i32> = (2010..=2020).collect();
        let ratios = [Ratio::new(1, 1), Ratio::new(4, 1), Ratio::new(1, 4)];
        assert_eq!(year_sweep_specs(2010, &years, &ratios, 200, 0).unwrap().len(), 33);
        let one = year_sweep_specs(2010, &[2010], &[Ratio::BALANCED], 200, 0).unwrap();
        assert_eq!(one[0].malware_years, one[0].benign_years);
        assert!(year_sweep_specs(2010, &[], &ratios, 200, 0).is_err());
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("4:1".parse::<Ratio>().unwrap(), Ratio::new(4, 1));
        assert!("0:1".parse::<Ratio>().is_err());
        assert!("41".parse::<Ratio>().is_err());
        assert_eq!(Ratio::new(1, 4).to_string(), "1:4");
    }
}
