//! Audit statistics over explanations: classification metrics, average
//! feature importance, top-T frequency, and the time-bias tables that show
//! how often lifecycle-bound features drive predictions.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{lifecycle_flags, FeatureCatalog, Label, LifecycleFlags, YearRange};
use crate::error::{Error, Result};
use crate::explainers::{explain, ExplanationVector, LimeConfig};
use crate::learners::TrainedModel;
use crate::variants::Variant;

pub mod report;

pub const DEFAULT_TOP_T: [usize; 2] = [10, 20];

/// Confusion counts and derived scores; malware is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsReport {
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Summed confusion counts (micro average).
    pub fn pooled(folds: &[MetricsReport]) -> Self {
        let sum = |f: fn(&MetricsReport) -> usize| folds.iter().map(f).sum();
        Self::from_counts(sum(|m| m.tp), sum(|m| m.fp), sum(|m| m.fn_), sum(|m| m.tn))
    }

    /// Summed confusion counts with scores averaged over folds (macro).
    pub fn macro_average(folds: &[MetricsReport]) -> Self {
        let mut m = Self::pooled(folds);
        let n = folds.len().max(1) as f64;
        m.accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / n;
        m.precision = folds.iter().map(|f| f.precision).sum::<f64>() / n;
        m.recall = folds.iter().map(|f| f.recall).sum::<f64>() / n;
        m.f1 = folds.iter().map(|f| f.f1).sum::<f64>() / n;
        m
    }
}

/// Metrics over `(true, predicted)` pairs.
pub fn metrics(predictions: &[(Label, Label)]) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for &(truth, pred) in predictions {
        match (truth, pred) {
            (Label::Malware, Label::Malware) => tp += 1,
            (Label::Benign, Label::Malware) => fp += 1,
            (Label::Malware, Label::Benign) => fn_ += 1,
            (Label::Benign, Label::Benign) => tn += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, fn_, tn))
}

/// Pairwise summation; fixed association order regardless of threading.
fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn check_uniform(explns: &[ExplanationVector]) -> Result<usize> {
    let first = explns.first().ok_or(Error::EmptyInput("explanations"))?;
    let d = first.values.len();
    if let Some(bad) = explns.iter().find(|e| e.values.len() != d) {
        return Err(Error::LengthMismatch {
            expected: d,
            found: bad.values.len(),
        });
    }
    Ok(d)
}

/// Elementwise mean of the explanation vectors.
pub fn avg_feature_importance(explns: &[ExplanationVector]) -> Result<Vec<f64>> {
    let d = check_uniform(explns)?;
    let n = explns.len() as f64;
    let mut column = Vec::with_capacity(explns.len());
    Ok((0..d)
        .map(|j| {
            column.clear();
            column.extend(explns.iter().map(|e| e.values[j]));
            pairwise_sum(&column) / n
        })
        .collect())
}

/// Fraction of explanations whose top-T contains each feature.
pub fn count_top_all(explns: &[ExplanationVector], t: usize) -> Result<Vec<f64>> {
    let d = check_uniform(explns)?;
    if t == 0 || t > d {
        return Err(Error::TopOutOfRange { t, max: d });
    }
    let mut counts = vec![0usize; d];
    for e in explns {
        for j in e.top(t) {
            counts[j] += 1;
        }
    }
    let n = explns.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

pub fn count_top(explns: &[ExplanationVector], feature_id: usize, t: usize) -> Result<f64> {
    let all = count_top_all(explns, t)?;
    all.get(feature_id).copied().ok_or(Error::LengthMismatch {
        expected: all.len(),
        found: feature_id + 1,
    })
}

/// How explanations are split into classes for the audit tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    Predicted,
    True,
}

/// Per-class importance statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupImportance {
    pub class: Label,
    pub n: usize,
    pub avg_fi: Vec<f64>,
    /// T → per-feature fraction.
    pub count_top: BTreeMap<usize, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportanceSummary {
    pub groups: Vec<GroupImportance>,
}

impl FeatureImportanceSummary {
    pub fn group(&self, class: Label) -> Option<&GroupImportance> {
        self.groups.iter().find(|g| g.class == class)
    }
}

fn split_groups(explns: &[ExplanationVector], groups: &[Label], class: Label) -> Vec<ExplanationVector> {
    explns
        .iter()
        .zip(groups)
        .filter(|(_, &g)| g == class)
        .map(|(e, _)| e.clone())
        .collect()
}

/// Importance summary for the malware and benign groups. Empty groups get
/// zero vectors.
pub fn summarize_importance(
    explns: &[ExplanationVector],
    groups: &[Label],
    n_features: usize,
    top_ts: &[usize],
) -> Result<FeatureImportanceSummary> {
    if explns.len() != groups.len() {
        return Err(Error::LengthMismatch {
            expected: explns.len(),
            found: groups.len(),
        });
    }
    let mut out = Vec::with_capacity(2);
    for class in [Label::Malware, Label::Benign] {
        let members = split_groups(explns, groups, class);
        let (avg_fi, count_top) = if members.is_empty() {
            (
                vec![0.0; n_features],
                top_ts.iter().map(|&t| (t, vec![0.0; n_features])).collect(),
            )
        } else {
            let avg = avg_feature_importance(&members)?;
            let mut ct = BTreeMap::new();
            for &t in top_ts {
                ct.insert(t, count_top_all(&members, t.min(n_features))?);
            }
            (avg, ct)
        };
        out.push(GroupImportance {
            class,
            n: members.len(),
            avg_fi,
            count_top,
        });
    }
    Ok(FeatureImportanceSummary { groups: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBiasRow {
    pub class: Label,
    #[serde(rename = "T")]
    pub t: usize,
    pub n_samples: usize,
    /// Share of samples with at least one added feature in their top-T.
    pub containment_added: f64,
    pub containment_removed: f64,
    /// Mean share of top-T slots held by added features (x / T).
    pub composition_added: f64,
    pub composition_removed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBiasTable {
    pub window: YearRange,
    pub grouping: Grouping,
    /// Set when the catalog carries no lifecycle metadata at all.
    pub all_neutral: bool,
    pub rows: Vec<TimeBiasRow>,
}

impl TimeBiasTable {
    pub fn row(&self, class: Label, t: usize) -> Option<&TimeBiasRow> {
        self.rows.iter().find(|r| r.class == class && r.t == t)
    }
}

/// Containment and composition ratios of added/removed features in each
/// class group's top-T explanations.
pub fn time_bias_table(
    explns: &[ExplanationVector],
    groups: &[Label],
    catalog: &FeatureCatalog,
    window: YearRange,
    top_ts: &[usize],
    grouping: Grouping,
) -> Result<TimeBiasTable> {
    if explns.len() != groups.len() {
        return Err(Error::LengthMismatch {
            expected: explns.len(),
            found: groups.len(),
        });
    }
    if let Some(bad) = explns.iter().find(|e| e.values.len() != catalog.len()) {
        return Err(Error::LengthMismatch {
            expected: catalog.len(),
            found: bad.values.len(),
        });
    }
    let flags: Vec<LifecycleFlags> = catalog.features.iter().map(|f| lifecycle_flags(f, window)).collect();
    let all_neutral = !catalog.features.iter().any(|f| f.has_lifecycle());
    let mut rows = Vec::with_capacity(2 * top_ts.len());
    for class in [Label::Malware, Label::Benign] {
        let members: Vec<&ExplanationVector> = explns
            .iter()
            .zip(groups)
            .filter(|(_, &g)| g == class)
            .map(|(e, _)| e)
            .collect();
        for &t in top_ts {
            if t == 0 {
                return Err(Error::TopOutOfRange { t, max: catalog.len() });
            }
            let (mut has_added, mut has_removed) = (0usize, 0usize);
            let (mut comp_added, mut comp_removed) = (0.0, 0.0);
            for e in &members {
                let top = e.top(t);
                let added = top.iter().filter(|&&j| flags[j].added).count();
                let removed = top.iter().filter(|&&j| flags[j].removed).count();
                has_added += usize::from(added > 0);
                has_removed += usize::from(removed > 0);
                comp_added += added as f64 / t as f64;
                comp_removed += removed as f64 / t as f64;
            }
            let n = members.len();
            let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
            rows.push(TimeBiasRow {
                class,
                t,
                n_samples: n,
                containment_added: ratio(has_added, n),
                containment_removed: ratio(has_removed, n),
                composition_added: mean(comp_added),
                composition_removed: mean(comp_removed),
            });
        }
    }
    Ok(TimeBiasTable {
        window,
        grouping,
        all_neutral,
        rows,
    })
}

pub fn grouping_labels(explns: &[ExplanationVector], truths: &[Label], grouping: Grouping) -> Vec<Label> {
    match grouping {
        Grouping::Predicted => explns.iter().map(|e| e.predicted_label).collect(),
        Grouping::True => truths.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTestReport {
    pub train_variant: String,
    pub test_variant: String,
    pub model: crate::learners::ModelKind,
    pub metrics: MetricsReport,
    pub time_bias: TimeBiasTable,
}

/// Options shared by audit passes.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    pub lime: LimeConfig,
    pub window: YearRange,
    pub top_ts: Vec<usize>,
    pub grouping: Grouping,
    pub allow_overlap: bool,
}

/// Predict, explain and audit every sample of `test` with a model trained
/// on `train`.
pub fn cross_test(
    model: &TrainedModel,
    train: &Variant,
    test: &Variant,
    catalog: &FeatureCatalog,
    opts: &AuditOptions,
) -> Result<(CrossTestReport, Vec<ExplanationVector>)> {
    if model.n_features() != catalog.len() {
        return Err(Error::CatalogMismatch(format!(
            "model has {} features, catalog has {}",
            model.n_features(),
            catalog.len()
        )));
    }
    if !opts.allow_overlap {
        let train_ids: HashSet<&str> = train.samples.iter().map(|s| s.sample_id.as_str()).collect();
        if let Some(s) = test.samples.iter().find(|s| train_ids.contains(s.sample_id.as_str())) {
            return Err(Error::InvalidSpec(format!(
                "sample {} appears in both {} and {}; pass allow_overlap to permit it",
                s.sample_id, train.spec.name, test.spec.name
            )));
        }
    }
    let mut pairs = Vec::with_capacity(test.samples.len());
    let mut explns = Vec::with_capacity(test.samples.len());
    for s in &test.samples {
        let e = explain(model, s, &opts.lime)?;
        pairs.push((s.label, e.predicted_label));
        explns.push(e);
    }
    let metrics = metrics(&pairs)?;
    let truths: Vec<Label> = test.samples.iter().map(|s| s.label).collect();
    let groups = grouping_labels(&explns, &truths, opts.grouping);
    let time_bias = time_bias_table(&explns, &groups, catalog, opts.window, &opts.top_ts, opts.grouping)?;
    Ok((
        CrossTestReport {
            train_variant: train.spec.name.clone(),
            test_variant: test.spec.name.clone(),
            model: model.kind(),
            metrics,
            time_bias,
        },
        explns,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Category, FeatureDescriptor};
    use crate::explainers::Method;

    fn ev(values: Vec<f64>) -> ExplanationVector {
        ExplanationVector {
            sample_id: "s".into(),
            method: Method::Lime,
            predicted_label: Label::Malware,
            values,
        }
    }

    fn pairs(tp: usize, fp: usize, fn_: usize, tn: usize) -> Vec<(Label, Label)> {
        let mut v = vec![(Label::Malware, Label::Malware); tp];
        v.extend(vec![(Label::Benign, Label::Malware); fp]);
        v.extend(vec![(Label::Malware, Label::Benign); fn_]);
        v.extend(vec![(Label::Benign, Label::Benign); tn]);
        v
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&pairs(50, 0, 0, 50)).unwrap();
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));

        let m = metrics(&pairs(8, 2, 1, 9)).unwrap();
        assert!((m.precision - 0.8).abs() < 1e-12);
        assert!((m.recall - 8.0 / 9.0).abs() < 1e-12);
        let f1 = 2.0 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0);
        assert!((m.f1 - f1).abs() < 1e-12);
        assert!((m.f1 - 0.8421).abs() < 1e-4);
        assert!((m.accuracy - 0.85).abs() < 1e-12);

        let m = metrics(&pairs(0, 0, 3, 7)).unwrap();
        assert_eq!((m.precision, m.f1), (0.0, 0.0));
        assert!(metrics(&[]).is_err());
    }

    #[test]
    fn avg_examples() {
        assert_eq!(avg_feature_importance(&[ev(vec![1.0, 0.0]), ev(vec![0.0, 1.0])]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(avg_feature_importance(&[ev(vec![0.3, -2.0])]).unwrap(), vec![0.3, -2.0]);
        assert!(avg_feature_importance(&[]).is_err());
        assert!(avg_feature_importance(&[ev(vec![1.0]), ev(vec![1.0, 2.0])]).is_err());
    }

    #[test]
    fn count_top_examples() {
        let e = [ev(vec![0.9, 0.1])];
        assert_eq!(count_top(&e, 0, 1).unwrap(), 1.0);
        assert_eq!(count_top(&e, 1, 1).unwrap(), 0.0);
        assert_eq!(count_top(&e, 1, 2).unwrap(), 1.0);
        assert!(count_top(&e, 0, 0).is_err());
        assert!(count_top(&e, 0, 3).is_err());
    }

    fn catalog(flags: &[(Option<i32>, Option<i32>)]) -> FeatureCatalog {
        FeatureCatalog::new(
            flags
                .iter()
                .enumerate()
                .map(|(i, &(a, r))| FeatureDescriptor {
                    added_year: a,
                    removed_year: r,
                    ..FeatureDescriptor::new(i, format!("f{i}"), Category::RestrictedApi)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn added_feature_on_top_everywhere() {
        let cat = catalog(&[(Some(2014), None), (None, None), (None, None)]);
        let explns: Vec<_> = (0..4).map(|i| ev(vec![1.0, 0.5, 0.1 * i as f64])).collect();
        let groups = vec![Label::Malware; 4];
        let table = time_bias_table(&explns, &groups, &cat, YearRange::new(2010, 2020), &[1, 2], Grouping::Predicted)
            .unwrap();
        for t in [1, 2] {
            let row = table.row(Label::Malware, t).unwrap();
            assert_eq!(row.containment_added, 1.0);
            assert_eq!(row.containment_removed, 0.0);
            assert_eq!(row.composition_added, 1.0 / t as f64);
        }
        let benign = table.row(Label::Benign, 1).unwrap();
        assert_eq!((benign.n_samples, benign.containment_added), (0, 0.0));
    }

    #[test]
    fn all_neutral_catalog_gives_zero_table() {
        let cat = catalog(&[(None, None), (None, None)]);
        let explns = vec![ev(vec![1.0, 0.5])];
        let table =
            time_bias_table(&explns, &[Label::Malware], &cat, YearRange::new(2010, 2020), &[10, 20], Grouping::Predicted)
                .unwrap();
        assert!(table.all_neutral);
        for r in &table.rows {
            assert_eq!(
                (r.containment_added, r.containment_removed, r.composition_added, r.composition_removed),
                (0.0, 0.0, 0.0, 0.0)
            );
        }
    }
}
