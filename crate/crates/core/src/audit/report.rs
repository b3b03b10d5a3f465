//! Report documents: versioned JSON, a flat CSV keyed by
//! variant × model × class × T × lifecycle, and a plain-text table in the
//! usual Top10/Top20 × Added/Removed layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{lifecycle_class, FeatureCatalog, Label, LifecycleClass, YearRange};
use crate::error::{Error, Result};
use crate::learners::ModelKind;

use super::{FeatureImportanceSummary, MetricsReport, TimeBiasTable};

pub const AUDIT_SCHEMA: &str = "1";
pub const CSV_HEADER: &str = "variant,model,class,T,lifecycle,containment,composition,accuracy,precision,recall,f1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopFeature {
    pub feature_id: usize,
    pub name: String,
    pub lifecycle: LifecycleClass,
    pub avg_fi: f64,
    pub count_top: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopFeatures {
    pub malware: Vec<TopFeature>,
    pub benign: Vec<TopFeature>,
}

impl TopFeatures {
    /// The `k` features with the largest average importance in each group.
    pub fn from_summary(
        summary: &FeatureImportanceSummary,
        catalog: &FeatureCatalog,
        window: YearRange,
        k: usize,
    ) -> Self {
        let pick = |class: Label| -> Vec<TopFeature> {
            let Some(g) = summary.group(class) else {
                return Vec::new();
            };
            if g.n == 0 {
                return Vec::new();
            }
            crate::explainers::top_features(&g.avg_fi, k)
                .into_iter()
                .map(|j| TopFeature {
                    feature_id: j,
                    name: catalog.name(j).to_string(),
                    lifecycle: lifecycle_class(&catalog.features[j], window),
                    avg_fi: g.avg_fi[j],
                    count_top: g.count_top.iter().map(|(&t, v)| (t, v[j])).collect(),
                })
                .collect()
        };
        TopFeatures {
            malware: pick(Label::Malware),
            benign: pick(Label::Benign),
        }
    }
}

/// Serializable result of one (variant, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: String,
    pub model: ModelKind,
    pub metrics: MetricsReport,
    pub fold_metrics: Vec<MetricsReport>,
    pub time_bias: TimeBiasTable,
    pub top_features: TopFeatures,
    #[serde(default)]
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub audit_schema: String,
    pub runs: Vec<RunReport>,
}

fn sorted(runs: &[RunReport]) -> Vec<&RunReport> {
    let mut v: Vec<&RunReport> = runs.iter().collect();
    v.sort_by(|a, b| a.variant.cmp(&b.variant).then(a.model.cmp(&b.model)));
    v
}

pub fn emit_json(runs: &[RunReport]) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("runs"));
    }
    let doc = ReportDocument {
        audit_schema: AUDIT_SCHEMA.to_string(),
        runs: sorted(runs).into_iter().cloned().collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn parse_json(text: &str) -> Result<ReportDocument> {
    let doc: ReportDocument = serde_json::from_str(text)?;
    if doc.audit_schema != AUDIT_SCHEMA {
        return Err(Error::InvalidSpec(format!("unsupported audit schema {:?}", doc.audit_schema)));
    }
    Ok(doc)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per (run, class, T, lifecycle), ordered by variant, model,
/// class (malware first), T, lifecycle (added first).
pub fn emit_csv(runs: &[RunReport]) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("runs"));
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for run in sorted(runs) {
        let m = &run.metrics;
        let mut rows: Vec<_> = run.time_bias.rows.iter().collect();
        rows.sort_by_key(|r| (r.class, r.t));
        for r in rows {
            for (lifecycle, containment, composition) in [
                ("added", r.containment_added, r.composition_added),
                ("removed", r.containment_removed, r.composition_removed),
            ] {
                writeln!(
                    out,
                    "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                    csv_field(&run.variant),
                    run.model,
                    r.class,
                    r.t,
                    lifecycle,
                    containment,
                    composition,
                    m.accuracy,
                    m.precision,
                    m.recall,
                    m.f1
                )
                .expect("writing to a String cannot fail");
            }
        }
    }
    Ok(out)
}

/// Containment ratios laid out as rows variant × class and columns
/// Top-T × {Added, Removed}.
pub fn render_time_bias_table(rows: &[(String, TimeBiasTable)], top_ts: &[usize]) -> String {
    let mut out = String::new();
    let w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(12);
    let mut header = format!("{:<w$} {:<8}", "", "");
    let mut sub = format!("{:<w$} {:<8}", "", "");
    for t in top_ts {
        header.push_str(&format!(" | {:^17}", format!("Top {t}")));
        sub.push_str(&format!(" | {:>8} {:>8}", "Added", "Removed"));
    }
    out.push_str(header.trim_end());
    out.push('\n');
    out.push_str(sub.trim_end());
    out.push('\n');
    for (name, table) in rows {
        for (class, title) in [(Label::Malware, "Malware"), (Label::Benign, "Benign")] {
            let mut line = format!("{:<w$} {:<8}", name, title);
            for &t in top_ts {
                match table.row(class, t) {
                    Some(r) => line.push_str(&format!(" | {:>8.4} {:>8.4}", r.containment_added, r.containment_removed)),
                    None => line.push_str(&format!(" | {:>8} {:>8}", "-", "-")),
                }
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}
