//! Per-prediction feature importance.
//!
//! All methods share one sign convention: a positive value supports the
//! predicted class. Attention weights are non-negative by construction.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureCatalog, Label, Sample};
use crate::error::{Error, Result};
use crate::learners::{AttentionMlpModel, LinearSvmModel, TrainedModel};

pub mod lime;

pub use lime::{lime_fit, LimeConfig, LimeFit, MaskSampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SvmWv,
    Attention,
    Lime,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::SvmWv => "svm_wv",
            Method::Attention => "attention",
            Method::Lime => "lime",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationVector {
    pub sample_id: String,
    pub method: Method,
    pub predicted_label: Label,
    /// One importance value per catalog feature.
    pub values: Vec<f64>,
}

impl ExplanationVector {
    /// Ids of the (at most) `t` most important features: descending value,
    /// ties by ascending id, zero-valued features never included.
    pub fn top(&self, t: usize) -> Vec<usize> {
        top_features(&self.values, t)
    }
}

pub fn top_features(values: &[f64], t: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..values.len()).filter(|&j| values[j] != 0.0).collect();
    ids.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    ids.truncate(t);
    ids
}

fn oriented(value: f64, predicted: Label) -> f64 {
    match predicted {
        Label::Malware => value,
        Label::Benign => -value,
    }
}

fn check(model_features: usize, x: &Sample) -> Result<()> {
    match x.present.iter().find(|&&j| j as usize >= model_features) {
        Some(j) => Err(Error::CatalogMismatch(format!(
            "sample {} has feature {j} but the model has {model_features} features",
            x.sample_id
        ))),
        None => Ok(()),
    }
}

/// Weight times feature value, oriented toward the predicted class.
pub fn svm_explain(m: &LinearSvmModel, x: &Sample) -> Result<ExplanationVector> {
    check(m.weights.len(), x)?;
    let predicted = crate::learners::label_for_score(m.score(&x.present));
    let mut values = vec![0.0; m.weights.len()];
    for &j in &x.present {
        values[j as usize] = oriented(m.weights[j as usize], predicted);
    }
    Ok(ExplanationVector {
        sample_id: x.sample_id.clone(),
        method: Method::SvmWv,
        predicted_label: predicted,
        values,
    })
}

/// Attention weights of the present features; absent features get 0 even
/// though the softmax assigns them mass.
pub fn attention_explain(m: &AttentionMlpModel, x: &Sample) -> Result<ExplanationVector> {
    check(m.n_features, x)?;
    let alpha = m.attention(&x.present);
    let predicted = crate::learners::label_for_score(m.score(&x.present));
    let mut values = vec![0.0; m.n_features];
    for &j in &x.present {
        values[j as usize] = alpha[j as usize];
    }
    Ok(ExplanationVector {
        sample_id: x.sample_id.clone(),
        method: Method::Attention,
        predicted_label: predicted,
        values,
    })
}

pub fn lime_explain(m: &TrainedModel, x: &Sample, cfg: &LimeConfig) -> Result<ExplanationVector> {
    let fit = lime_fit(m, x, cfg)?;
    let predicted = crate::learners::label_for_score(m.score_present(&x.present));
    let mut values = vec![0.0; m.n_features()];
    for (&j, &c) in fit.features.iter().zip(&fit.coefficients) {
        values[j as usize] = oriented(c, predicted);
    }
    Ok(ExplanationVector {
        sample_id: x.sample_id.clone(),
        method: Method::Lime,
        predicted_label: predicted,
        values,
    })
}

/// Linear SVM → weight×value, attention MLP → attention, everything else → LIME.
pub fn explain(m: &TrainedModel, x: &Sample, cfg: &LimeConfig) -> Result<ExplanationVector> {
    match m {
        TrainedModel::LinearSvm(svm) => svm_explain(svm, x),
        TrainedModel::AttentionMlp(att) => attention_explain(att, x),
        _ if x.present.is_empty() => {
            // nothing to perturb: an all-zero explanation is exact
            m.check_sample(x)?;
            Ok(ExplanationVector {
                sample_id: x.sample_id.clone(),
                method: Method::Lime,
                predicted_label: crate::learners::label_for_score(m.score_present(&[])),
                values: vec![0.0; m.n_features()],
            })
        }
        _ => lime_explain(m, x, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopEntry {
    pub feature_id: usize,
    pub name: String,
    pub value: f64,
}

/// One line of the explanations JSON-lines export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub sample_id: String,
    pub method: Method,
    pub predicted_label: Label,
    pub top: Vec<TopEntry>,
}

impl ExplanationRecord {
    pub fn from_vector(e: &ExplanationVector, catalog: &FeatureCatalog, k: usize) -> Self {
        ExplanationRecord {
            sample_id: e.sample_id.clone(),
            method: e.method,
            predicted_label: e.predicted_label,
            top: e
                .top(k)
                .into_iter()
                .map(|j| TopEntry {
                    feature_id: j,
                    name: catalog.name(j).to_string(),
                    value: e.values[j],
                })
                .collect(),
        }
    }
}

pub fn write_explanations_jsonl(
    explanations: &[ExplanationVector],
    catalog: &FeatureCatalog,
    k: usize,
    out: &mut impl Write,
) -> io::Result<()> {
    for e in explanations {
        serde_json::to_writer(&mut *out, &ExplanationRecord::from_vector(e, catalog, k))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Dense N×d matrix of little-endian f64, row-major.
pub fn write_dense_sidecar(explanations: &[ExplanationVector], out: &mut impl Write) -> io::Result<()> {
    for e in explanations {
        for v in &e.values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dense_sidecar(bytes: &[u8], n_features: usize) -> Result<Vec<Vec<f64>>> {
    let row_bytes = n_features * 8;
    if n_features == 0 || bytes.len() % row_bytes != 0 {
        return Err(Error::LengthMismatch {
            expected: row_bytes,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(row_bytes)
        .map(|row| {
            row.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect()
        })
        .collect())
}
