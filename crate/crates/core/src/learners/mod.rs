//! The five classifier families behind one train/predict/score surface.
//!
//! Every model maps a sample to a malware score in [0, 1]; the predicted
//! label is malware iff the score is strictly above 0.5, so an exact tie
//! is benign.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Sample};
use crate::error::{Error, Result};

pub mod forest;
pub mod knn;
pub mod mlp;
pub mod svm;

pub use forest::{fit_rf, ForestParams, RandomForestModel};
pub use knn::{fit_knn, KnnModel, KnnParams};
pub use mlp::{fit_attention_mlp, fit_mlp, softmax, AttentionMlpModel, MlpModel, MlpParams};
pub use svm::{fit_svm, LinearSvmModel, SvmParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Svm,
    AttentionMlp,
    Mlp,
    Knn,
    #[serde(rename = "rf")]
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Svm,
        ModelKind::AttentionMlp,
        ModelKind::Mlp,
        ModelKind::Knn,
        ModelKind::RandomForest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::AttentionMlp => "attention_mlp",
            ModelKind::Mlp => "mlp",
            ModelKind::Knn => "knn",
            ModelKind::RandomForest => "rf",
        }
    }

    pub fn is_differentiable(self) -> bool {
        matches!(self, ModelKind::Mlp | ModelKind::AttentionMlp)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown model kind {s:?} (expected svm, attention_mlp, mlp, knn or rf)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub svm: SvmParams,
    pub mlp: MlpParams,
    pub attention_mlp: MlpParams,
    pub knn: KnnParams,
    pub rf: ForestParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    #[serde(rename = "svm")]
    LinearSvm(LinearSvmModel),
    AttentionMlp(AttentionMlpModel),
    Mlp(MlpModel),
    Knn(KnnModel),
    #[serde(rename = "rf")]
    RandomForest(RandomForestModel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

pub fn label_for_score(score: f64) -> Label {
    if score > 0.5 {
        Label::Malware
    } else {
        Label::Benign
    }
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::LinearSvm(_) => ModelKind::Svm,
            TrainedModel::AttentionMlp(_) => ModelKind::AttentionMlp,
            TrainedModel::Mlp(_) => ModelKind::Mlp,
            TrainedModel::Knn(_) => ModelKind::Knn,
            TrainedModel::RandomForest(_) => ModelKind::RandomForest,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::LinearSvm(m) => m.weights.len(),
            TrainedModel::AttentionMlp(m) => m.n_features,
            TrainedModel::Mlp(m) => m.n_features,
            TrainedModel::Knn(m) => m.n_features,
            TrainedModel::RandomForest(m) => m.n_features,
        }
    }

    /// Malware score of a present-feature list. Ids are assumed valid.
    pub fn score_present(&self, present: &[u32]) -> f64 {
        match self {
            TrainedModel::LinearSvm(m) => m.score(present),
            TrainedModel::AttentionMlp(m) => m.score(present),
            TrainedModel::Mlp(m) => m.score(present),
            TrainedModel::Knn(m) => m.score(present),
            TrainedModel::RandomForest(m) => m.score(present),
        }
    }

    pub fn check_sample(&self, x: &Sample) -> Result<()> {
        let d = self.n_features();
        match x.present.iter().find(|&&j| j as usize >= d) {
            Some(j) => Err(Error::CatalogMismatch(format!(
                "sample {} has feature {j} but the model was trained on {d} features",
                x.sample_id
            ))),
            None => Ok(()),
        }
    }

    pub fn predict(&self, x: &Sample) -> Result<Prediction> {
        self.check_sample(x)?;
        let score = self.score_present(&x.present);
        Ok(Prediction {
            label: label_for_score(score),
            score,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidSpec(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        let mut model = doc.model;
        if let TrainedModel::Knn(m) = &mut model {
            m.rebuild_index();
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    model: TrainedModel,
}

pub(crate) fn require_both_classes(train: &[&Sample]) -> Result<()> {
    let malware = train.iter().any(|s| s.label.is_malware());
    let benign = train.iter().any(|s| !s.label.is_malware());
    if malware && benign {
        Ok(())
    } else {
        Err(Error::SingleClass)
    }
}

pub fn fit(kind: ModelKind, n_features: usize, train: &[&Sample], hp: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    Ok(match kind {
        ModelKind::Svm => TrainedModel::LinearSvm(fit_svm(n_features, train, hp.svm, seed)?),
        ModelKind::AttentionMlp => {
            TrainedModel::AttentionMlp(fit_attention_mlp(n_features, train, hp.attention_mlp, seed)?)
        }
        ModelKind::Mlp => TrainedModel::Mlp(fit_mlp(n_features, train, hp.mlp, seed)?),
        ModelKind::Knn => TrainedModel::Knn(fit_knn(n_features, train, hp.knn)?),
        ModelKind::RandomForest => TrainedModel::RandomForest(fit_rf(n_features, train, hp.rf, seed)?),
    })
}

pub fn predict(model: &TrainedModel, x: &Sample) -> Result<Prediction> {
    model.predict(x)
}

/// Relative error used by [`gradient_check`]; the floor keeps
/// near-zero gradients from dominating through rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-7)
}

/// Largest relative error between the analytic gradient of the mean batch
/// cross-entropy and its central finite difference, over every parameter.
pub fn gradient_check(model: &TrainedModel, batch: &[&Sample], epsilon: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradient check batch"));
    }
    for s in batch {
        model.check_sample(s)?;
    }
    match model {
        TrainedModel::Mlp(m) => {
            let analytic = m.batch_gradient(batch);
            let base = m.flat_parameters();
            let mut probe = m.clone();
            Ok(max_error(&base, &analytic, epsilon, |p| {
                probe.set_flat_parameters(p);
                probe.batch_loss(batch)
            }))
        }
        TrainedModel::AttentionMlp(m) => {
            let analytic = m.batch_gradient(batch);
            let base = m.flat_parameters();
            let mut probe = m.clone();
            Ok(max_error(&base, &analytic, epsilon, |p| {
                probe.set_flat_parameters(p);
                probe.batch_loss(batch)
            }))
        }
        other => Err(Error::NotDifferentiable(other.kind().to_string())),
    }
}

fn max_error(base: &[f64], analytic: &[f64], eps: f64, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut p = base.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        p[i] = base[i] + eps;
        let up = loss(&p);
        p[i] = base[i] - eps;
        let down = loss(&p);
        p[i] = base[i];
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}
