//! Linear SVM trained by stochastic subgradient descent on the
//! L2-regularized hinge loss (Pegasos step size `1 / (lambda * t)`).
//!
//! The bias is treated as the weight of a constant input and regularized
//! with the rest of the vector, which keeps every step well scaled even
//! when the first step sizes are very large. Iterates are projected onto the
//! ball of radius `1 / sqrt(lambda)` and the returned model is the mean
//! iterate of the final epoch.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            epochs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub params: SvmParams,
    /// Regularized objective of each epoch's mean iterate on the training set.
    #[serde(default)]
    pub epoch_objective: Vec<f64>,
}

impl LinearSvmModel {
    pub fn zeros(n_features: usize, params: SvmParams) -> Self {
        LinearSvmModel {
            weights: vec![0.0; n_features],
            bias: 0.0,
            params,
            epoch_objective: Vec::new(),
        }
    }

    pub fn margin(&self, present: &[u32]) -> f64 {
        self.bias + present.iter().map(|&j| self.weights[j as usize]).sum::<f64>()
    }

    /// Logistic squashing of the margin into [0, 1].
    pub fn score(&self, present: &[u32]) -> f64 {
        sigmoid(self.margin(present))
    }

    /// `lambda/2 * (|w|^2 + b^2) + mean hinge loss`.
    pub fn objective(&self, train: &[&Sample]) -> f64 {
        let reg = 0.5
            * self.params.lambda
            * (self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias);
        let hinge: f64 = train
            .iter()
            .map(|s| (1.0 - sign(s) * self.margin(&s.present)).max(0.0))
            .sum();
        reg + hinge / train.len().max(1) as f64
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn sign(s: &Sample) -> f64 {
    if s.label.is_malware() {
        1.0
    } else {
        -1.0
    }
}

/// One projected subgradient step on a single example with target `y` in
/// {-1, +1}.
pub fn pegasos_step(model: &mut LinearSvmModel, present: &[u32], y: f64, eta: f64) {
    let violated = y * model.margin(present) < 1.0;
    let shrink = 1.0 - eta * model.params.lambda;
    for w in &mut model.weights {
        *w *= shrink;
    }
    model.bias *= shrink;
    if violated {
        for &j in present {
            model.weights[j as usize] += eta * y;
        }
        model.bias += eta * y;
    }
    // projection onto the ball of radius 1/sqrt(lambda), which contains the optimum
    let norm_sq = model.weights.iter().map(|w| w * w).sum::<f64>() + model.bias * model.bias;
    let limit = 1.0 / model.params.lambda;
    if norm_sq > limit {
        let scale = (limit / norm_sq).sqrt();
        for w in &mut model.weights {
            *w *= scale;
        }
        model.bias *= scale;
    }
}

pub fn fit_svm(n_features: usize, train: &[&Sample], params: SvmParams, seed: u64) -> Result<LinearSvmModel> {
    super::require_both_classes(train)?;
    if !(params.lambda > 0.0) {
        return Err(Error::InvalidSpec(format!("svm lambda must be positive, got {}", params.lambda)));
    }
    let mut iterate = LinearSvmModel::zeros(n_features, params);
    let mut model = LinearSvmModel::zeros(n_features, params);
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut sum_w = vec![0.0; n_features];
    let mut t = 0usize;
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        sum_w.iter_mut().for_each(|w| *w = 0.0);
        let mut sum_b = 0.0;
        for &i in &order {
            t += 1;
            let eta = 1.0 / (params.lambda * t as f64);
            pegasos_step(&mut iterate, &train[i].present, sign(train[i]), eta);
            for (s, w) in sum_w.iter_mut().zip(&iterate.weights) {
                *s += w;
            }
            sum_b += iterate.bias;
        }
        // the reported model is the mean iterate of the epoch
        let n = order.len() as f64;
        for (w, s) in model.weights.iter_mut().zip(&sum_w) {
            *w = s / n;
        }
        model.bias = sum_b / n;
        let obj = model.objective(train);
        if !obj.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        model.epoch_objective.push(obj);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    #[test]
    fn separable_orthogonal_points() {
        let a = Sample::new("a", 2010, Label::Malware, vec![0]);
        let b = Sample::new("b", 2010, Label::Benign, vec![1]);
        let m = fit_svm(2, &[&a, &b], SvmParams::default(), 1).unwrap();
        assert!(m.margin(&a.present) > 0.0);
        assert!(m.margin(&b.present) < 0.0);
    }

    #[test]
    fn heavy_regularization_shrinks_weights() {
        let a = Sample::new("a", 2010, Label::Malware, vec![0, 2]);
        let b = Sample::new("b", 2010, Label::Benign, vec![1, 2]);
        let params = SvmParams {
            lambda: 1e6,
            epochs: 30,
        };
        let m = fit_svm(3, &[&a, &b], params, 1).unwrap();
        let norm = m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "norm {norm}");
    }

    #[test]
    fn step_without_violation_only_shrinks() {
        let params = SvmParams {
            lambda: 0.1,
            epochs: 1,
        };
        let mut m = LinearSvmModel {
            weights: vec![2.0, -1.0, 0.5],
            bias: 0.25,
            params,
            epoch_objective: vec![],
        };
        // margin = 0.25 + 2.0 + 0.5 = 2.75 > 1 for y = +1
        let eta = 0.5;
        let before = m.clone();
        pegasos_step(&mut m, &[0, 2], 1.0, eta);
        for (w, w0) in m.weights.iter().zip(&before.weights) {
            assert!((w - (w0 - eta * params.lambda * w0)).abs() < 1e-15);
        }
        assert!((m.bias - (before.bias - eta * params.lambda * before.bias)).abs() < 1e-15);
    }

    #[test]
    fn single_class_rejected() {
        let a = Sample::new("a", 2010, Label::Malware, vec![0]);
        assert!(matches!(
            fit_svm(1, &[&a], SvmParams::default(), 0),
            Err(Error::SingleClass)
        ));
    }
}
