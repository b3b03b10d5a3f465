//! One-hidden-layer perceptron and its attention-gated variant.
//!
//! Both networks read the sparse one-hot input directly: hidden weights are
//! stored feature-major (`hidden_weights[j * hidden + k]`) so a forward pass
//! only touches the rows of present features.
//!
//! The attention model scores every feature with an affine map of the raw
//! input, normalizes the energies with a softmax, and feeds
//! `n_features * alpha ⊙ x` to the same MLP head. The `n_features` factor
//! makes a uniform attention vector reproduce the raw input, so the head
//! starts from the same operating point as a plain MLP.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::seed;

use super::svm::sigmoid;

const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 64,
            epochs: 50,
            learning_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub n_features: usize,
    pub hidden: usize,
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub params: MlpParams,
}

struct HeadTrace {
    hidden: Vec<f64>,
    logit: f64,
}

struct HeadGrad {
    /// dLoss/d(pre-activation) of the hidden layer.
    delta_hidden: Vec<f64>,
    /// dLoss/d(input value) for each weighted input, in input order.
    d_inputs: Vec<f64>,
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect()
}

/// `-log p(y | logit)` for y in {0, 1}, computed without overflow.
fn cross_entropy(logit: f64, y: f64) -> f64 {
    let softplus = if logit > 0.0 {
        logit + (-logit).exp().ln_1p()
    } else {
        logit.exp().ln_1p()
    };
    softplus - y * logit
}

fn target(s: &Sample) -> f64 {
    if s.label.is_malware() {
        1.0
    } else {
        0.0
    }
}

fn ones(present: &[u32]) -> Vec<(usize, f64)> {
    present.iter().map(|&j| (j as usize, 1.0)).collect()
}

impl MlpModel {
    pub fn init(n_features: usize, params: MlpParams, rng: &mut ChaCha8Rng) -> Self {
        let h = params.hidden;
        MlpModel {
            n_features,
            hidden: h,
            hidden_weights: uniform_vec(rng, n_features * h),
            hidden_bias: vec![0.0; h],
            output_weights: uniform_vec(rng, h),
            output_bias: 0.0,
            params,
        }
    }

    fn forward(&self, inputs: &[(usize, f64)]) -> HeadTrace {
        let h = self.hidden;
        let mut z = self.hidden_bias.clone();
        for &(j, v) in inputs {
            let row = &self.hidden_weights[j * h..(j + 1) * h];
            for (zk, wk) in z.iter_mut().zip(row) {
                *zk += v * wk;
            }
        }
        let hidden: Vec<f64> = z.into_iter().map(f64::tanh).collect();
        let logit = self.output_bias
            + hidden
                .iter()
                .zip(&self.output_weights)
                .map(|(a, w)| a * w)
                .sum::<f64>();
        HeadTrace { hidden, logit }
    }

    fn backward(&self, inputs: &[(usize, f64)], trace: &HeadTrace, d_logit: f64) -> HeadGrad {
        let h = self.hidden;
        let delta_hidden: Vec<f64> = trace
            .hidden
            .iter()
            .zip(&self.output_weights)
            .map(|(a, w)| d_logit * w * (1.0 - a * a))
            .collect();
        let d_inputs = inputs
            .iter()
            .map(|&(j, _)| {
                self.hidden_weights[j * h..(j + 1) * h]
                    .iter()
                    .zip(&delta_hidden)
                    .map(|(w, d)| w * d)
                    .sum()
            })
            .collect();
        HeadGrad {
            delta_hidden,
            d_inputs,
        }
    }

    fn sgd_update(&mut self, inputs: &[(usize, f64)], trace: &HeadTrace, d_logit: f64, grad: &HeadGrad, lr: f64) {
        let h = self.hidden;
        for &(j, v) in inputs {
            let row = &mut self.hidden_weights[j * h..(j + 1) * h];
            for (w, d) in row.iter_mut().zip(&grad.delta_hidden) {
                *w -= lr * v * d;
            }
        }
        for (b, d) in self.hidden_bias.iter_mut().zip(&grad.delta_hidden) {
            *b -= lr * d;
        }
        for (w, a) in self.output_weights.iter_mut().zip(&trace.hidden) {
            *w -= lr * d_logit * a;
        }
        self.output_bias -= lr * d_logit;
    }

    /// Accumulate this sample's gradient into `out`, laid out like
    /// [`MlpModel::flat_parameters`].
    fn accumulate(&self, inputs: &[(usize, f64)], trace: &HeadTrace, d_logit: f64, grad: &HeadGrad, out: &mut [f64]) {
        let h = self.hidden;
        let (w1, rest) = out.split_at_mut(self.n_features * h);
        let (b1, rest) = rest.split_at_mut(h);
        let (w2, b2) = rest.split_at_mut(h);
        for &(j, v) in inputs {
            for (g, d) in w1[j * h..(j + 1) * h].iter_mut().zip(&grad.delta_hidden) {
                *g += v * d;
            }
        }
        for (g, d) in b1.iter_mut().zip(&grad.delta_hidden) {
            *g += d;
        }
        for (g, a) in w2.iter_mut().zip(&trace.hidden) {
            *g += d_logit * a;
        }
        b2[0] += d_logit;
    }

    pub fn logit(&self, present: &[u32]) -> f64 {
        self.forward(&ones(present)).logit
    }

    pub fn score(&self, present: &[u32]) -> f64 {
        sigmoid(self.logit(present))
    }

    pub fn n_parameters(&self) -> usize {
        self.n_features * self.hidden + 2 * self.hidden + 1
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_parameters());
        p.extend_from_slice(&self.hidden_weights);
        p.extend_from_slice(&self.hidden_bias);
        p.extend_from_slice(&self.output_weights);
        p.push(self.output_bias);
        p
    }

    pub fn set_flat_parameters(&mut self, p: &[f64]) {
        let h = self.hidden;
        let n1 = self.n_features * h;
        self.hidden_weights.copy_from_slice(&p[..n1]);
        self.hidden_bias.copy_from_slice(&p[n1..n1 + h]);
        self.output_weights.copy_from_slice(&p[n1 + h..n1 + 2 * h]);
        self.output_bias = p[n1 + 2 * h];
    }

    /// Mean cross-entropy over a batch.
    pub fn batch_loss(&self, batch: &[&Sample]) -> f64 {
        batch
            .iter()
            .map(|s| cross_entropy(self.logit(&s.present), target(s)))
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Analytic gradient of [`MlpModel::batch_loss`].
    pub fn batch_gradient(&self, batch: &[&Sample]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_parameters()];
        for s in batch {
            let inputs = ones(&s.present);
            let trace = self.forward(&inputs);
            let d_logit = sigmoid(trace.logit) - target(s);
            let grad = self.backward(&inputs, &trace, d_logit);
            self.accumulate(&inputs, &trace, d_logit, &grad, &mut out);
        }
        let n = batch.len() as f64;
        out.iter_mut().for_each(|g| *g /= n);
        out
    }

    /// Plain SGD epochs over `train` with no class-balance precondition.
    pub fn train_epochs(&mut self, train: &[&Sample], seed: u64) -> Result<()> {
        let mut rng = seed::rng(seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let lr = self.params.learning_rate;
        for epoch in 0..self.params.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let s = train[i];
                let inputs = ones(&s.present);
                let trace = self.forward(&inputs);
                total += cross_entropy(trace.logit, target(s));
                let d_logit = sigmoid(trace.logit) - target(s);
                let grad = self.backward(&inputs, &trace, d_logit);
                self.sgd_update(&inputs, &trace, d_logit, &grad, lr);
            }
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        Ok(())
    }
}

pub fn fit_mlp(n_features: usize, train: &[&Sample], params: MlpParams, seed: u64) -> Result<MlpModel> {
    super::require_both_classes(train)?;
    let mut rng = seed::rng(seed::derive_seed(seed, &["init"]));
    let mut model = MlpModel::init(n_features, params, &mut rng);
    model.train_epochs(train, seed::derive_seed(seed, &["order"]))?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMlpModel {
    pub n_features: usize,
    /// Feature-major: `scorer_weights[j * n_features + i]` is the
    /// contribution of input feature `j` to the energy of feature `i`.
    pub scorer_weights: Vec<f64>,
    pub scorer_bias: Vec<f64>,
    pub head: MlpModel,
}

/// Numerically stable softmax.
pub fn softmax(energies: &[f64]) -> Vec<f64> {
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = energies.iter().map(|e| (e - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

struct AttentionTrace {
    alpha: Vec<f64>,
    inputs: Vec<(usize, f64)>,
    head: HeadTrace,
}

impl AttentionMlpModel {
    pub fn init(n_features: usize, params: MlpParams, rng: &mut ChaCha8Rng) -> Self {
        let scorer_weights = uniform_vec(rng, n_features * n_features);
        let head = MlpModel::init(n_features, params, rng);
        AttentionMlpModel {
            n_features,
            scorer_weights,
            scorer_bias: vec![0.0; n_features],
            head,
        }
    }

    pub fn energies(&self, present: &[u32]) -> Vec<f64> {
        let d = self.n_features;
        let mut e = self.scorer_bias.clone();
        for &j in present {
            let row = &self.scorer_weights[j as usize * d..(j as usize + 1) * d];
            for (ei, w) in e.iter_mut().zip(row) {
                *ei += w;
            }
        }
        e
    }

    /// Attention weights over all features; sums to one.
    pub fn attention(&self, present: &[u32]) -> Vec<f64> {
        softmax(&self.energies(present))
    }

    fn forward(&self, present: &[u32]) -> AttentionTrace {
        let alpha = self.attention(present);
        let scale = self.n_features as f64;
        let inputs: Vec<(usize, f64)> = present
            .iter()
            .map(|&j| (j as usize, scale * alpha[j as usize]))
            .collect();
        let head = self.head.forward(&inputs);
        AttentionTrace { alpha, inputs, head }
    }

    /// dLoss/d(energy) for every feature.
    fn energy_gradient(&self, trace: &AttentionTrace, head_grad: &HeadGrad) -> Vec<f64> {
        let scale = self.n_features as f64;
        let d_alpha: Vec<(usize, f64)> = trace
            .inputs
            .iter()
            .zip(&head_grad.d_inputs)
            .map(|(&(j, _), g)| (j, scale * g))
            .collect();
        let dot: f64 = d_alpha.iter().map(|&(j, g)| trace.alpha[j] * g).sum();
        let mut de: Vec<f64> = trace.alpha.iter().map(|a| -a * dot).collect();
        for &(j, g) in &d_alpha {
            de[j] += trace.alpha[j] * g;
        }
        de
    }

    pub fn logit(&self, present: &[u32]) -> f64 {
        self.forward(present).head.logit
    }

    pub fn score(&self, present: &[u32]) -> f64 {
        sigmoid(self.logit(present))
    }

    pub fn n_parameters(&self) -> usize {
        self.n_features * self.n_features + self.n_features + self.head.n_parameters()
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_parameters());
        p.extend_from_slice(&self.scorer_weights);
        p.extend_from_slice(&self.scorer_bias);
        p.extend(self.head.flat_parameters());
        p
    }

    pub fn set_flat_parameters(&mut self, p: &[f64]) {
        let d = self.n_features;
        self.scorer_weights.copy_from_slice(&p[..d * d]);
        self.scorer_bias.copy_from_slice(&p[d * d..d * d + d]);
        self.head.set_flat_parameters(&p[d * d + d..]);
    }

    pub fn batch_loss(&self, batch: &[&Sample]) -> f64 {
        batch
            .iter()
            .map(|s| cross_entropy(self.logit(&s.present), target(s)))
            .sum::<f64>()
            / batch.len() as f64
    }

    pub fn batch_gradient(&self, batch: &[&Sample]) -> Vec<f64> {
        let d = self.n_features;
        let mut out = vec![0.0; self.n_parameters()];
        for s in batch {
            let trace = self.forward(&s.present);
            let d_logit = sigmoid(trace.head.logit) - target(s);
            let head_grad = self.head.backward(&trace.inputs, &trace.head, d_logit);
            let de = self.energy_gradient(&trace, &head_grad);
            let (scorer_w, rest) = out.split_at_mut(d * d);
            let (scorer_b, head_out) = rest.split_at_mut(d);
            for &j in &s.present {
                for (g, e) in scorer_w[j as usize * d..(j as usize + 1) * d].iter_mut().zip(&de) {
                    *g += e;
                }
            }
            for (g, e) in scorer_b.iter_mut().zip(&de) {
                *g += e;
            }
            self.head
                .accumulate(&trace.inputs, &trace.head, d_logit, &head_grad, head_out);
        }
        let n = batch.len() as f64;
        out.iter_mut().for_each(|g| *g /= n);
        out
    }

    pub fn train_epochs(&mut self, train: &[&Sample], seed: u64) -> Result<()> {
        let d = self.n_features;
        let lr = self.head.params.learning_rate;
        let mut rng = seed::rng(seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..self.head.params.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let s = train[i];
                let trace = self.forward(&s.present);
                total += cross_entropy(trace.head.logit, target(s));
                let d_logit = sigmoid(trace.head.logit) - target(s);
                let head_grad = self.head.backward(&trace.inputs, &trace.head, d_logit);
                let de = self.energy_gradient(&trace, &head_grad);
                for &j in &s.present {
                    for (w, e) in self.scorer_weights[j as usize * d..(j as usize + 1) * d]
                        .iter_mut()
                        .zip(&de)
                    {
                        *w -= lr * e;
                    }
                }
                for (b, e) in self.scorer_bias.iter_mut().zip(&de) {
                    *b -= lr * e;
                }
                self.head
                    .sgd_update(&trace.inputs, &trace.head, d_logit, &head_grad, lr);
            }
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        Ok(())
    }
}

pub fn fit_attention_mlp(
    n_features: usize,
    train: &[&Sample],
    params: MlpParams,
    seed: u64,
) -> Result<AttentionMlpModel> {
    super::require_both_classes(train)?;
    let mut rng = seed::rng(seed::derive_seed(seed, &["init"]));
    let mut model = AttentionMlpModel::init(n_features, params, &mut rng);
    model.train_epochs(train, seed::derive_seed(seed, &["order"]))?;
    Ok(model)
}
