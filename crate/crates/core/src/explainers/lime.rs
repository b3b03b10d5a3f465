//! LIME surrogate explanations for sparse binary inputs.
//!
//! Perturbations only switch present features off; absent features stay
//! absent. Each perturbed app is weighted by an exponential kernel on its
//! Hamming distance to the original, and a ridge regression of the model
//! score on the mask bits gives one coefficient per present feature.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::learners::TrainedModel;
use crate::seed;

/// Exhaustive enumeration is refused above this many present features.
pub const MAX_EXHAUSTIVE_FEATURES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSampling {
    #[default]
    Random,
    /// Every one of the 2^d masks, each once.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_perturbations: usize,
    /// `None` means `0.75 * sqrt(d)` with d the present-feature count.
    pub kernel_width: Option<f64>,
    pub ridge_penalty: f64,
    pub seed: u64,
    pub sampling: MaskSampling,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_perturbations: 1000,
            kernel_width: None,
            ridge_penalty: 1.0,
            seed: 0,
            sampling: MaskSampling::Random,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_perturbations < 10 {
            return Err(Error::InvalidSpec(format!(
                "lime needs at least 10 perturbations, got {}",
                self.n_perturbations
            )));
        }
        if let Some(kw) = self.kernel_width {
            if !(kw > 0.0) {
                return Err(Error::InvalidSpec(format!("lime kernel width must be positive, got {kw}")));
            }
        }
        if !(self.ridge_penalty > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "lime ridge penalty must be positive, got {}",
                self.ridge_penalty
            )));
        }
        Ok(())
    }

    pub fn kernel_width_for(&self, d: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (d as f64).sqrt())
    }
}

/// A fitted local surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct LimeFit {
    /// Present feature ids, in the order of `coefficients`.
    pub features: Vec<u32>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Weighted R^2 of the surrogate on its own perturbation set.
    pub weighted_r2: f64,
    pub ridge_penalty: f64,
}

/// The perturbation design: mask rows, kernel weights and model scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbations {
    pub masks: Vec<Vec<bool>>,
    pub weights: Vec<f64>,
    pub scores: Vec<f64>,
}

pub fn kernel_weight(distance: usize, kernel_width: f64) -> f64 {
    let d = distance as f64;
    (-(d * d) / (kernel_width * kernel_width)).exp()
}

fn all_masks(d: usize) -> Vec<Vec<bool>> {
    (0..1u64 << d)
        .map(|bits| (0..d).map(|j| bits & (1 << j) != 0).collect())
        .collect()
}

fn random_masks(d: usize, n: usize, rng: &mut impl Rng) -> Vec<Vec<bool>> {
    let mut masks = Vec::with_capacity(n);
    masks.push(vec![true; d]);
    for _ in 1..n {
        let n_off = rng.gen_range(1..=d);
        let mut m = vec![true; d];
        for j in sample_indices(rng, d, n_off) {
            m[j] = false;
        }
        masks.push(m);
    }
    masks
}

pub fn perturb(model: &TrainedModel, x: &Sample, cfg: &LimeConfig) -> Result<Perturbations> {
    cfg.validate()?;
    model.check_sample(x)?;
    let d = x.present.len();
    if d == 0 {
        return Err(Error::NoPresentFeatures(x.sample_id.clone()));
    }
    let masks = match cfg.sampling {
        MaskSampling::Exhaustive => {
            if d > MAX_EXHAUSTIVE_FEATURES {
                return Err(Error::InvalidSpec(format!(
                    "exhaustive masks over {d} features exceed the limit of {MAX_EXHAUSTIVE_FEATURES}"
                )));
            }
            all_masks(d)
        }
        MaskSampling::Random => {
            let mut rng = seed::rng(seed::derive_seed(cfg.seed, &[&x.sample_id]));
            random_masks(d, cfg.n_perturbations, &mut rng)
        }
    };
    let kw = cfg.kernel_width_for(d);
    let mut weights = Vec::with_capacity(masks.len());
    let mut scores = Vec::with_capacity(masks.len());
    let mut buf = Vec::with_capacity(d);
    for m in &masks {
        buf.clear();
        buf.extend(x.present.iter().zip(m).filter(|(_, &on)| on).map(|(&j, _)| j));
        scores.push(model.score_present(&buf));
        weights.push(kernel_weight(m.iter().filter(|&&on| !on).count(), kw));
    }
    Ok(Perturbations {
        masks,
        weights,
        scores,
    })
}

/// Solve `a x = b` for symmetric positive definite `a` (row-major n×n).
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 1e-12 * a[i * n + i].abs().max(1e-300)) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

/// Weighted ridge regression with an unpenalized intercept. Returns
/// `[intercept, coefficients...]`.
pub fn weighted_ridge(masks: &[Vec<bool>], weights: &[f64], targets: &[f64], penalty: f64) -> Option<Vec<f64>> {
    let d = masks.first().map_or(0, Vec::len);
    let n = d + 1;
    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    let mut row = Vec::with_capacity(n);
    for ((m, &w), &y) in masks.iter().zip(weights).zip(targets) {
        row.clear();
        row.push(1.0);
        row.extend(m.iter().map(|&on| if on { 1.0 } else { 0.0 }));
        for i in 0..n {
            if row[i] == 0.0 {
                continue;
            }
            let wi = w * row[i];
            rhs[i] += wi * y;
            for j in 0..n {
                gram[i * n + j] += wi * row[j];
            }
        }
    }
    for i in 1..n {
        gram[i * n + i] += penalty;
    }
    cholesky_solve(&gram, &rhs, n)
}

fn weighted_r2(p: &Perturbations, solution: &[f64]) -> f64 {
    let total_w: f64 = p.weights.iter().sum();
    let mean = p.weights.iter().zip(&p.scores).map(|(w, y)| w * y).sum::<f64>() / total_w;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for ((m, &w), &y) in p.masks.iter().zip(&p.weights).zip(&p.scores) {
        let fit = solution[0]
            + m.iter()
                .zip(&solution[1..])
                .filter(|(&on, _)| on)
                .map(|(_, c)| c)
                .sum::<f64>();
        ss_res += w * (y - fit) * (y - fit);
        ss_tot += w * (y - mean) * (y - mean);
    }
    if ss_tot <= f64::EPSILON * total_w {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

pub fn lime_fit(model: &TrainedModel, x: &Sample, cfg: &LimeConfig) -> Result<LimeFit> {
    let p = perturb(model, x, cfg)?;
    let mut penalty = cfg.ridge_penalty;
    let solution = match weighted_ridge(&p.masks, &p.weights, &p.scores, penalty) {
        Some(s) => s,
        None => {
            penalty *= 10.0;
            weighted_ridge(&p.masks, &p.weights, &p.scores, penalty)
                .ok_or_else(|| Error::SingularRegression(x.sample_id.clone()))?
        }
    };
    Ok(LimeFit {
        features: x.present.clone(),
        coefficients: solution[1..].to_vec(),
        intercept: solution[0],
        weighted_r2: weighted_r2(&p, &solution),
        ridge_penalty: penalty,
    })
}
