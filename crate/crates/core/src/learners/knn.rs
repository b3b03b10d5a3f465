//! k-nearest neighbours under Hamming distance on one-hot vectors.

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub n_features: usize,
    pub k: usize,
    /// Present-feature lists of the stored training samples.
    pub points: Vec<Vec<u32>>,
    pub malware: Vec<bool>,
    #[serde(skip)]
    bits: Vec<Vec<u64>>,
}

fn to_bits(present: &[u32], words: usize) -> Vec<u64> {
    let mut bits = vec![0u64; words];
    for &j in present {
        bits[j as usize / 64] |= 1 << (j % 64);
    }
    bits
}

impl KnnModel {
    fn words(&self) -> usize {
        self.n_features.div_ceil(64)
    }

    /// Rebuild the packed bit vectors; needed after deserialization.
    pub(crate) fn rebuild_index(&mut self) {
        let words = self.words();
        self.bits = self.points.iter().map(|p| to_bits(p, words)).collect();
    }

    /// Indices of the k nearest stored points; distance ties go to the
    /// lower stored index.
    pub fn neighbours(&self, present: &[u32]) -> Vec<usize> {
        let query = to_bits(present, self.words());
        let mut dist: Vec<(u32, usize)> = self
            .bits
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let d = b.iter().zip(&query).map(|(x, y)| (x ^ y).count_ones()).sum();
                (d, i)
            })
            .collect();
        let k = self.k.min(dist.len());
        if k < dist.len() {
            dist.select_nth_unstable(k - 1);
            dist.truncate(k);
        }
        dist.sort_unstable();
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of malware among the k nearest neighbours.
    pub fn score(&self, present: &[u32]) -> f64 {
        let nn = self.neighbours(present);
        nn.iter().filter(|&&i| self.malware[i]).count() as f64 / nn.len() as f64
    }
}

pub fn fit_knn(n_features: usize, train: &[&Sample], params: KnnParams) -> Result<KnnModel> {
    super::require_both_classes(train)?;
    if params.k == 0 || params.k % 2 == 0 {
        return Err(Error::InvalidSpec(format!("knn k must be odd and >= 1, got {}", params.k)));
    }
    let mut model = KnnModel {
        n_features,
        k: params.k,
        points: train.iter().map(|s| s.present.clone()).collect(),
        malware: train.iter().map(|s| s.label.is_malware()).collect(),
        bits: Vec::new(),
    };
    model.rebuild_index();
    Ok(model)
}
