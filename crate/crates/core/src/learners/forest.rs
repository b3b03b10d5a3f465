//! Random forest of Gini-split decision trees over binary features.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub bootstrap: bool,
    /// Features examined per split; `None` examines all of them.
    #[serde(default)]
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_depth: 12,
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafProbs {
    pub malware: f64,
    pub benign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf(LeafProbs),
    Split {
        feature: u32,
        /// Child taken when the feature is absent.
        absent: usize,
        present: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_for(&self, present: &[u32]) -> LeafProbs {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(p) => return *p,
                Node::Split {
                    feature,
                    absent,
                    present: next,
                } => {
                    at = if present.binary_search(feature).is_ok() {
                        *next
                    } else {
                        *absent
                    };
                }
            }
        }
    }

    pub fn root_feature(&self) -> Option<u32> {
        match self.nodes.first()? {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
    pub params: ForestParams,
}

impl RandomForestModel {
    /// Mean malware probability over trees.
    pub fn score(&self, present: &[u32]) -> f64 {
        self.trees.iter().map(|t| t.leaf_for(present).malware).sum::<f64>() / self.trees.len() as f64
    }
}

/// Gini impurity of a node with `malware` positives among `total`.
pub fn gini(malware: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = malware as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Size-weighted Gini impurity of the split on one feature.
pub fn split_impurity(total: usize, total_malware: usize, present: usize, present_malware: usize) -> f64 {
    let absent = total - present;
    let absent_malware = total_malware - present_malware;
    (present as f64 * gini(present_malware, present) + absent as f64 * gini(absent_malware, absent))
        / total as f64
}

struct TreeBuilder<'a> {
    data: &'a [&'a Sample],
    n_features: usize,
    params: ForestParams,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn leaf(rows: &[usize], data: &[&Sample]) -> Node {
        let m = rows.iter().filter(|&&i| data[i].label.is_malware()).count();
        let p = m as f64 / rows.len().max(1) as f64;
        Node::Leaf(LeafProbs {
            malware: p,
            benign: 1.0 - p,
        })
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut impl Rng) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Self::leaf(&rows, self.data));
        let total = rows.len();
        let total_malware = rows.iter().filter(|&&i| self.data[i].label.is_malware()).count();
        if depth >= self.params.max_depth || total_malware == 0 || total_malware == total {
            return at;
        }

        let mut present = vec![0usize; self.n_features];
        let mut present_malware = vec![0usize; self.n_features];
        for &i in &rows {
            let s = self.data[i];
            for &j in &s.present {
                present[j as usize] += 1;
                if s.label.is_malware() {
                    present_malware[j as usize] += 1;
                }
            }
        }
        let candidates: Vec<usize> = match self.params.max_features {
            Some(m) if m < self.n_features => {
                let mut c = sample_indices(rng, self.n_features, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..self.n_features).collect(),
        };
        let mut best: Option<(f64, usize)> = None;
        for j in candidates {
            if present[j] == 0 || present[j] == total {
                continue;
            }
            let imp = split_impurity(total, total_malware, present[j], present_malware[j]);
            if best.map_or(true, |(b, _)| imp < b) {
                best = Some((imp, j));
            }
        }
        let Some((_, feature)) = best else {
            return at;
        };
        let (with, without): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.data[i].has(feature as u32));
        let absent = self.grow(without, depth + 1, rng);
        let present = self.grow(with, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: feature as u32,
            absent,
            present,
        };
        at
    }
}

pub fn fit_tree(n_features: usize, data: &[&Sample], rows: Vec<usize>, params: ForestParams, seed: u64) -> DecisionTree {
    let mut rng = seed::rng(seed);
    let mut builder = TreeBuilder {
        data,
        n_features,
        params,
        nodes: Vec::new(),
    };
    builder.grow(rows, 0, &mut rng);
    DecisionTree { nodes: builder.nodes }
}

pub fn fit_rf(n_features: usize, train: &[&Sample], params: ForestParams, seed: u64) -> Result<RandomForestModel> {
    super::require_both_classes(train)?;
    if params.trees == 0 {
        return Err(Error::InvalidSpec("random forest needs at least one tree".into()));
    }
    let n = train.len();
    let trees = (0..params.trees)
        .map(|t| {
            let tree_seed = seed::derive_seed(seed, &["tree", &t.to_string()]);
            let rows: Vec<usize> = if params.bootstrap {
                let mut rng = seed::rng(seed::derive_seed(tree_seed, &["bootstrap"]));
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree(n_features, train, rows, params, tree_seed)
        })
        .collect();
    Ok(RandomForestModel {
        n_features,
        trees,
        params,
    })
}
