use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeConfig};
use super::{FeatureVector, Label, LabeledExample, FEATURE_COUNT, FEATURE_NAMES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub seed: u64,
    pub bootstrap: bool,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            tree_count: 50,
            seed: 0,
            bootstrap: true,
            tree: TreeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
    /// Training-row indices each tree was grown on.
    pub bootstrap_indices: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub vote_fraction: f64,
}

impl RandomForest {
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Majority vote; an exact tie keeps the candidate.
    pub fn predict(&self, features: &FeatureVector) -> Result<Prediction> {
        if self.trees.is_empty() {
            return Err(Error::Untrained);
        }
        let x = features.to_array();
        let keep_votes = self
            .trees
            .iter()
            .filter(|t| t.predict(&x) == Label::Keep)
            .count();
        let total = self.trees.len();
        Ok(Prediction {
            label: if 2 * keep_votes >= total {
                Label::Keep
            } else {
                Label::Drop
            },
            vote_fraction: keep_votes as f64 / total as f64,
        })
    }
}

/// Grows `config.tree_count` trees, each on its own bootstrap sample with its
/// own RNG stream so trees can be built in parallel reproducibly.
pub fn train_forest(examples: &[LabeledExample], config: &ForestConfig) -> Result<RandomForest> {
    if config.tree_count == 0 {
        return Err(Error::Config("tree_count must be at least 1".into()));
    }
    let keep = examples.iter().filter(|e| e.label == Label::Keep).count();
    if keep == 0 || keep == examples.len() {
        return Err(Error::DegenerateLabels);
    }
    let rows: Vec<([f64; FEATURE_COUNT], Label)> = examples
        .iter()
        .map(|e| (e.features.to_array(), e.label))
        .collect();
    let n = rows.len();
    let grown: Vec<(DecisionTree, Vec<usize>)> = (0..config.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let indices: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let sample: Vec<_> = indices.iter().map(|&i| rows[i]).collect();
            (DecisionTree::fit(&sample, &config.tree, &mut rng), indices)
        })
        .collect();
    let (trees, bootstrap_indices) = grown.into_iter().unzip();
    Ok(RandomForest {
        config: config.clone(),
        trees,
        bootstrap_indices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub values: [f64; FEATURE_COUNT],
}

impl ImportanceReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    /// Feature names sorted by decreasing importance.
    pub fn ranking(&self) -> Vec<&'static str> {
        let mut idx: Vec<usize> = (0..FEATURE_COUNT).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx.into_iter().map(|i| FEATURE_NAMES[i]).collect()
    }
}

/// Mean over trees of sample-weighted Gini decrease per feature, normalized
/// to sum to one.
pub fn feature_importance(forest: &RandomForest) -> Result<ImportanceReport> {
    if forest.trees.is_empty() {
        return Err(Error::Untrained);
    }
    let mut acc = [0.0; FEATURE_COUNT];
    for tree in &forest.trees {
        for (a, v) in acc.iter_mut().zip(tree.raw_importance()) {
            *a += v;
        }
    }
    let count = forest.trees.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    let total: f64 = acc.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoSplits);
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(ImportanceReport { values: acc })
}

/// Versioned JSON form of a trained forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestCheckpoint {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub forest: RandomForest,
}

impl ForestCheckpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(forest: RandomForest) -> Self {
        ForestCheckpoint {
            format_version: Self::FORMAT_VERSION,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            forest,
        }
    }
}
