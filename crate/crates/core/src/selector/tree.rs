use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Label, FEATURE_COUNT};

/// Decreases below this are treated as no improvement, and two candidate
/// splits within it of each other as tied (the earlier one wins).
pub const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; values `>= 5` try all of them.
    pub max_features: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 12,
            min_samples_leaf: 2,
            max_features: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        keep: usize,
        drop: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        samples: usize,
        impurity_decrease: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64; FEATURE_COUNT]) -> Label {
        match self {
            TreeNode::Leaf { keep, drop } => {
                if keep >= drop {
                    Label::Keep
                } else {
                    Label::Drop
                }
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn split_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.split_count() + right.split_count(),
        }
    }

    /// Visits every split as `(feature, samples, impurity_decrease)`.
    pub fn for_each_split(&self, f: &mut impl FnMut(usize, usize, f64)) {
        if let TreeNode::Split {
            feature,
            samples,
            impurity_decrease,
            left,
            right,
            ..
        } = self
        {
            f(*feature, *samples, *impurity_decrease);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub samples: usize,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64; FEATURE_COUNT]) -> Label {
        self.root.predict(x)
    }

    /// Per-feature sum of impurity decrease weighted by node sample fraction.
    pub fn raw_importance(&self) -> [f64; FEATURE_COUNT] {
        let mut acc = [0.0; FEATURE_COUNT];
        let total = self.samples.max(1) as f64;
        self.root.for_each_split(&mut |feature, samples, dec| {
            acc[feature] += samples as f64 / total * dec;
        });
        acc
    }

    /// Grows a CART tree on `rows` (feature rows paired with labels). The
    /// feature subset for each split is drawn from `rng` when
    /// `config.max_features < 5`.
    pub fn fit<R: Rng>(rows: &[([f64; FEATURE_COUNT], Label)], config: &TreeConfig, rng: &mut R) -> Self {
        let indices: Vec<usize> = (0..rows.len()).collect();
        DecisionTree {
            root: grow(rows, &indices, 0, config, rng),
            samples: rows.len(),
        }
    }
}

pub fn gini(keep: usize, drop: usize) -> f64 {
    let n = (keep + drop) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let pk = keep as f64 / n;
    let pd = drop as f64 / n;
    1.0 - pk * pk - pd * pd
}

fn counts(rows: &[([f64; FEATURE_COUNT], Label)], idx: &[usize]) -> (usize, usize) {
    let keep = idx.iter().filter(|&&i| rows[i].1 == Label::Keep).count();
    (keep, idx.len() - keep)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn grow<R: Rng>(
    rows: &[([f64; FEATURE_COUNT], Label)],
    idx: &[usize],
    depth: usize,
    config: &TreeConfig,
    rng: &mut R,
) -> TreeNode {
    let (keep, drop) = counts(rows, idx);
    let leaf = TreeNode::Leaf { keep, drop };
    let min_leaf = config.min_samples_leaf.max(1);
    if keep == 0 || drop == 0 || depth >= config.max_depth || idx.len() < 2 * min_leaf {
        return leaf;
    }
    let features: Vec<usize> = if config.max_features >= FEATURE_COUNT || config.max_features == 0 {
        (0..FEATURE_COUNT).collect()
    } else {
        let mut f = sample(rng, FEATURE_COUNT, config.max_features).into_vec();
        f.sort_unstable();
        f
    };

    let parent = gini(keep, drop);
    let n = idx.len();
    let mut best: Option<BestSplit> = None;
    for &feature in &features {
        let mut sorted: Vec<(f64, Label)> = idx.iter().map(|&i| (rows[i].0[feature], rows[i].1)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_keep = 0;
        for pos in 0..n - 1 {
            if sorted[pos].1 == Label::Keep {
                left_keep += 1;
            }
            if sorted[pos].0 == sorted[pos + 1].0 {
                continue;
            }
            let left_n = pos + 1;
            let right_n = n - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let right_keep = keep - left_keep;
            let children = (left_n as f64 * gini(left_keep, left_n - left_keep)
                + right_n as f64 * gini(right_keep, right_n - right_keep))
                / n as f64;
            let decrease = parent - children;
            if best
                .as_ref()
                .is_none_or(|b| decrease > b.decrease + GAIN_TOLERANCE)
            {
                let (lo, hi) = (sorted[pos].0, sorted[pos + 1].0);
                let mid = lo + (hi - lo) / 2.0;
                best = Some(BestSplit {
                    feature,
                    threshold: if mid < hi { mid } else { lo },
                    decrease,
                });
            }
        }
    }
    let Some(best) = best.filter(|b| b.decrease > GAIN_TOLERANCE) else {
        return leaf;
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| rows[i].0[best.feature] <= best.threshold);
    let left = grow(rows, &left_idx, depth + 1, config, rng);
    let right = grow(rows, &right_idx, depth + 1, config, rng);
    TreeNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        samples: n,
        impurity_decrease: best.decrease.max(0.0),
        left: Box::new(left),
        right: Box::new(right),
    }
}
