//! Regression forest grown on variance impurity, kept only as far as the
//! impurity bookkeeping MDI needs (plus prediction, for sanity checks).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ImportanceMethod, ImportanceVector};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seed::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Candidate features per split; `None` means `ceil(F / 3)`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 8,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    fn candidates(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| n_features.div_ceil(3))
            .clamp(1, n_features.max(1))
    }
}

/// Population variance of `values`.
pub fn variance_impurity(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("impurity of an empty node"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

/// `I(parent) - N_l/N I(left) - N_r/N I(right)`. `left` and `right` must
/// partition `parent` as multisets.
pub fn impurity_reduction(parent: &[f64], left: &[f64], right: &[f64]) -> Result<f64> {
    let mut joined: Vec<f64> = left.iter().chain(right).copied().collect();
    let mut sorted_parent = parent.to_vec();
    joined.sort_by(f64::total_cmp);
    sorted_parent.sort_by(f64::total_cmp);
    if joined.len() != sorted_parent.len()
        || joined
            .iter()
            .zip(&sorted_parent)
            .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err(Error::PartitionMismatch);
    }
    weighted_reduction(parent, left, right)
}

fn weighted_reduction(parent: &[f64], left: &[f64], right: &[f64]) -> Result<f64> {
    let n = parent.len() as f64;
    let child = |c: &[f64]| -> Result<f64> {
        if c.is_empty() {
            Ok(0.0)
        } else {
            Ok(c.len() as f64 / n * variance_impurity(c)?)
        }
    };
    Ok(variance_impurity(parent)? - child(left)? - child(right)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub impurity_reduction: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub impurity: f64,
    pub n_samples: usize,
    pub mean: f64,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Root is node 0.
    pub nodes: Vec<TreeNode>,
    /// Row indices this tree was grown on (the bootstrap draw).
    pub samples: Vec<usize>,
}

impl RegressionTree {
    pub fn splits(&self) -> impl Iterator<Item = &Split> {
        self.nodes.iter().filter_map(|n| n.split.as_ref())
    }

    /// Sum of impurity reductions per feature.
    pub fn impurity_sums(&self, n_features: usize) -> Vec<f64> {
        let mut sums = vec![0.0; n_features];
        for s in self.splits() {
            sums[s.feature] += s.impurity_reduction;
        }
        sums
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while let Some(s) = &node.split {
            node = if x[s.feature] <= s.threshold {
                &self.nodes[s.left]
            } else {
                &self.nodes[s.right]
            };
        }
        node.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
}

impl RegressionForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Grows `cfg.n_trees` trees; tree `b` uses its own generator seeded from
/// `(seed, b)`, so the forest is identical regardless of thread scheduling.
pub fn fit_regression_forest(x: &FeatureMatrix, y: &[f64], cfg: &ForestConfig, seed: u64) -> Result<RegressionForest> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: y.len(),
        });
    }
    if cfg.n_trees == 0 {
        return Err(Error::InvalidConfig("forest needs at least one tree".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forest training data"));
    }
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, b as u64));
            grow_tree(x, y, cfg, &mut rng)
        })
        .collect();
    Ok(RegressionForest {
        trees,
        n_features: x.n_cols(),
    })
}

/// `|MDI_f| + delta` with `MDI_f = (1/B) sum_b sum_{splits on f} dI`.
pub fn mdi_importance(forest: &RegressionForest) -> ImportanceVector {
    let b = forest.trees.len() as f64;
    let mut totals = vec![0.0; forest.n_features];
    for tree in &forest.trees {
        for (t, s) in totals.iter_mut().zip(tree.impurity_sums(forest.n_features)) {
            *t += s;
        }
    }
    totals.iter_mut().for_each(|t| *t /= b);
    ImportanceVector::from_raw(ImportanceMethod::Mdi, &totals)
}

struct Grower<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    cfg: &'a ForestConfig,
    n_candidates: usize,
    nodes: Vec<TreeNode>,
}

fn grow_tree(x: &FeatureMatrix, y: &[f64], cfg: &ForestConfig, rng: &mut ChaCha8Rng) -> RegressionTree {
    let n = y.len();
    let samples: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut grower = Grower {
        x,
        y,
        cfg,
        n_candidates: cfg.candidates(x.n_cols()),
        nodes: Vec::new(),
    };
    grower.grow(samples.clone(), 0, rng);
    RegressionTree {
        nodes: grower.nodes,
        samples,
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let targets: Vec<f64> = idx.iter().map(|&i| self.y[i]).collect();
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let impurity = variance_impurity(&targets).expect("nodes are never empty");
        let node_id = self.nodes.len();
        self.nodes.push(TreeNode {
            impurity,
            n_samples: idx.len(),
            mean,
            split: None,
        });

        let constant = targets.iter().all(|&v| v == targets[0]);
        if constant || depth >= self.cfg.max_depth || idx.len() < self.cfg.min_samples_split.max(2) {
            return node_id;
        }

        let mut features = sample(rng, self.x.n_cols(), self.n_candidates).into_vec();
        features.sort_unstable();
        let Some(best) = self.best_split(&idx, &features, mean) else {
            return node_id;
        };

        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x.get(i, best.feature) <= best.threshold);
        let left_y: Vec<f64> = left.iter().map(|&i| self.y[i]).collect();
        let right_y: Vec<f64> = right.iter().map(|&i| self.y[i]).collect();
        let reduction = weighted_reduction(&targets, &left_y, &right_y).expect("non-empty parent");
        if !(reduction > 0.0) {
            return node_id;
        }

        let left_id = self.grow(left, depth + 1, rng);
        let right_id = self.grow(right, depth + 1, rng);
        self.nodes[node_id].split = Some(Split {
            feature: best.feature,
            threshold: best.threshold,
            impurity_reduction: reduction,
            left: left_id,
            right: right_id,
        });
        node_id
    }

    /// Highest-gain split over `features` (ascending) and midpoint thresholds
    /// (ascending); earlier candidates win ties.
    fn best_split(&self, idx: &[usize], features: &[usize], mean: f64) -> Option<Candidate> {
        let n = idx.len();
        let total_sq: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let mut best: Option<Candidate> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &f in features {
            order.clear();
            order.extend(idx.iter().map(|&i| (self.x.get(i, f), self.y[i] - mean)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut sum_l, mut sq_l) = (0.0, 0.0);
            let total_sum: f64 = order.iter().map(|p| p.1).sum();
            for k in 0..n - 1 {
                let (xv, yc) = order[k];
                sum_l += yc;
                sq_l += yc * yc;
                let next = order[k + 1].0;
                if next <= xv {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let sum_r = total_sum - sum_l;
                let sq_r = total_sq - sq_l;
                // N * (weighted child impurity), on centred targets
                let child = (sq_l - sum_l * sum_l / nl) + (sq_r - sum_r * sum_r / nr);
                let parent = total_sq - total_sum * total_sum / n as f64;
                let gain = (parent - child) / n as f64;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: xv + (next - xv) / 2.0,
                        gain,
                    });
                }
            }
        }
        best
    }
}
