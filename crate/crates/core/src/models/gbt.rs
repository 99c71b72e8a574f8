//! Gradient-boosted regression trees under squared loss.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum number of training rows accepted by [`fit_gbt`].
pub const MIN_TRAINING_ROWS: usize = 50;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of rows drawn without replacement for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 200,
            learning_rate: 0.05,
            max_depth: 3,
            min_samples_leaf: 5,
            subsample: 0.8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub feature_names: Vec<String>,
    pub base_prediction: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeNode>,
    /// Full-sample training MSE after each round.
    pub train_loss: Vec<f64>,
    pub params: GbtParams,
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    min_leaf: usize,
    max_depth: usize,
}

impl Grower<'_> {
    fn grow(&self, samples: &mut [usize], residual: &[f64], depth: usize) -> TreeNode {
        let n = samples.len();
        let sum: f64 = samples.iter().map(|&i| residual[i]).sum();
        let leaf = TreeNode::Leaf { value: sum / n as f64 };
        if depth >= self.max_depth || n < 2 * self.min_leaf {
            return leaf;
        }
        let parent = sum * sum / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let n_features = self.x.first().map_or(0, Vec::len);
        for f in 0..n_features {
            samples.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += residual[samples[k]];
                let (lo, hi) = (self.x[samples[k]][f], self.x[samples[k + 1]][f]);
                let n_left = k + 1;
                if lo == hi || n_left < self.min_leaf || n - n_left < self.min_leaf {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64 - parent;
                if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (lo + hi)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return leaf;
        };
        samples.sort_by(|&a, &b| {
            (self.x[a][feature] > threshold).cmp(&(self.x[b][feature] > threshold)).then(a.cmp(&b))
        });
        let split = samples.iter().take_while(|&&i| self.x[i][feature] <= threshold).count();
        let (l, r) = samples.split_at_mut(split);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.grow(l, residual, depth + 1)),
            right: Box::new(self.grow(r, residual, depth + 1)),
        }
    }
}

pub fn fit_gbt(x: &[Vec<f64>], y: &[f64], feature_names: Vec<String>, params: &GbtParams) -> Result<GbtModel> {
    let n = y.len();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if n < MIN_TRAINING_ROWS {
        return Err(Error::InsufficientData { needed: MIN_TRAINING_ROWS, got: n });
    }
    let p = feature_names.len();
    if p == 0 {
        return Err(Error::InvalidInput("empty feature set".into()));
    }
    if let Some(r) = x.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, got: r.len() });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training value".into()));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) || params.learning_rate <= 0.0 || params.min_samples_leaf == 0 {
        return Err(Error::InvalidInput("invalid boosting parameters".into()));
    }

    let base = y.iter().sum::<f64>() / n as f64;
    let mut fitted = alloc::vec![base; n];
    let mut residual = alloc::vec![0.0; n];
    let grower = Grower { x, min_leaf: params.min_samples_leaf, max_depth: params.max_depth };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let draw = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut train_loss = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        for i in 0..n {
            residual[i] = y[i] - fitted[i];
        }
        let mut sample: Vec<usize> = if draw < n {
            order.shuffle(&mut rng);
            order[..draw].to_vec()
        } else {
            (0..n).collect()
        };
        let tree = grower.grow(&mut sample, &residual, 0);
        for i in 0..n {
            fitted[i] += params.learning_rate * tree.predict(&x[i]);
        }
        train_loss.push(y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64);
        trees.push(tree);
    }
    Ok(GbtModel {
        feature_names,
        base_prediction: base,
        learning_rate: params.learning_rate,
        trees,
        train_loss,
        params: params.clone(),
    })
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base_prediction + self.trees.iter().map(|t| self.learning_rate * t.predict(row)).sum::<f64>()
    }
}
