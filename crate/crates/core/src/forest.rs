//! CART trees with Gini splits and a bootstrap-aggregated random forest.
//!
//! Splits are binary thresholds on the encoded grid: `value <= t` goes left.
//! With values in {0, 0.5, 1} the candidates 0.25 and 0.75 cover every
//! order-respecting partition.
//!
//! Tree `t` draws from its own stream seeded with `seed + t`, so a forest is
//! the same whether its trees are grown serially or in parallel.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{require_both_classes, Classifier, TrainError};
use crate::dataset::{EncodedMatrix, Label};
use crate::par::{map_indexed, Execution};

pub const CANDIDATE_THRESHOLDS: [f64; 2] = [0.25, 0.75];

/// Gains at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("gini impurity of an empty node")]
pub struct EmptyNode;

/// `1 - sum p_k^2` over (n_nb, n_b).
pub fn gini(counts: (usize, usize)) -> Result<f64, EmptyNode> {
    let total = counts.0 + counts.1;
    if total == 0 {
        return Err(EmptyNode);
    }
    let n = total as f64;
    let p0 = counts.0 as f64 / n;
    let p1 = counts.1 as f64 / n;
    Ok(1.0 - (p0 * p0 + p1 * p1))
}

fn weighted_gini(counts: (usize, usize)) -> f64 {
    let n = (counts.0 + counts.1) as f64;
    gini(counts).map_or(0.0, |g| g * n)
}

/// Majority label; ties go to Bankrupt.
fn majority(counts: (usize, usize)) -> Label {
    if counts.1 >= counts.0 {
        Label::Bankrupt
    } else {
        Label::NonBankrupt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        label: Label,
        /// (n_nb, n_b) among the training rows reaching this leaf.
        class_counts: (usize, usize),
    },
}

impl TreeNode {
    pub fn leaf(class_counts: (usize, usize)) -> Self {
        TreeNode::Leaf {
            label: majority(class_counts),
            class_counts,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { label, .. } => return *label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    fn check(&self, n_features: usize) -> Result<(), String> {
        match self {
            TreeNode::Leaf {
                label,
                class_counts,
            } => {
                if *label != majority(*class_counts) {
                    return Err("leaf label disagrees with its class counts".into());
                }
                Ok(())
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= n_features || !threshold.is_finite() {
                    return Err(format!("bad split on feature {feature} at {threshold}"));
                }
                left.check(n_features)?;
                right.check(n_features)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Features sampled without replacement at each node.
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            mtry: 6,
            min_leaf: 1,
            max_depth: None,
        }
    }
}

fn class_counts(m: &EncodedMatrix, rows: &[usize]) -> (usize, usize) {
    rows.iter().fold((0, 0), |(nb, b), &i| {
        if m.label(i).is_bankrupt() {
            (nb, b + 1)
        } else {
            (nb + 1, b)
        }
    })
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Grow a tree on `rows` (which may repeat, as in a bootstrap sample).
pub fn grow_tree<R: Rng + ?Sized>(
    m: &EncodedMatrix,
    rows: &[usize],
    cfg: &TreeConfig,
    rng: &mut R,
) -> TreeNode {
    assert!(!rows.is_empty(), "grow_tree needs at least one row");
    grow_node(m, rows, cfg, rng, 0)
}

fn grow_node<R: Rng + ?Sized>(
    m: &EncodedMatrix,
    rows: &[usize],
    cfg: &TreeConfig,
    rng: &mut R,
    depth: usize,
) -> TreeNode {
    let counts = class_counts(m, rows);
    let min_leaf = cfg.min_leaf.max(1);
    let pure = counts.0 == 0 || counts.1 == 0;
    let depth_capped = cfg.max_depth.is_some_and(|d| depth >= d);
    if pure || depth_capped || rows.len() < 2 * min_leaf {
        return TreeNode::leaf(counts);
    }

    let p = m.n_features();
    let mut features = sample(rng, p, cfg.mtry.clamp(1, p)).into_vec();
    features.sort_unstable();

    let parent = weighted_gini(counts);
    let mut best: Option<BestSplit> = None;
    for &feature in &features {
        for &threshold in &CANDIDATE_THRESHOLDS {
            let mut left = (0usize, 0usize);
            for &i in rows {
                if m.row(i)[feature] <= threshold {
                    if m.label(i).is_bankrupt() {
                        left.1 += 1;
                    } else {
                        left.0 += 1;
                    }
                }
            }
            let right = (counts.0 - left.0, counts.1 - left.1);
            let (nl, nr) = (left.0 + left.1, right.0 + right.1);
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let gain = parent - weighted_gini(left) - weighted_gini(right);
            // Earlier (feature, threshold) wins exact ties.
            if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain + MIN_GAIN) {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }

    let Some(split) = best else {
        return TreeNode::leaf(counts);
    };
    debug_assert!(split.gain > 0.0, "split must reduce weighted gini");
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&i| m.row(i)[split.feature] <= split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow_node(m, &left_rows, cfg, rng, depth + 1)),
        right: Box::new(grow_node(m, &right_rows, cfg, rng, depth + 1)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: usize,
    pub bootstrap: bool,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: 2,
            bootstrap: true,
            min_leaf: 1,
            max_depth: None,
        }
    }
}

impl ForestConfig {
    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            mtry: self.mtry,
            min_leaf: self.min_leaf,
            max_depth: self.max_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub n_trees: usize,
    pub mtry: usize,
    pub seed: u64,
    /// Present when bootstrapping left every record out of at least one tree.
    pub oob_error: Option<f64>,
    pub config: ForestConfig,
}

/// RNG for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64))
}

pub fn fit_forest(m: &EncodedMatrix, cfg: &ForestConfig, seed: u64) -> Result<ForestModel, TrainError> {
    fit_forest_with(m, cfg, seed, Execution::default())
}

pub fn fit_forest_with(
    m: &EncodedMatrix,
    cfg: &ForestConfig,
    seed: u64,
    exec: Execution,
) -> Result<ForestModel, TrainError> {
    require_both_classes(m)?;
    if cfg.n_trees == 0 {
        return Err(TrainError::InvalidConfig("n_trees must be at least 1".into()));
    }
    if cfg.mtry == 0 || cfg.mtry > m.n_features() {
        return Err(TrainError::InvalidConfig(format!(
            "mtry must be in 1..={}, got {}",
            m.n_features(),
            cfg.mtry
        )));
    }
    let n = m.n_rows();
    let tree_cfg = cfg.tree_config();

    let grown: Vec<(TreeNode, Vec<bool>)> = map_indexed(cfg.n_trees, exec, |t| {
        let mut rng = tree_rng(seed, t);
        let (rows, in_bag) = if cfg.bootstrap {
            let mut in_bag = vec![false; n];
            let rows: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    in_bag[i] = true;
                    i
                })
                .collect();
            (rows, in_bag)
        } else {
            ((0..n).collect(), vec![true; n])
        };
        (grow_tree(m, &rows, &tree_cfg, &mut rng), in_bag)
    });

    let oob_error = if cfg.bootstrap {
        let mut votes = vec![(0usize, 0usize); n];
        for (tree, in_bag) in &grown {
            for i in (0..n).filter(|&i| !in_bag[i]) {
                match tree.predict(m.row(i)) {
                    Label::Bankrupt => votes[i].1 += 1,
                    Label::NonBankrupt => votes[i].0 += 1,
                }
            }
        }
        if votes.iter().all(|v| v.0 + v.1 > 0) {
            let wrong = votes
                .iter()
                .enumerate()
                .filter(|(i, v)| majority(**v) != m.label(*i))
                .count();
            Some(wrong as f64 / n as f64)
        } else {
            None
        }
    } else {
        None
    };

    Ok(ForestModel {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        n_trees: cfg.n_trees,
        mtry: cfg.mtry,
        seed,
        oob_error,
        config: *cfg,
    })
}

impl ForestModel {
    /// (votes for NB, votes for B).
    pub fn votes(&self, x: &[f64]) -> (usize, usize) {
        self.trees.iter().fold((0, 0), |(nb, b), t| match t.predict(x) {
            Label::Bankrupt => (nb, b + 1),
            Label::NonBankrupt => (nb + 1, b),
        })
    }

    pub fn check_invariants(&self, n_features: usize) -> Result<(), String> {
        if self.trees.len() != self.n_trees {
            return Err(format!(
                "forest declares {} trees but holds {}",
                self.n_trees,
                self.trees.len()
            ));
        }
        if let Some(e) = self.oob_error {
            if !(0.0..=1.0).contains(&e) {
                return Err(format!("oob_error {e} outside [0, 1]"));
            }
        }
        self.trees.iter().try_for_each(|t| t.check(n_features))
    }
}

/// Majority vote over trees; ties go to Bankrupt.
pub fn predict_forest(model: &ForestModel, x: &[f64]) -> Label {
    majority(model.votes(x))
}

impl Classifier for ForestModel {
    fn score(&self, x: &[f64]) -> f64 {
        let (_, b) = self.votes(x);
        b as f64 / self.trees.len() as f64
    }

    fn predict(&self, x: &[f64]) -> Label {
        predict_forest(self, x)
    }
}
