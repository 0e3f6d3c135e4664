//! CART classification trees with weighted Gini impurity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeHyper {
    pub max_depth: usize,
    /// Minimum number of training samples on each side of a split.
    pub min_leaf: usize,
}

impl Default for TreeHyper {
    fn default() -> Self {
        TreeHyper {
            max_depth: 8,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Samples with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flat node arena; node 0 is the root. Leaf values are whatever the
/// builder stores: the talking fraction for CART, a raw weight for boosting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Children must point strictly forward so evaluation terminates.
    pub(super) fn check(&self, dim: usize) -> std::result::Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                TreeNode::Leaf { value } if !value.is_finite() => {
                    return Err(format!("node {i}: non-finite leaf"))
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= dim || !threshold.is_finite() {
                        return Err(format!("node {i}: bad split"));
                    }
                    if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(format!("node {i}: bad child index"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Midpoint between adjacent distinct values, nudged down to `a` when
/// rounding would put it on `b` (which must go right).
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

/// Weighted binary Gini impurity `2p(1 − p)`.
fn gini(talking: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = talking / total;
    2.0 * p * (1.0 - p)
}

/// Impurity decrease of splitting (`total`, `talking`) into a left part
/// (`left_total`, `left_talking`) and the remainder.
pub fn gini_gain(total: f64, talking: f64, left_total: f64, left_talking: f64) -> f64 {
    let right_total = total - left_total;
    let right_talking = talking - left_talking;
    gini(talking, total)
        - left_total / total * gini(left_talking, left_total)
        - right_total / total * gini(right_talking, right_total)
}

pub(crate) struct CartBuilder<'a, R> {
    pub rows: &'a [&'a [f64]],
    pub talking: &'a [bool],
    /// Per-sample weight; bootstrap multiplicities for forests.
    pub weight: &'a [f64],
    pub hyper: &'a TreeHyper,
    /// Features examined per node, drawn without replacement; `None` = all.
    pub max_features: Option<usize>,
    pub rng: Option<&'a mut R>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<R: Rng> CartBuilder<'_, R> {
    pub fn build(mut self, samples: Vec<usize>) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        self.grow(&mut tree, samples, 0);
        tree
    }

    fn grow(&mut self, tree: &mut Tree, samples: Vec<usize>, depth: usize) -> usize {
        let id = tree.nodes.len();
        let (total, talking) = self.sums(&samples);
        let value = if total > 0.0 { talking / total } else { 0.5 };
        tree.nodes.push(TreeNode::Leaf { value });
        let pure = talking <= 0.0 || talking >= total;
        if depth >= self.hyper.max_depth || pure || samples.len() < 2 * self.hyper.min_leaf.max(1) {
            return id;
        }
        let Some(choice) = self.best_split(&samples, total, talking) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.rows[i][choice.feature] <= choice.threshold);
        let left = self.grow(tree, l, depth + 1);
        let right = self.grow(tree, r, depth + 1);
        tree.nodes[id] = TreeNode::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        id
    }

    fn sums(&self, samples: &[usize]) -> (f64, f64) {
        samples.iter().fold((0.0, 0.0), |(w, t), &i| {
            let wi = self.weight[i];
            (w + wi, if self.talking[i] { t + wi } else { t })
        })
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let dim = self.rows[0].len();
        match (self.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < dim => {
                let mut all: Vec<usize> = (0..dim).collect();
                for i in 0..m {
                    let j = rng.random_range(i..dim);
                    all.swap(i, j);
                }
                all.truncate(m);
                all.sort_unstable();
                all
            }
            _ => (0..dim).collect(),
        }
    }

    /// Highest positive Gini gain; ties keep the first feature, then the
    /// smallest threshold.
    fn best_split(&mut self, samples: &[usize], total: f64, talking: f64) -> Option<SplitChoice> {
        let min_leaf = self.hyper.min_leaf.max(1);
        let mut best: Option<SplitChoice> = None;
        let mut order = samples.to_vec();
        for f in self.candidate_features() {
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let (mut lw, mut lt) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                lw += self.weight[i];
                if self.talking[i] {
                    lt += self.weight[i];
                }
                let (a, b) = (self.rows[i][f], self.rows[order[k + 1]][f]);
                if a == b || k + 1 < min_leaf || order.len() - k - 1 < min_leaf {
                    continue;
                }
                let gain = gini_gain(total, talking, lw, lt);
                if gain > 1e-12 && best.as_ref().is_none_or(|c| gain > c.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold: midpoint(a, b),
                        gain,
                    });
                }
            }
        }
        best
    }
}

pub(super) fn fit(data: &Dataset, hyper: &TreeHyper) -> Result<Tree> {
    if hyper.max_depth == 0 {
        return Err(Error::InvalidArgument("dtree: max_depth must be positive".into()));
    }
    let rows = data.rows();
    let talking = data.talking();
    let weight = vec![1.0; rows.len()];
    let builder: CartBuilder<'_, rand_chacha::ChaCha8Rng> = CartBuilder {
        rows: &rows,
        talking: &talking,
        weight: &weight,
        hyper,
        max_features: None,
        rng: None,
    };
    Ok(builder.build((0..rows.len()).collect()))
}
