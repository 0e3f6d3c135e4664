//! Logistic-loss gradient boosting with second-order, L2-regularized trees.

use serde::{Deserialize, Serialize};

use super::tree::{midpoint, Tree, TreeNode};
use super::{logistic, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtHyper {
    pub trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum summed hessian on each side of a split.
    pub min_child_weight: f64,
}

impl Default for GbtHyper {
    fn default() -> Self {
        GbtHyper {
            trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

/// Leaf values are already shrunk by the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Log-odds of the training prior.
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.evaluate(x)).sum::<f64>()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        logistic(self.raw(x))
    }

    pub(super) fn check(&self, dim: usize) -> std::result::Result<(), String> {
        if !self.base_score.is_finite() {
            return Err("gbt: non-finite base score".into());
        }
        self.trees.iter().try_for_each(|t| t.check(dim))
    }
}

struct Builder<'a> {
    rows: &'a [&'a [f64]],
    g: &'a [f64],
    h: &'a [f64],
    hyper: &'a GbtHyper,
}

impl Builder<'_> {
    fn objective(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.hyper.lambda)
    }

    fn grow(&self, tree: &mut Tree, samples: Vec<usize>, depth: usize) -> usize {
        let id = tree.nodes.len();
        let (g, h) = samples.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]));
        tree.nodes.push(TreeNode::Leaf {
            value: -g / (h + self.hyper.lambda) * self.hyper.learning_rate,
        });
        if depth >= self.hyper.max_depth || samples.len() < 2 {
            return id;
        }
        let parent = self.objective(g, h);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = samples.clone();
        for f in 0..self.rows[0].len() {
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                gl += self.g[i];
                hl += self.h[i];
                let (a, b) = (self.rows[i][f], self.rows[order[k + 1]][f]);
                let hr = h - hl;
                if a == b || hl < self.hyper.min_child_weight || hr < self.hyper.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (self.objective(gl, hl) + self.objective(g - gl, hr) - parent);
                if gain > 1e-12 && best.is_none_or(|(_, _, bg)| gain > bg) {
                    best = Some((f, midpoint(a, b), gain));
                }
            }
        }
        let Some((feature, threshold, _)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&i| self.rows[i][feature] <= threshold);
        let left = self.grow(tree, l, depth + 1);
        let right = self.grow(tree, r, depth + 1);
        tree.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

pub(super) fn fit(data: &Dataset, hyper: &GbtHyper) -> Result<GbtModel> {
    if hyper.trees == 0
        || hyper.max_depth == 0
        || !(hyper.learning_rate > 0.0)
        || !(hyper.lambda >= 0.0)
        || !(hyper.min_child_weight >= 0.0)
    {
        return Err(Error::InvalidArgument(
            "gbt: trees and max_depth must be positive, learning_rate > 0, lambda and min_child_weight ≥ 0".into(),
        ));
    }
    let rows = data.rows();
    let y: Vec<f64> = data.examples().iter().map(|e| if e.label.is_talking() { 1.0 } else { 0.0 }).collect();
    let prior = y.iter().sum::<f64>() / y.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut raw = vec![base_score; rows.len()];
    let mut trees = Vec::with_capacity(hyper.trees);
    for _ in 0..hyper.trees {
        let p: Vec<f64> = raw.iter().map(|&r| logistic(r)).collect();
        let g: Vec<f64> = p.iter().zip(&y).map(|(p, y)| p - y).collect();
        let h: Vec<f64> = p.iter().map(|p| (p * (1.0 - p)).max(1e-16)).collect();
        let builder = Builder {
            rows: &rows,
            g: &g,
            h: &h,
            hyper,
        };
        let mut tree = Tree { nodes: Vec::new() };
        builder.grow(&mut tree, (0..rows.len()).collect(), 0);
        for (r, x) in raw.iter_mut().zip(&rows) {
            *r += tree.evaluate(x);
        }
        trees.push(tree);
    }
    Ok(GbtModel { base_score, trees })
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::{train, Hyper, Label, ModelKind, ModelParams};

    #[test]
    fn prior_sets_the_base_score() {
        use Label::*;
        let d = dataset(&[(&[0.0], Talking), (&[1.0], NotTalking), (&[2.0], NotTalking), (&[3.0], NotTalking)]);
        let mut h = Hyper::default();
        h.gbt.trees = 1;
        let m = train(ModelKind::Gbt, &d, &h, 0).unwrap();
        let ModelParams::Gbt(g) = &m.params else { unreachable!() };
        assert!((g.base_score - (1.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn leaf_weight_is_shrunk_newton_step() {
        // one constant feature: no split possible, single leaf −G/(H+λ)·η
        use Label::*;
        let d = dataset(&[(&[1.0], Talking), (&[1.0], Talking), (&[1.0], Talking), (&[1.0], NotTalking)]);
        let mut h = Hyper::default();
        h.gbt.trees = 1;
        let m = train(ModelKind::Gbt, &d, &h, 0).unwrap();
        let ModelParams::Gbt(g) = &m.params else { unreachable!() };
        // at the prior p = 3/4 the gradients sum to zero
        assert!(g.trees[0].evaluate(&[1.0]).abs() < 1e-15);
    }

    #[test]
    fn separable_points_are_learned() {
        let m = train(ModelKind::Gbt, &four_points(), &Hyper::default(), 0);
        // min_child_weight 1 needs ≥ 4 samples per side at p(1−p) = 1/4
        let m = m.unwrap();
        assert_eq!(m.predict(&[2.0]).unwrap(), m.predict(&[3.0]).unwrap());
        let mut h = Hyper::default();
        h.gbt.min_child_weight = 0.0;
        let m = train(ModelKind::Gbt, &four_points(), &h, 0).unwrap();
        assert_eq!(m.predict(&[1.0]).unwrap(), Label::Talking);
        assert_eq!(m.predict(&[4.0]).unwrap(), Label::NotTalking);
    }
}
