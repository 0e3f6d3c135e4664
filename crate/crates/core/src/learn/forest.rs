//! Bagged CART trees with per-node feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{CartBuilder, Tree, TreeHyper};
use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestHyper {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn per node; `None` = `⌊√dim⌋` (at least 1).
    pub max_features: Option<usize>,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper {
            trees: 100,
            max_depth: 8,
            min_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Mean of the trees' leaf talking-fractions.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.evaluate(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub(super) fn check(&self, dim: usize) -> std::result::Result<(), String> {
        if self.trees.is_empty() {
            return Err("rforest: no trees".into());
        }
        self.trees.iter().try_for_each(|t| t.check(dim))
    }
}

pub(super) fn fit(data: &Dataset, hyper: &ForestHyper, seed: u64) -> Result<ForestModel> {
    if hyper.trees == 0 || hyper.max_depth == 0 || hyper.max_features == Some(0) {
        return Err(Error::InvalidArgument(
            "rforest: trees, max_depth and max_features must be positive".into(),
        ));
    }
    let rows = data.rows();
    let talking = data.talking();
    let n = rows.len();
    let max_features = hyper
        .max_features
        .unwrap_or_else(|| ((data.dim() as f64).sqrt().floor() as usize).max(1));
    let tree_hyper = TreeHyper {
        max_depth: hyper.max_depth,
        min_leaf: hyper.min_leaf,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..hyper.trees)
        .map(|_| {
            // bootstrap as multiplicities so each distinct sample is sorted once
            let mut weight = vec![0.0; n];
            for _ in 0..n {
                weight[rng.random_range(0..n)] += 1.0;
            }
            let samples: Vec<usize> = (0..n).filter(|&i| weight[i] > 0.0).collect();
            CartBuilder {
                rows: &rows,
                talking: &talking,
                weight: &weight,
                hyper: &tree_hyper,
                max_features: Some(max_features),
                rng: Some(&mut rng),
            }
            .build(samples)
        })
        .collect();
    Ok(ForestModel { trees })
}
