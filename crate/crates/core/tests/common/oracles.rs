//! Brute-force reference implementations the library is checked against.

use talkdet::eval::iou;
use talkdet::learn::{gini_gain, Dataset};
use talkdet::media::BoxAnnotation;
use talkdet::Label;

/// Exhaustive root split: every feature × every midpoint between distinct
/// values, gains from raw counts, first maximum in (feature, threshold)
/// order.
pub fn exhaustive_root(data: &Dataset, min_leaf: usize) -> Option<(usize, f64)> {
    let ex = data.examples();
    let total = ex.len() as f64;
    let talking = ex.iter().filter(|e| e.label == Label::Talking).count() as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..data.dim() {
        let mut values: Vec<f64> = ex.iter().map(|e| e.features[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let left: Vec<_> = ex.iter().filter(|e| e.features[f] <= t).collect();
            let n_left = left.len();
            if n_left < min_leaf || ex.len() - n_left < min_leaf {
                continue;
            }
            let lt = left.iter().filter(|e| e.label == Label::Talking).count() as f64;
            let gain = gini_gain(total, talking, n_left as f64, lt);
            if gain > 1e-12 && best.is_none_or(|(_, _, g)| gain > g) {
                best = Some((f, t, gain));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

/// AUC by explicit double loop over all (positive, negative) pairs.
pub fn pair_count_auc(scores: &[f64], truth: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &p) in scores.iter().enumerate() {
        if !truth[i].is_talking() {
            continue;
        }
        for (j, &n) in scores.iter().enumerate() {
            if truth[j].is_talking() {
                continue;
            }
            pairs += 1.0;
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

/// Maximum-cardinality bipartite matching (augmenting paths) over pairs
/// with IoU ≥ threshold: the best TP count any assignment can reach.
pub fn optimal_tp(gt: &[BoxAnnotation], det: &[BoxAnnotation], threshold: f64) -> usize {
    let adj: Vec<Vec<usize>> = gt
        .iter()
        .map(|g| {
            (0..det.len())
                .filter(|&d| {
                    let v = iou(g, &det[d]);
                    v >= threshold && v > 0.0
                })
                .collect()
        })
        .collect();
    fn augment(g: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &d in &adj[g] {
            if seen[d] {
                continue;
            }
            seen[d] = true;
            if owner[d].is_none_or(|o| augment(o, adj, seen, owner)) {
                owner[d] = Some(g);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; det.len()];
    (0..gt.len())
        .filter(|&g| augment(g, &adj, &mut vec![false; det.len()], &mut owner))
        .count()
}
