//! Discrete AdaBoost over depth-1 stumps.

use serde::{Deserialize, Serialize};

use super::tree::midpoint;
use super::{logistic, Dataset};
use crate::error::{Error, Result};

/// Weighted errors at or below this count as a perfect stump.
const PERFECT_ERROR: f64 = 1e-12;

/// Caps the vote of a perfect stump at `½·ln((1 − ε)/ε)` for this ε.
const ALPHA_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaBoostHyper {
    pub rounds: usize,
}

impl Default for AdaBoostHyper {
    fn default() -> Self {
        AdaBoostHyper { rounds: 100 }
    }
}

/// `h(x) = polarity` if `x[feature] > threshold`, else `−polarity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: f64,
    pub alpha: f64,
}

impl Stump {
    pub fn vote(&self, x: &[f64]) -> f64 {
        if x[self.feature] > self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub stumps: Vec<Stump>,
    /// Sample weights after the last round, in training order.
    pub final_weights: Vec<f64>,
}

impl AdaBoostModel {
    /// `Σ αₜ·hₜ(x)`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.stumps.iter().map(|s| s.alpha * s.vote(x)).sum()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        logistic(self.margin(x))
    }

    pub(super) fn check(&self, dim: usize) -> std::result::Result<(), String> {
        for s in &self.stumps {
            if s.feature >= dim || !s.threshold.is_finite() || !s.alpha.is_finite() || s.polarity.abs() != 1.0 {
                return Err("adaboost: malformed stump".into());
            }
        }
        Ok(())
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    polarity: f64,
    error: f64,
}

/// Lowest weighted error over every feature, every midpoint threshold and
/// both polarities. Ties keep the first feature, smallest threshold, and
/// positive polarity.
fn best_stump(rows: &[&[f64]], y: &[f64], w: &[f64], orders: &[Vec<usize>]) -> Option<Candidate> {
    let total: f64 = w.iter().sum();
    // error of "everything predicted +1" = weight of the negatives
    let all_positive: f64 = y.iter().zip(w).filter(|(&yi, _)| yi < 0.0).map(|(_, wi)| wi).sum();
    let mut best: Option<Candidate> = None;
    for (f, order) in orders.iter().enumerate() {
        // polarity +1 error with threshold below everything = all_positive;
        // moving a sample to the ≤ side flips its prediction to −1.
        let mut err_pos = all_positive;
        for k in 0..order.len() - 1 {
            let i = order[k];
            err_pos += if y[i] > 0.0 { w[i] } else { -w[i] };
            let (a, b) = (rows[i][f], rows[order[k + 1]][f]);
            if a == b {
                continue;
            }
            for (polarity, error) in [(1.0, err_pos), (-1.0, total - err_pos)] {
                if best.as_ref().is_none_or(|c| error < c.error - 1e-15) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: midpoint(a, b),
                        polarity,
                        error,
                    });
                }
            }
        }
    }
    best
}

pub(super) fn fit(data: &Dataset, hyper: &AdaBoostHyper) -> Result<AdaBoostModel> {
    if hyper.rounds == 0 {
        return Err(Error::InvalidArgument("adaboost: rounds must be positive".into()));
    }
    let rows = data.rows();
    let n = rows.len();
    let y: Vec<f64> = data.examples().iter().map(|e| e.label.sign()).collect();
    let orders: Vec<Vec<usize>> = (0..data.dim())
        .map(|f| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
            o
        })
        .collect();
    let mut w = vec![1.0 / n as f64; n];
    let mut margins = vec![0.0; n];
    let mut stumps = Vec::new();
    for _ in 0..hyper.rounds {
        let Some(c) = best_stump(&rows, &y, &w, &orders) else {
            break;
        };
        if c.error >= 0.5 - PERFECT_ERROR {
            break;
        }
        let eps = c.error.max(ALPHA_EPSILON);
        let stump = Stump {
            feature: c.feature,
            threshold: c.threshold,
            polarity: c.polarity,
            alpha: 0.5 * ((1.0 - eps) / eps).ln(),
        };
        let votes: Vec<f64> = rows.iter().map(|x| stump.vote(x)).collect();
        let next: Vec<f64> = margins.iter().zip(&votes).map(|(m, v)| m + stump.alpha * v).collect();
        if training_errors(&next, &y) > training_errors(&margins, &y) && !stumps.is_empty() {
            // keep the ensemble's training error monotone
            break;
        }
        margins = next;
        stumps.push(stump);
        if c.error <= PERFECT_ERROR {
            break;
        }
        let alpha = stumps.last().unwrap().alpha;
        for i in 0..n {
            w[i] *= (-alpha * y[i] * votes[i]).exp();
        }
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= z);
    }
    Ok(AdaBoostModel {
        stumps,
        final_weights: w,
    })
}

/// Misclassified count under the prediction rule `logistic(margin) > 0.5`.
/// A tiny positive margin rounds to a score of exactly 0.5, so `margin > 0`
/// is not the same rule in floating point.
fn training_errors(margins: &[f64], y: &[f64]) -> usize {
    margins.iter().zip(y).filter(|(&m, &yi)| (logistic(m) > 0.5) != (yi > 0.0)).count()
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::{train, Hyper, Label, ModelKind, ModelParams};

    #[test]
    fn separable_points_stop_after_one_round() {
        let m = train(ModelKind::Adaboost, &four_points(), &Hyper::default(), 0).unwrap();
        let ModelParams::Adaboost(a) = &m.params else { unreachable!() };
        assert_eq!(a.stumps.len(), 1);
        let s = &a.stumps[0];
        assert_eq!((s.feature, s.threshold, s.polarity), (0, 2.5, -1.0));
        assert_eq!(a.final_weights, vec![0.25; 4]);
        for (x, l) in [(1.0, Label::Talking), (2.0, Label::Talking), (3.0, Label::NotTalking), (4.0, Label::NotTalking)] {
            assert_eq!(m.predict(&[x]).unwrap(), l);
        }
    }

    #[test]
    fn reweighting_matches_hand_computation() {
        use Label::*;
        // best stump x > 1.5 → talking misclassifies only x = 3 (error 1/4)
        let d = dataset(&[(&[1.0], NotTalking), (&[2.0], Talking), (&[3.0], NotTalking), (&[4.0], Talking)]);
        let mut h = Hyper::default();
        h.adaboost.rounds = 1;
        let m = train(ModelKind::Adaboost, &d, &h, 0).unwrap();
        let ModelParams::Adaboost(a) = &m.params else { unreachable!() };
        let s = &a.stumps[0];
        assert_eq!((s.threshold, s.polarity), (1.5, 1.0));
        assert!((s.alpha - 0.5 * 3f64.ln()).abs() < 1e-15);
        // correct samples scale by √(1/3), the wrong one by √3, then normalize
        let expect = [1.0 / 6.0, 1.0 / 6.0, 0.5, 1.0 / 6.0];
        for (a, b) in a.final_weights.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn score_is_logistic_of_margin() {
        let m = train(ModelKind::Adaboost, &four_points(), &Hyper::default(), 0).unwrap();
        let ModelParams::Adaboost(a) = &m.params else { unreachable!() };
        let margin = a.margin(&[1.0]);
        assert!(margin > 0.0);
        assert_eq!(m.score(&[1.0]).unwrap(), 1.0 / (1.0 + (-margin).exp()));
    }

    #[test]
    fn training_error_never_rises_with_more_rounds() {
        use Label::*;
        let d = dataset(&[
            (&[1.0, 4.0], Talking),
            (&[1.0, 1.0], NotTalking),
            (&[0.0, 1.0], NotTalking),
            (&[0.0, 2.0], Talking),
            (&[0.0, 0.0], Talking),
        ]);
        let mut h = Hyper::default();
        let mut previous = usize::MAX;
        for rounds in 1..=18 {
            h.adaboost.rounds = rounds;
            let m = train(ModelKind::Adaboost, &d, &h, 0).unwrap();
            let err = d.examples().iter().filter(|e| m.predict(&e.features).unwrap() != e.label).count();
            assert!(err <= previous, "rounds {rounds}: {err} > {previous}");
            previous = err;
        }
    }
}
