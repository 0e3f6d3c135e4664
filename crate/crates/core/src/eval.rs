//! Metric arithmetic and IoU detection matching.
//!
//! Confusion matrices use the `[tn fp; fn tp]` layout with talking as the
//! positive class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::Label;
use crate::media::BoxAnnotation;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    /// From the printed `[[tn, fp], [fn, tp]]` layout.
    pub fn from_rows(rows: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix {
            tn: rows[0][0],
            fp: rows[0][1],
            fn_: rows[1][0],
            tp: rows[1][1],
        }
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn correct(&self) -> u64 {
        self.tn + self.tp
    }

    fn add(&mut self, pred: Label, truth: Label) {
        match (truth, pred) {
            (Label::NotTalking, Label::NotTalking) => self.tn += 1,
            (Label::NotTalking, Label::Talking) => self.fp += 1,
            (Label::Talking, Label::NotTalking) => self.fn_ += 1,
            (Label::Talking, Label::Talking) => self.tp += 1,
        }
    }
}

pub fn confusion(preds: &[Label], truth: &[Label]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() || preds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "confusion needs equal non-empty inputs, got {} predictions and {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truth) {
        cm.add(p, t);
    }
    Ok(cm)
}

/// Derived metrics; `None` marks an undefined value (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Metrics {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(_), Some(_)) => ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
        _ => None,
    };
    Metrics {
        accuracy: ratio(cm.correct(), cm.total()),
        precision,
        recall,
        f1,
    }
}

/// Integer percent of `num / den`, rounded half up, computed exactly.
pub fn percent_half_up(num: u64, den: u64) -> Option<u64> {
    (den > 0).then(|| ((200 * num as u128 + den as u128) / (2 * den as u128)) as u64)
}

/// `"67%"`-style rendering of a fraction, rounded half up.
pub fn render_percent(fraction: f64) -> String {
    format!("{}%", (fraction * 100.0 + 0.5).floor() as i64)
}

/// Area under the ROC curve as the Mann–Whitney statistic, via rank sums
/// with average ranks for tied scores.
pub fn auc(scores: &[f64], truth: &[Label]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::InvalidArgument("auc: scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("auc: NaN score".into()));
    }
    let n_pos = truth.iter().filter(|l| l.is_talking()).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("auc needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // ranks are 1-based; doubling keeps tie averages integral
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg2 = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| truth[k].is_talking()).count() as u128;
        pos_rank_sum2 += avg2 * pos_in_group;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    let u2 = pos_rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Intersection over union of two pixel boxes.
pub fn iou(a: &BoxAnnotation, b: &BoxAnnotation) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w).saturating_sub(a.x.max(b.x)) as u64;
    let iy = (a.y + a.h).min(b.y + b.h).saturating_sub(a.y.max(b.y)) as u64;
    let inter = ix * iy;
    let union = (a.w * a.h) as u64 + (b.w * b.h) as u64 - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::AddAssign for DetectionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Greedy one-to-one matching within one frame: candidate pairs with
/// IoU ≥ threshold in descending IoU order (ties by ground-truth index,
/// then detection index). Returns matched `(gt, det)` index pairs.
pub fn greedy_match(gt: &[&BoxAnnotation], det: &[&BoxAnnotation], threshold: f64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (g, a) in gt.iter().enumerate() {
        for (d, b) in det.iter().enumerate() {
            let v = iou(a, b);
            if v >= threshold && v > 0.0 {
                pairs.push((v, g, d));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; gt.len()];
    let mut det_used = vec![false; det.len()];
    let mut out = Vec::new();
    for (_, g, d) in pairs {
        if !gt_used[g] && !det_used[d] {
            gt_used[g] = true;
            det_used[d] = true;
            out.push((g, d));
        }
    }
    out
}

/// Per-frame greedy IoU matching, summed over frames.
pub fn match_detections(gt: &[BoxAnnotation], det: &[BoxAnnotation], iou_threshold: f64) -> Result<DetectionCounts> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU threshold {iou_threshold} outside (0, 1]"
        )));
    }
    let mut frames: BTreeMap<usize, (Vec<&BoxAnnotation>, Vec<&BoxAnnotation>)> = BTreeMap::new();
    for b in gt {
        frames.entry(b.frame_index).or_default().0.push(b);
    }
    for b in det {
        frames.entry(b.frame_index).or_default().1.push(b);
    }
    let mut total = DetectionCounts::default();
    for (g, d) in frames.values() {
        let tp = greedy_match(g, d, iou_threshold).len() as u64;
        total += DetectionCounts {
            tp,
            fp: d.len() as u64 - tp,
            fn_: g.len() as u64 - tp,
        };
    }
    Ok(total)
}

/// `2tp / (2tp + fp + fn)`; undefined when no detections or no truths.
pub fn f1_from_counts(c: &DetectionCounts) -> Option<f64> {
    if c.tp + c.fp == 0 || c.tp + c.fn_ == 0 {
        return None;
    }
    Some(2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64)
}

/// A per-video detection summary as tabulated: labelled and detected
/// totals alongside the matched counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionTally {
    pub labeled: u64,
    pub detected: u64,
    pub counts: DetectionCounts,
}

impl DetectionTally {
    /// Mismatches between the totals and the counts; reported, never
    /// reconciled.
    pub fn inconsistencies(&self) -> Vec<String> {
        let c = &self.counts;
        let mut out = Vec::new();
        if self.labeled != c.tp + c.fn_ {
            out.push(format!("labeled {} != tp + fn {}", self.labeled, c.tp + c.fn_));
        }
        if self.detected != c.tp + c.fp {
            out.push(format!("detected {} != tp + fp {}", self.detected, c.tp + c.fp));
        }
        out
    }
}
