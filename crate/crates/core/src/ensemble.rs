//! Top-3 selection by mean metric rank, and the majority-vote ensemble.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{Label, TrainedModel};
use crate::provenance::Provenance;

pub const ENSEMBLE_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model_id: String,
    pub accuracy: f64,
    pub auc: f64,
    pub f1: f64,
}

impl MetricRow {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("accuracy", self.accuracy), ("auc", self.auc), ("f1", self.f1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{}: {name} {v} outside [0, 1]",
                    self.model_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub row: MetricRow,
    /// Ranks on accuracy, AUC and F1; 1 = best, ties share the mean rank.
    pub ranks: [f64; 3],
    pub mean_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: [String; 3],
    /// Every candidate, best first.
    pub ranking: Vec<RankedRow>,
}

/// Fractional ranks, descending (largest value gets rank 1).
pub fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank every model on accuracy, AUC and F1 and pick the three smallest
/// mean ranks. Mean-rank ties go to higher accuracy, then to the
/// lexicographically smaller id.
pub fn select_top3(rows: &[MetricRow]) -> Result<Selection> {
    if rows.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "selection needs at least 3 models, got {}",
            rows.len()
        )));
    }
    let mut ids = BTreeSet::new();
    for r in rows {
        r.validate()?;
        if !ids.insert(r.model_id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate model id {:?}", r.model_id)));
        }
    }
    let cols = [
        descending_ranks(&rows.iter().map(|r| r.accuracy).collect::<Vec<_>>()),
        descending_ranks(&rows.iter().map(|r| r.auc).collect::<Vec<_>>()),
        descending_ranks(&rows.iter().map(|r| r.f1).collect::<Vec<_>>()),
    ];
    let mut ranking: Vec<RankedRow> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let ranks = [cols[0][i], cols[1][i], cols[2][i]];
            RankedRow {
                row: row.clone(),
                ranks,
                // compare sums to avoid division rounding; report the mean
                mean_rank: ranks.iter().sum::<f64>() / 3.0,
            }
        })
        .collect();
    ranking.sort_by(|a, b| {
        let (sa, sb) = (a.ranks.iter().sum::<f64>(), b.ranks.iter().sum::<f64>());
        sa.total_cmp(&sb)
            .then(b.row.accuracy.total_cmp(&a.row.accuracy))
            .then(a.row.model_id.cmp(&b.row.model_id))
    });
    let chosen = [0, 1, 2].map(|i| ranking[i].row.model_id.clone());
    Ok(Selection { chosen, ranking })
}

/// The label held by at least two of three voters.
pub fn majority_vote(labels: [Label; 3]) -> Label {
    let talking = labels.iter().filter(|l| l.is_talking()).count();
    if talking >= 2 {
        Label::Talking
    } else {
        Label::NotTalking
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleVerdict {
    pub label: Label,
    pub member_votes: BTreeMap<String, Label>,
    pub member_scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub model_id: String,
    pub path: PathBuf,
    pub model: TrainedModel,
}

/// Three distinct, dimension-compatible members; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: [EnsembleMember; 3],
    pub selection: Option<Selection>,
}

impl EnsembleModel {
    pub fn new(members: [EnsembleMember; 3], selection: Option<Selection>) -> Result<Self> {
        let ids: BTreeSet<&str> = members.iter().map(|m| m.model_id.as_str()).collect();
        if ids.len() != 3 {
            return Err(Error::InvalidArgument("ensemble members must be distinct".into()));
        }
        let dim = members[0].model.dim;
        if members.iter().any(|m| m.model.dim != dim) {
            return Err(Error::Dimension("ensemble members disagree on feature dimension".into()));
        }
        Ok(EnsembleModel { members, selection })
    }

    pub fn members(&self) -> &[EnsembleMember; 3] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.members[0].model.dim
    }

    pub fn predict(&self, x: &[f64]) -> Result<EnsembleVerdict> {
        let mut votes = [Label::NotTalking; 3];
        let mut member_votes = BTreeMap::new();
        let mut member_scores = BTreeMap::new();
        for (i, m) in self.members.iter().enumerate() {
            let score = m.model.score(x)?;
            votes[i] = Label::from_score(score);
            member_votes.insert(m.model_id.clone(), votes[i]);
            member_scores.insert(m.model_id.clone(), score);
        }
        Ok(EnsembleVerdict {
            label: majority_vote(votes),
            member_votes,
            member_scores,
        })
    }

    /// Write the ensemble file; members are referenced by their paths
    /// relative to the ensemble file's directory where possible.
    pub fn save(&self, path: impl AsRef<Path>, provenance: &Provenance) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let file = EnsembleFile {
            format_version: ENSEMBLE_FORMAT_VERSION,
            members: self
                .members
                .iter()
                .map(|m| MemberRef {
                    model_id: m.model_id.clone(),
                    path: relative_to(&m.path, base),
                })
                .collect(),
            selection_meta: self.selection.clone(),
            provenance: provenance.clone(),
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Provenance)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |message: String| Error::Corrupt {
            path: path.to_path_buf(),
            message,
        };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| corrupt("missing format_version".into()))?;
        if version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: ENSEMBLE_FORMAT_VERSION,
            });
        }
        let file: EnsembleFile = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        let [a, b, c]: [MemberRef; 3] = file
            .members
            .try_into()
            .map_err(|v: Vec<MemberRef>| corrupt(format!("expected 3 members, found {}", v.len())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let load = |r: MemberRef| -> Result<EnsembleMember> {
            let p = base.join(&r.path);
            Ok(EnsembleMember {
                model: TrainedModel::load(&p)?,
                model_id: r.model_id,
                path: p,
            })
        };
        let members = [load(a)?, load(b)?, load(c)?];
        Ok((EnsembleModel::new(members, file.selection_meta)?, file.provenance))
    }
}

fn relative_to(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| {
        std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
    })
}

#[derive(Serialize, Deserialize)]
struct MemberRef {
    model_id: String,
    path: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    format_version: u64,
    members: Vec<MemberRef>,
    selection_meta: Option<Selection>,
    #[serde(flatten)]
    provenance: Provenance,
}
