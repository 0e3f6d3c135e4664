//! Classical classifiers over pooled projection features.
//!
//! Every model exposes a talking-probability `score` in `[0, 1]`, and
//! `predict` is derived from it: talking iff `score > 0.5`, so exact ties go
//! to the negative (not-talking) class.

mod adaboost;
mod forest;
mod gbt;
mod knn;
mod qda;
mod tree;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::provenance::Provenance;

pub use adaboost::{AdaBoostHyper, AdaBoostModel, Stump};
pub use forest::{ForestHyper, ForestModel};
pub use gbt::{GbtHyper, GbtModel};
pub use knn::{KnnHyper, KnnModel};
pub use qda::{QdaClass, QdaHyper, QdaModel};
pub use tree::{gini_gain, Tree, TreeHyper, TreeNode};

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NotTalking,
    Talking,
}

impl Label {
    /// Talking iff strictly above one half.
    pub fn from_score(score: f64) -> Label {
        if score > 0.5 {
            Label::Talking
        } else {
            Label::NotTalking
        }
    }

    pub fn is_talking(self) -> bool {
        self == Label::Talking
    }

    /// `+1` for talking, `−1` otherwise.
    pub fn sign(self) -> f64 {
        if self.is_talking() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Talking => "talking",
            Label::NotTalking => "not_talking",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: Label,
    #[serde(default)]
    pub clip_ref: String,
}

/// A non-empty set of examples of one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    dim: usize,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>) -> Result<Self> {
        let dim = examples
            .first()
            .map(|e| e.features.len())
            .ok_or_else(|| Error::Dataset("empty dataset".into()))?;
        if dim == 0 {
            return Err(Error::Dataset("zero-length feature vectors".into()));
        }
        for (i, e) in examples.iter().enumerate() {
            if e.features.len() != dim {
                return Err(Error::Dimension(format!(
                    "example {i} has {} features, expected {dim}",
                    e.features.len()
                )));
            }
            if e.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!("example {i} has non-finite features")));
            }
        }
        Ok(Dataset { examples, dim })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    pub(crate) fn rows(&self) -> Vec<&[f64]> {
        self.examples.iter().map(|e| e.features.as_slice()).collect()
    }

    pub(crate) fn talking(&self) -> Vec<bool> {
        self.examples.iter().map(|e| e.label.is_talking()).collect()
    }

    /// SHA-256 over dimensionality, feature bit patterns and labels.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for e in &self.examples {
            for v in &e.features {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update([e.label.is_talking() as u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut examples = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            examples.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?);
        }
        Dataset::new(examples)
    }

    pub fn save(&self, path: impl AsRef<Path>, provenance: &Provenance) -> Result<()> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        #[derive(Serialize)]
        struct Line<'a> {
            #[serde(flatten)]
            example: &'a LabeledExample,
            #[serde(flatten)]
            provenance: &'a Provenance,
        }
        for example in &self.examples {
            let line = serde_json::to_string(&Line { example, provenance }).map_err(|e| Error::json(path, e))?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    Dtree,
    Adaboost,
    Rforest,
    Gbt,
    Qda,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Knn,
        ModelKind::Dtree,
        ModelKind::Adaboost,
        ModelKind::Rforest,
        ModelKind::Gbt,
        ModelKind::Qda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::Dtree => "dtree",
            ModelKind::Adaboost => "adaboost",
            ModelKind::Rforest => "rforest",
            ModelKind::Gbt => "gbt",
            ModelKind::Qda => "qda",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind {s:?}")))
    }
}

/// Hyperparameters for every kind; only the trained kind's record is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub knn: KnnHyper,
    pub dtree: TreeHyper,
    pub adaboost: AdaBoostHyper,
    pub rforest: ForestHyper,
    pub gbt: GbtHyper,
    pub qda: QdaHyper,
}

impl Hyper {
    fn for_kind(&self, kind: ModelKind) -> serde_json::Value {
        let v = match kind {
            ModelKind::Knn => serde_json::to_value(&self.knn),
            ModelKind::Dtree => serde_json::to_value(&self.dtree),
            ModelKind::Adaboost => serde_json::to_value(&self.adaboost),
            ModelKind::Rforest => serde_json::to_value(&self.rforest),
            ModelKind::Gbt => serde_json::to_value(&self.gbt),
            ModelKind::Qda => serde_json::to_value(&self.qda),
        };
        v.expect("hyperparameter records serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub hyperparameters: serde_json::Value,
    pub dataset_fingerprint: String,
    pub examples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Knn(KnnModel),
    Dtree(Tree),
    Adaboost(AdaBoostModel),
    Rforest(ForestModel),
    Gbt(GbtModel),
    Qda(QdaModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub dim: usize,
    pub params: ModelParams,
    pub train_meta: TrainMeta,
}

pub fn train(kind: ModelKind, dataset: &Dataset, hyper: &Hyper, seed: u64) -> Result<TrainedModel> {
    if dataset.len() < 2 {
        return Err(Error::Dataset("training needs at least two examples".into()));
    }
    if dataset.count(Label::Talking) == 0 || dataset.count(Label::NotTalking) == 0 {
        return Err(Error::Dataset("training needs both classes present".into()));
    }
    let params = match kind {
        ModelKind::Knn => ModelParams::Knn(knn::fit(dataset, &hyper.knn)?),
        ModelKind::Dtree => ModelParams::Dtree(tree::fit(dataset, &hyper.dtree)?),
        ModelKind::Adaboost => ModelParams::Adaboost(adaboost::fit(dataset, &hyper.adaboost)?),
        ModelKind::Rforest => ModelParams::Rforest(forest::fit(dataset, &hyper.rforest, seed)?),
        ModelKind::Gbt => ModelParams::Gbt(gbt::fit(dataset, &hyper.gbt)?),
        ModelKind::Qda => ModelParams::Qda(qda::fit(dataset, &hyper.qda)?),
    };
    Ok(TrainedModel {
        dim: dataset.dim(),
        params,
        train_meta: TrainMeta {
            seed,
            hyperparameters: hyper.for_kind(kind),
            dataset_fingerprint: dataset.fingerprint(),
            examples: dataset.len(),
        },
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Knn(_) => ModelKind::Knn,
            ModelParams::Dtree(_) => ModelKind::Dtree,
            ModelParams::Adaboost(_) => ModelKind::Adaboost,
            ModelParams::Rforest(_) => ModelKind::Rforest,
            ModelParams::Gbt(_) => ModelKind::Gbt,
            ModelParams::Qda(_) => ModelKind::Qda,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "{} model expects {} features, got {}",
                self.kind(),
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Probability-like score for the talking class.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match &self.params {
            ModelParams::Knn(m) => m.score(x),
            ModelParams::Dtree(m) => m.evaluate(x),
            ModelParams::Adaboost(m) => m.score(x),
            ModelParams::Rforest(m) => m.score(x),
            ModelParams::Gbt(m) => m.score(x),
            ModelParams::Qda(m) => m.score(x),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        self.score(x).map(Label::from_score)
    }

    pub fn save(&self, path: impl AsRef<Path>, provenance: &Provenance) -> Result<()> {
        let path = path.as_ref();
        let params = match &self.params {
            ModelParams::Knn(m) => serde_json::to_value(m),
            ModelParams::Dtree(m) => serde_json::to_value(m),
            ModelParams::Adaboost(m) => serde_json::to_value(m),
            ModelParams::Rforest(m) => serde_json::to_value(m),
            ModelParams::Gbt(m) => serde_json::to_value(m),
            ModelParams::Qda(m) => serde_json::to_value(m),
        }
        .map_err(|e| Error::json(path, e))?;
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.kind(),
            dim: self.dim,
            params,
            train_meta: self.train_meta.clone(),
            provenance: Some(provenance.clone()),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |message: String| Error::Corrupt {
            path: path.to_path_buf(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| corrupt("missing format_version".into()))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        let params = file.params;
        let params = match file.kind {
            ModelKind::Knn => serde_json::from_value(params).map(ModelParams::Knn),
            ModelKind::Dtree => serde_json::from_value(params).map(ModelParams::Dtree),
            ModelKind::Adaboost => serde_json::from_value(params).map(ModelParams::Adaboost),
            ModelKind::Rforest => serde_json::from_value(params).map(ModelParams::Rforest),
            ModelKind::Gbt => serde_json::from_value(params).map(ModelParams::Gbt),
            ModelKind::Qda => serde_json::from_value(params).map(ModelParams::Qda),
        }
        .map_err(|e| corrupt(e.to_string()))?;
        let model = TrainedModel {
            dim: file.dim,
            params,
            train_meta: file.train_meta,
        };
        model.check_consistent().map_err(corrupt)?;
        Ok(model)
    }

    /// Structural checks on deserialized parameters.
    fn check_consistent(&self) -> std::result::Result<(), String> {
        if self.dim == 0 {
            return Err("dim must be positive".into());
        }
        match &self.params {
            ModelParams::Knn(m) => m.check(self.dim),
            ModelParams::Dtree(m) => m.check(self.dim),
            ModelParams::Adaboost(m) => m.check(self.dim),
            ModelParams::Rforest(m) => m.check(self.dim),
            ModelParams::Gbt(m) => m.check(self.dim),
            ModelParams::Qda(m) => m.check(self.dim),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    kind: ModelKind,
    dim: usize,
    params: serde_json::Value,
    train_meta: TrainMeta,
    #[serde(flatten)]
    provenance: Option<Provenance>,
}

/// Numerically stable `1 / (1 + e^{−z})`.
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    #[test]
    fn single_class_rejected() {
        let d = dataset(&[(&[1.0], Label::Talking), (&[2.0], Label::Talking)]);
        for kind in ModelKind::ALL {
            assert!(matches!(train(kind, &d, &Hyper::default(), 0), Err(Error::Dataset(_))));
        }
    }

    #[test]
    fn ragged_dataset_rejected() {
        let r = Dataset::new(vec![
            LabeledExample {
                features: vec![1.0, 2.0],
                label: Label::Talking,
                clip_ref: String::new(),
            },
            LabeledExample {
                features: vec![1.0],
                label: Label::NotTalking,
                clip_ref: String::new(),
            },
        ]);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn dim_mismatch_on_predict() {
        let m = train(ModelKind::Knn, &four_points(), &Hyper::default(), 0).unwrap();
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(Error::Dimension(_))));
        assert!(matches!(m.score(&[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn tie_goes_to_not_talking() {
        assert_eq!(Label::from_score(0.5), Label::NotTalking);
        assert_eq!(Label::from_score(0.500_000_1), Label::Talking);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("lenet".parse::<ModelKind>().is_err());
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
    }
}
