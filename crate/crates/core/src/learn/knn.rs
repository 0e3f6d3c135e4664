use serde::{Deserialize, Serialize};

use super::{Dataset, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnHyper {
    pub k: usize,
}

impl Default for KnnHyper {
    fn default() -> Self {
        KnnHyper { k: 5 }
    }
}

/// Stored training set; Euclidean distance, distance ties broken by
/// training order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

pub(super) fn fit(data: &Dataset, hyper: &KnnHyper) -> Result<KnnModel> {
    if hyper.k == 0 {
        return Err(Error::InvalidArgument("knn: k must be positive".into()));
    }
    Ok(KnnModel {
        k: hyper.k,
        points: data.examples().iter().map(|e| e.features.clone()).collect(),
        labels: data.examples().iter().map(|e| e.label).collect(),
    })
}

impl KnnModel {
    /// Indices of the `k` nearest stored points.
    pub fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(self.k.min(d.len()));
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of the k nearest neighbours labelled talking.
    pub fn score(&self, x: &[f64]) -> f64 {
        let nn = self.neighbours(x);
        let talking = nn.iter().filter(|&&i| self.labels[i].is_talking()).count();
        talking as f64 / nn.len() as f64
    }

    pub(super) fn check(&self, dim: usize) -> std::result::Result<(), String> {
        if self.k == 0 || self.points.is_empty() || self.points.len() != self.labels.len() {
            return Err("knn: inconsistent stored points".into());
        }
        if self.points.iter().any(|p| p.len() != dim) {
            return Err("knn: stored point dimension mismatch".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::{train, Hyper, ModelKind};
    use super::*;

    #[test]
    fn k1_returns_the_training_label() {
        let mut h = Hyper::default();
        h.knn.k = 1;
        let m = train(ModelKind::Knn, &four_points(), &h, 0).unwrap();
        assert_eq!(m.predict(&[2.0]).unwrap(), Label::Talking);
        assert_eq!(m.predict(&[3.0]).unwrap(), Label::NotTalking);
    }

    #[test]
    fn score_is_talking_fraction() {
        use Label::*;
        let d = dataset(&[
            (&[0.0], Talking),
            (&[0.1], Talking),
            (&[0.2], Talking),
            (&[0.3], Talking),
            (&[0.4], NotTalking),
            (&[5.0], NotTalking),
        ]);
        let m = train(ModelKind::Knn, &d, &Hyper::default(), 0).unwrap();
        assert!((m.score(&[0.0]).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn even_split_is_not_talking() {
        use Label::*;
        let d = dataset(&[(&[-1.0], Talking), (&[1.0], NotTalking)]);
        let mut h = Hyper::default();
        h.knn.k = 2;
        let m = train(ModelKind::Knn, &d, &h, 0).unwrap();
        assert_eq!(m.score(&[0.0]).unwrap(), 0.5);
        assert_eq!(m.predict(&[0.0]).unwrap(), NotTalking);
    }
}
