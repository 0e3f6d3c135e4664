//! Quadratic discriminant analysis with per-class Gaussian fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{logistic, Dataset, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QdaHyper {
    /// Ridge added to each covariance diagonal, relative to the mean
    /// per-feature variance (absolute when that variance is zero).
    pub regularization: f64,
}

impl Default for QdaHyper {
    fn default() -> Self {
        QdaHyper { regularization: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdaClass {
    pub mean: Vec<f64>,
    /// Row-major lower Cholesky factor of the regularized covariance.
    pub chol: Vec<f64>,
    pub log_det: f64,
    pub log_prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdaModel {
    pub not_talking: QdaClass,
    pub talking: QdaClass,
}

impl QdaClass {
    fn fit(rows: &[&[f64]], dim: usize, prior: f64, reg: f64) -> Result<QdaClass> {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v / n;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for r in rows {
            let d = DVector::from_iterator(dim, r.iter().zip(&mean).map(|(v, m)| v - m));
            cov.ger(1.0 / n, &d, &d, 1.0);
        }
        let mean_var = cov.trace() / dim as f64;
        let mut ridge = if mean_var > 0.0 { reg * mean_var } else { reg };
        // escalate only if the requested ridge is numerically insufficient
        let chol = loop {
            let mut c = cov.clone();
            for i in 0..dim {
                c[(i, i)] += ridge;
            }
            if let Some(ch) = c.cholesky() {
                break ch.l();
            }
            if !ridge.is_finite() || ridge > 1e300 {
                return Err(Error::Dataset("qda: covariance is not positive definite".into()));
            }
            ridge = if ridge > 0.0 { ridge * 10.0 } else { 1e-12 };
        };
        let log_det = 2.0 * (0..dim).map(|i| chol[(i, i)].ln()).sum::<f64>();
        let mut flat = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                flat.push(chol[(i, j)]);
            }
        }
        Ok(QdaClass {
            mean,
            chol: flat,
            log_det,
            log_prior: prior.ln(),
        })
    }

    /// Log-likelihood up to the shared `−(d/2)·ln 2π`, plus the log prior.
    pub fn log_joint(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        // forward substitution L z = x − μ
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol[i * d + j] * z[j];
            }
            z[i] = s / self.chol[i * d + i];
        }
        let maha: f64 = z.iter().map(|v| v * v).sum();
        self.log_prior - 0.5 * self.log_det - 0.5 * maha
    }

    fn check(&self, dim: usize) -> std::result::Result<(), String> {
        if self.mean.len() != dim || self.chol.len() != dim * dim {
            return Err("qda: parameter shape mismatch".into());
        }
        if (0..dim).any(|i| !(self.chol[i * dim + i] > 0.0)) {
            return Err("qda: Cholesky factor has a non-positive diagonal".into());
        }
        Ok(())
    }
}

impl QdaModel {
    /// Posterior probability of talking.
    pub fn score(&self, x: &[f64]) -> f64 {
        logistic(self.talking.log_joint(x) - self.not_talking.log_joint(x))
    }

    pub(super) fn check(&self, dim: usize) -> std::result::Result<(), String> {
        self.not_talking.check(dim)?;
        self.talking.check(dim)
    }
}

pub(super) fn fit(data: &Dataset, hyper: &QdaHyper) -> Result<QdaModel> {
    if !(hyper.regularization >= 0.0) {
        return Err(Error::InvalidArgument("qda: regularization must be ≥ 0".into()));
    }
    let n = data.len() as f64;
    let class = |label: Label| {
        let rows: Vec<&[f64]> = data
            .examples()
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.features.as_slice())
            .collect();
        QdaClass::fit(&rows, data.dim(), rows.len() as f64 / n, hyper.regularization)
    };
    Ok(QdaModel {
        not_talking: class(Label::NotTalking)?,
        talking: class(Label::Talking)?,
    })
}
