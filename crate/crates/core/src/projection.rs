//! Log-magnitude projection images and pooled feature vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::MagnitudeField;
use crate::media::write_pgm16;
use crate::provenance::Provenance;

/// Added to every flow magnitude before the logarithm.
pub const MAGNITUDE_FLOOR: f64 = 0.01;

pub const DEFAULT_GRID: (usize, usize) = (20, 20);

/// `p(i, j) = Σ_f ln(mag_f(i, j) + 0.01)` over all flow fields of a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionImage {
    pub width: usize,
    pub height: usize,
    /// Number of flow fields summed.
    pub fields: usize,
    pub p: Vec<f64>,
}

impl ProjectionImage {
    /// Value every pixel takes when no field shows motion there.
    pub fn floor(&self) -> f64 {
        self.fields as f64 * MAGNITUDE_FLOOR.ln()
    }
}

pub fn project_log_magnitude(mags: &[MagnitudeField]) -> Result<ProjectionImage> {
    let first = mags
        .first()
        .ok_or_else(|| Error::InvalidArgument("projection needs at least one flow field".into()))?;
    let (w, h) = (first.width, first.height);
    let mut p = vec![0.0; w * h];
    for (k, m) in mags.iter().enumerate() {
        if (m.width, m.height) != (w, h) {
            return Err(Error::Dimension(format!(
                "field {k} is {}x{}, expected {w}x{h}",
                m.width, m.height
            )));
        }
        for (acc, &v) in p.iter_mut().zip(&m.mag) {
            *acc += (v + MAGNITUDE_FLOOR).ln();
        }
    }
    Ok(ProjectionImage {
        width: w,
        height: h,
        fields: mags.len(),
        p,
    })
}

/// Pooled, min-max normalized projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub grid: (usize, usize),
}

/// Cell `i` of `n` over a length-`len` axis: `[⌊i·len/n⌋, ⌈(i+1)·len/n⌉)`.
fn cell_bounds(i: usize, n: usize, len: usize) -> (usize, usize) {
    (i * len / n, ((i + 1) * len).div_ceil(n))
}

/// Average-pool over a `grid_w × grid_h` grid, then min-max normalize to
/// `[0, 1]`. A constant pooled vector maps to all 0.5.
pub fn pool_features(proj: &ProjectionImage, grid_w: usize, grid_h: usize) -> Result<FeatureVector> {
    if grid_w == 0 || grid_h == 0 || grid_w > proj.width || grid_h > proj.height {
        return Err(Error::InvalidArgument(format!(
            "{grid_w}x{grid_h} grid over a {}x{} projection",
            proj.width, proj.height
        )));
    }
    let mut pooled = Vec::with_capacity(grid_w * grid_h);
    for gy in 0..grid_h {
        let (y0, y1) = cell_bounds(gy, grid_h, proj.height);
        for gx in 0..grid_w {
            let (x0, x1) = cell_bounds(gx, grid_w, proj.width);
            let mut sum = 0.0;
            for y in y0..y1 {
                sum += proj.p[y * proj.width + x0..y * proj.width + x1].iter().sum::<f64>();
            }
            pooled.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi > lo {
        pooled.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; pooled.len()]
    };
    Ok(FeatureVector {
        values,
        grid: (grid_w, grid_h),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectionSidecar {
    /// `p = offset + sample / scale`
    pub offset: f64,
    pub scale: f64,
    pub width: usize,
    pub height: usize,
    pub fields: usize,
    #[serde(flatten)]
    pub provenance: Provenance,
}

/// Write a projection as a 16-bit PGM spanning its value range, plus a JSON
/// sidecar with the affine map back to nats.
pub fn write_projection(pgm_path: &Path, proj: &ProjectionImage, provenance: &Provenance) -> Result<ProjectionSidecar> {
    let lo = proj.p.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = proj.p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { 65535.0 / (hi - lo) } else { 1.0 };
    let samples: Vec<u16> = proj
        .p
        .iter()
        .map(|v| ((v - lo) * scale).round().clamp(0.0, 65535.0) as u16)
        .collect();
    write_pgm16(pgm_path, proj.width, proj.height, &samples)?;
    let sidecar = ProjectionSidecar {
        offset: lo,
        scale,
        width: proj.width,
        height: proj.height,
        fields: proj.fields,
        provenance: provenance.clone(),
    };
    let json_path = pgm_path.with_extension("json");
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&json_path, e))?;
    std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    Ok(sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(w: usize, h: usize, mag: Vec<f64>) -> MagnitudeField {
        MagnitudeField {
            width: w,
            height: h,
            mag,
        }
    }

    #[test]
    fn all_zero_fields_sit_at_the_floor() {
        let mags = vec![field(2, 2, vec![0.0; 4]); 3];
        let p = project_log_magnitude(&mags).unwrap();
        for v in &p.p {
            assert!((v - 3.0 * 0.01f64.ln()).abs() < 1e-12);
            assert!((v + 13.815_510_557_964_274).abs() < 1e-12);
        }
        assert_eq!(p.floor(), 3.0 * 0.01f64.ln());
    }

    #[test]
    fn unit_argument_gives_zero() {
        let p = project_log_magnitude(&[field(1, 1, vec![0.99])]).unwrap();
        assert!(p.p[0].abs() < 1e-15);
        let p = project_log_magnitude(&[field(1, 1, vec![1.99]), field(1, 1, vec![0.99])]).unwrap();
        assert!((p.p[0] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_fields_rejected() {
        let err = project_log_magnitude(&[field(2, 2, vec![0.0; 4]), field(2, 1, vec![0.0; 2])]);
        assert!(matches!(err, Err(Error::Dimension(_))));
        assert!(project_log_magnitude(&[]).is_err());
    }

    #[test]
    fn constant_projection_pools_to_half() {
        let p = ProjectionImage {
            width: 100,
            height: 100,
            fields: 1,
            p: vec![-3.0; 10_000],
        };
        let f = pool_features(&p, 20, 20).unwrap();
        assert_eq!(f.values.len(), 400);
        assert!(f.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn bright_patch_gives_one_maximal_feature() {
        let mut p = ProjectionImage {
            width: 100,
            height: 100,
            fields: 1,
            p: vec![-4.6; 10_000],
        };
        for y in 35..40 {
            for x in 60..65 {
                p.p[y * 100 + x] = 1.0;
            }
        }
        let f = pool_features(&p, 20, 20).unwrap();
        let ones: Vec<_> = (0..400).filter(|&i| f.values[i] == 1.0).collect();
        assert_eq!(ones, vec![7 * 20 + 12]);
    }

    #[test]
    fn full_grid_is_plain_normalization() {
        let p = ProjectionImage {
            width: 10,
            height: 10,
            fields: 2,
            p: (0..100).map(|i| (i as f64 * 0.37).sin()).collect(),
        };
        let f = pool_features(&p, 10, 10).unwrap();
        let lo = p.p.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p.p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in f.values.iter().zip(&p.p) {
            assert!((a - (b - lo) / (hi - lo)).abs() < 1e-12);
        }
    }

    #[test]
    fn uneven_grid_tiles_with_ceiling_cells() {
        assert_eq!(cell_bounds(0, 3, 10), (0, 4));
        assert_eq!(cell_bounds(1, 3, 10), (3, 7));
        assert_eq!(cell_bounds(2, 3, 10), (6, 10));
        let p = ProjectionImage {
            width: 10,
            height: 7,
            fields: 1,
            p: (0..70).map(|i| i as f64).collect(),
        };
        let f = pool_features(&p, 3, 3).unwrap();
        assert_eq!(f.values.len(), 9);
        assert!(f.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(pool_features(&p, 11, 3).is_err());
    }
}
