//! Dense optical flow by Farnebäck polynomial expansion.
//!
//! Each frame is locally approximated by a quadratic polynomial
//! `f(x) ≈ xᵀAx + bᵀx + c`, fitted by Gaussian-weighted least squares over a
//! `poly_n × poly_n` neighbourhood. A displacement `d` turns the coefficients
//! of the first frame into those of the second (`b₂ = b₁ − 2A·d`), so the flow
//! is recovered from the coefficient fields by a windowed least-squares solve,
//! refined coarse-to-fine over an image pyramid.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{resample_plane, GrayFrame, Rect};

/// Diagonal loading added to the per-pixel 2×2 normal equations.
pub const DIAGONAL_LOADING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub window_size: usize,
    pub iterations_per_level: usize,
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            window_size: 15,
            iterations_per_level: 3,
            poly_n: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("flow params: {m}")));
        if self.pyramid_levels < 1 {
            return bad("pyramid_levels must be >= 1".into());
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return bad(format!("pyramid_scale {} not in (0, 1)", self.pyramid_scale));
        }
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return bad(format!("window_size {} must be odd and >= 3", self.window_size));
        }
        if self.iterations_per_level < 1 {
            return bad("iterations_per_level must be >= 1".into());
        }
        if self.poly_n != 5 && self.poly_n != 7 {
            return bad(format!("poly_n {} must be 5 or 7", self.poly_n));
        }
        if !(self.poly_sigma > 0.0 && self.poly_sigma.is_finite()) {
            return bad(format!("poly_sigma {} must be positive", self.poly_sigma));
        }
        Ok(())
    }

    /// Pyramid level sizes, finest first.
    fn level_sizes(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        (0..self.pyramid_levels)
            .map(|k| {
                let s = self.pyramid_scale.powi(k as i32);
                (
                    ((width as f64 * s).round() as usize).max(1),
                    ((height as f64 * s).round() as usize).max(1),
                )
            })
            .collect()
    }
}

/// Per-pixel displacement between two frames, in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }
}

/// Per-pixel motion magnitude `√(u² + v²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeField {
    pub width: usize,
    pub height: usize,
    pub mag: Vec<f64>,
}

pub fn flow_magnitude(field: &FlowField) -> MagnitudeField {
    MagnitudeField {
        width: field.width,
        height: field.height,
        mag: field
            .u
            .iter()
            .zip(&field.v)
            .map(|(u, v)| (u * u + v * v).sqrt())
            .collect(),
    }
}

/// Index into `[0, n)` with reflect-101 mirroring (`-1 → 1`, `n → n−2`).
#[inline]
pub(crate) fn reflect101(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Correlate every row with `kernel` (centred), reflect-101 borders.
fn correlate_rows(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    let mut line = vec![0.0; w + 2 * r as usize];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, slot) in line.iter_mut().enumerate() {
            *slot = row[reflect101(i as isize - r, w)];
        }
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .zip(&line[x..x + kernel.len()])
                .map(|(k, s)| k * s)
                .sum();
        }
    }
    out
}

/// Correlate every column with `kernel` (centred), reflect-101 borders.
fn correlate_cols(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = reflect101(y as isize + k as isize - r, h);
            let srow = &src[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += kv * s;
            }
        }
    }
    out
}

fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let k: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = ((3.0 * sigma).ceil() as usize).max(1);
    let k = gaussian_kernel(sigma, radius);
    correlate_cols(&correlate_rows(src, w, h, &k), w, h, &k)
}

/// Quadratic coefficients at one pixel: `f(x, y) ≈ a11·x² + 2·a12·x·y +
/// a22·y² + b1·x + b2·y + c`, with `x` along columns and `y` along rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadCoeffs {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

/// Polynomial expansion of a whole frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpansion {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<QuadCoeffs>,
}

impl PolyExpansion {
    pub fn at(&self, x: usize, y: usize) -> QuadCoeffs {
        self.coeffs[y * self.width + x]
    }
}

/// Monomial basis order used by the normal equations.
/// `[1, x, y, x², y², xy]`
fn basis(x: f64, y: f64) -> [f64; 6] {
    [1.0, x, y, x * x, y * y, x * y]
}

/// Gaussian applicability weights over `-half..=half` (unnormalized).
pub fn applicability(poly_n: usize, poly_sigma: f64) -> Vec<f64> {
    let half = (poly_n / 2) as isize;
    (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * poly_sigma * poly_sigma)).exp())
        .collect()
}

/// Weighted least-squares quadratic fit at every pixel, computed with six
/// separable correlations and one constant 6×6 Gram matrix. Borders use
/// reflect-101 padding so the Gram matrix is the same everywhere.
pub fn poly_expansion(frame: &GrayFrame, poly_n: usize, poly_sigma: f64) -> Result<PolyExpansion> {
    if poly_n < 3 || poly_n % 2 == 0 {
        return Err(Error::InvalidArgument(format!("poly_n {poly_n} must be odd and >= 3")));
    }
    if frame.width < poly_n || frame.height < poly_n {
        return Err(Error::Dimension(format!(
            "{}x{} frame is smaller than the {poly_n}x{poly_n} expansion neighbourhood",
            frame.width, frame.height
        )));
    }
    Ok(poly_expand_plane(&frame.pixels, frame.width, frame.height, poly_n, poly_sigma))
}

fn poly_expand_plane(src: &[f64], w: usize, h: usize, poly_n: usize, poly_sigma: f64) -> PolyExpansion {
    let g = applicability(poly_n, poly_sigma);
    let half = (poly_n / 2) as isize;
    let offsets: Vec<f64> = (-half..=half).map(|i| i as f64).collect();
    let k0 = g.clone();
    let k1: Vec<f64> = g.iter().zip(&offsets).map(|(g, t)| g * t).collect();
    let k2: Vec<f64> = g.iter().zip(&offsets).map(|(g, t)| g * t * t).collect();

    // Vertical pass over y, then horizontal over x.
    let r0 = correlate_cols(src, w, h, &k0);
    let r1 = correlate_cols(src, w, h, &k1);
    let r2 = correlate_cols(src, w, h, &k2);
    let h1 = correlate_rows(&r0, w, h, &k0);
    let hx = correlate_rows(&r0, w, h, &k1);
    let hy = correlate_rows(&r1, w, h, &k0);
    let hxx = correlate_rows(&r0, w, h, &k2);
    let hyy = correlate_rows(&r2, w, h, &k0);
    let hxy = correlate_rows(&r1, w, h, &k1);

    let mut gram = Matrix6::<f64>::zeros();
    for (iy, &ty) in offsets.iter().enumerate() {
        for (ix, &tx) in offsets.iter().enumerate() {
            let a = g[iy] * g[ix];
            let phi = basis(tx, ty);
            for i in 0..6 {
                for j in 0..6 {
                    gram[(i, j)] += a * phi[i] * phi[j];
                }
            }
        }
    }
    let inv = gram
        .try_inverse()
        .expect("Gram matrix of a symmetric Gaussian applicability is positive definite");

    let coeffs = (0..w * h)
        .map(|i| {
            let rhs = Vector6::new(h1[i], hx[i], hy[i], hxx[i], hyy[i], hxy[i]);
            let p = inv * rhs;
            QuadCoeffs {
                c: p[0],
                b1: p[1],
                b2: p[2],
                a11: p[3],
                a22: p[4],
                a12: 0.5 * p[5],
            }
        })
        .collect();
    PolyExpansion {
        width: w,
        height: h,
        coeffs,
    }
}

/// One frame prepared for flow estimation: its pyramid levels (finest first)
/// and their polynomial expansions. Reusable across consecutive frame pairs.
#[derive(Debug, Clone)]
pub struct FramePyramid {
    levels: Vec<PolyExpansion>,
}

impl FramePyramid {
    pub fn build(frame: &GrayFrame, params: &FlowParams) -> Result<Self> {
        params.validate()?;
        let sizes = params.level_sizes(frame.width, frame.height);
        let (cw, ch) = *sizes.last().expect("at least one level");
        if cw < params.poly_n || ch < params.poly_n {
            return Err(Error::Dimension(format!(
                "{}x{} frame gives a {cw}x{ch} coarsest level, smaller than poly_n {}",
                frame.width, frame.height, params.poly_n
            )));
        }
        let full = Rect {
            x0: 0,
            y0: 0,
            x1: frame.width,
            y1: frame.height,
        };
        let levels = sizes
            .iter()
            .enumerate()
            .map(|(k, &(lw, lh))| {
                let plane = if k == 0 {
                    frame.pixels.clone()
                } else {
                    let sigma = (1.0 / params.pyramid_scale.powi(k as i32) - 1.0) * 0.5;
                    let blurred = gaussian_blur(&frame.pixels, frame.width, frame.height, sigma);
                    resample_plane(&blurred, frame.width, full, lw, lh)
                };
                poly_expand_plane(&plane, lw, lh, params.poly_n, params.poly_sigma)
            })
            .collect();
        Ok(FramePyramid { levels })
    }

    pub fn width(&self) -> usize {
        self.levels[0].width
    }

    pub fn height(&self) -> usize {
        self.levels[0].height
    }
}

/// Bilinear sample of the coefficient field at a real-valued position,
/// clamped to the frame.
fn sample_coeffs(e: &PolyExpansion, x: f64, y: f64) -> QuadCoeffs {
    let x = x.clamp(0.0, (e.width - 1) as f64);
    let y = y.clamp(0.0, (e.height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(e.width - 1);
    let y1 = (y0 + 1).min(e.height - 1);
    let tx = x - x0 as f64;
    let ty = y - y0 as f64;
    let w00 = (1.0 - tx) * (1.0 - ty);
    let w10 = tx * (1.0 - ty);
    let w01 = (1.0 - tx) * ty;
    let w11 = tx * ty;
    let (p00, p10, p01, p11) = (e.at(x0, y0), e.at(x1, y0), e.at(x0, y1), e.at(x1, y1));
    let mix = |f: fn(&QuadCoeffs) -> f64| w00 * f(&p00) + w10 * f(&p10) + w01 * f(&p01) + w11 * f(&p11);
    QuadCoeffs {
        a11: mix(|q| q.a11),
        a12: mix(|q| q.a12),
        a22: mix(|q| q.a22),
        b1: mix(|q| q.b1),
        b2: mix(|q| q.b2),
        c: 0.0,
    }
}

/// Box average over a `size × size` window, reflect-101 borders, as two
/// running-sum passes.
fn box_filter(src: &[f64], w: usize, h: usize, size: usize) -> Vec<f64> {
    let rows = box_pass(src, w, h, 1, w, size);
    box_pass(&rows, h, w, w, 1, size)
}

/// Window-mean along lines of `len` samples spaced `step` apart; `count`
/// lines start `stride` apart.
fn box_pass(src: &[f64], len: usize, count: usize, step: usize, stride: usize, size: usize) -> Vec<f64> {
    let r = (size / 2) as isize;
    let scale = 1.0 / size as f64;
    let mut out = vec![0.0; src.len()];
    let mut prefix = vec![0.0; len + size];
    for line in 0..count {
        let base = line * stride;
        for j in 0..len + size - 1 {
            let k = reflect101(j as isize - r, len);
            prefix[j + 1] = prefix[j] + src[base + k * step];
        }
        for x in 0..len {
            out[base + x * step] = (prefix[x + size] - prefix[x]) * scale;
        }
    }
    out
}

/// One refinement pass at a single level: returns the new displacement field.
fn update_flow(e1: &PolyExpansion, e2: &PolyExpansion, flow: &FlowField, window: usize) -> FlowField {
    let (w, h) = (e1.width, e1.height);
    let n = w * h;
    let mut g11 = vec![0.0; n];
    let mut g12 = vec![0.0; n];
    let mut g22 = vec![0.0; n];
    let mut h1 = vec![0.0; n];
    let mut h2 = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (du, dv) = (flow.u[i], flow.v[i]);
            let p = e1.coeffs[i];
            let q = sample_coeffs(e2, x as f64 + du, y as f64 + dv);
            let a11 = 0.5 * (p.a11 + q.a11);
            let a12 = 0.5 * (p.a12 + q.a12);
            let a22 = 0.5 * (p.a22 + q.a22);
            let db1 = -0.5 * (q.b1 - p.b1) + a11 * du + a12 * dv;
            let db2 = -0.5 * (q.b2 - p.b2) + a12 * du + a22 * dv;
            // AᵀA and AᵀΔb for symmetric A.
            g11[i] = a11 * a11 + a12 * a12;
            g12[i] = a11 * a12 + a12 * a22;
            g22[i] = a12 * a12 + a22 * a22;
            h1[i] = a11 * db1 + a12 * db2;
            h2[i] = a12 * db1 + a22 * db2;
        }
    }
    let g11 = box_filter(&g11, w, h, window);
    let g12 = box_filter(&g12, w, h, window);
    let g22 = box_filter(&g22, w, h, window);
    let h1 = box_filter(&h1, w, h, window);
    let h2 = box_filter(&h2, w, h, window);

    let mut out = FlowField::zeros(w, h);
    for i in 0..n {
        let a = g11[i] + DIAGONAL_LOADING;
        let b = g12[i];
        let d = g22[i] + DIAGONAL_LOADING;
        let det = a * d - b * b;
        if det.is_normal() && det > 0.0 {
            out.u[i] = (d * h1[i] - b * h2[i]) / det;
            out.v[i] = (a * h2[i] - b * h1[i]) / det;
        }
    }
    out
}

fn upsample_flow(flow: &FlowField, w: usize, h: usize) -> FlowField {
    let rect = Rect {
        x0: 0,
        y0: 0,
        x1: flow.width,
        y1: flow.height,
    };
    let sx = w as f64 / flow.width as f64;
    let sy = h as f64 / flow.height as f64;
    FlowField {
        width: w,
        height: h,
        u: resample_plane(&flow.u, flow.width, rect, w, h)
            .into_iter()
            .map(|u| u * sx)
            .collect(),
        v: resample_plane(&flow.v, flow.width, rect, w, h)
            .into_iter()
            .map(|v| v * sy)
            .collect(),
    }
}

/// Coarse-to-fine flow between two prepared frames.
pub fn flow_between(prev: &FramePyramid, next: &FramePyramid, params: &FlowParams) -> Result<FlowField> {
    if prev.levels.len() != next.levels.len()
        || prev.width() != next.width()
        || prev.height() != next.height()
    {
        return Err(Error::Dimension(format!(
            "frame pyramids differ: {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            next.width(),
            next.height()
        )));
    }
    let mut flow: Option<FlowField> = None;
    for (e1, e2) in prev.levels.iter().zip(&next.levels).rev() {
        let mut current = match flow {
            None => FlowField::zeros(e1.width, e1.height),
            Some(f) => upsample_flow(&f, e1.width, e1.height),
        };
        for _ in 0..params.iterations_per_level {
            current = update_flow(e1, e2, &current, params.window_size);
        }
        flow = Some(current);
    }
    Ok(flow.expect("at least one pyramid level"))
}

/// Dense optical flow from `prev` to `next`: a pixel at `x` in `prev` is
/// found at `x + (u, v)` in `next`.
pub fn farneback_flow(prev: &GrayFrame, next: &GrayFrame, params: &FlowParams) -> Result<FlowField> {
    if (prev.width, prev.height) != (next.width, next.height) {
        return Err(Error::Dimension(format!(
            "frames differ in size: {}x{} vs {}x{}",
            prev.width, prev.height, next.width, next.height
        )));
    }
    let a = FramePyramid::build(prev, params)?;
    let b = FramePyramid::build(next, params)?;
    flow_between(&a, &b, params)
}

/// Flow between every consecutive pair of a frame sequence (`N` frames give
/// `N − 1` fields). Each frame's pyramid is built once.
pub fn flow_sequence(frames: &[GrayFrame], params: &FlowParams) -> Result<Vec<FlowField>> {
    let mut out = Vec::with_capacity(frames.len().saturating_sub(1));
    let mut iter = frames.iter();
    let Some(first) = iter.next() else {
        return Ok(out);
    };
    let mut prev = FramePyramid::build(first, params)?;
    for frame in iter {
        if (frame.width, frame.height) != (prev.width(), prev.height()) {
            return Err(Error::Dimension(format!(
                "sequence frame {}x{} differs from {}x{}",
                frame.width,
                frame.height,
                prev.width(),
                prev.height()
            )));
        }
        let next = FramePyramid::build(frame, params)?;
        out.push(flow_between(&prev, &next, params)?);
        prev = next;
    }
    Ok(out)
}

const FLO_MAGIC: &[u8; 4] = b"FLO1";

/// Debug dump: `FLO1`, width and height as little-endian i32, then
/// interleaved little-endian f32 `(u, v)` pairs in row-major order.
pub fn write_flo(path: &Path, field: &FlowField) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 8 * field.u.len());
    buf.extend_from_slice(FLO_MAGIC);
    buf.extend_from_slice(&(field.width as i32).to_le_bytes());
    buf.extend_from_slice(&(field.height as i32).to_le_bytes());
    for (u, v) in field.u.iter().zip(&field.v) {
        buf.extend_from_slice(&(*u as f32).to_le_bytes());
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let corrupt = |m: &str| Error::Corrupt {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    if buf.len() < 12 || &buf[..4] != FLO_MAGIC {
        return Err(corrupt("missing FLO1 header"));
    }
    let word = |i: usize| [buf[i], buf[i + 1], buf[i + 2], buf[i + 3]];
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 {
        return Err(corrupt("non-positive dimensions"));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width * height;
    if buf.len() != 12 + 8 * n {
        return Err(corrupt("payload length does not match dimensions"));
    }
    let mut field = FlowField::zeros(width, height);
    for i in 0..n {
        field.u[i] = f64::from(f32::from_le_bytes(word(12 + 8 * i)));
        field.v[i] = f64::from(f32::from_le_bytes(word(16 + 8 * i)));
    }
    Ok(field)
}
