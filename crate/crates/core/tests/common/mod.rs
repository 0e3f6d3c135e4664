//! Test-only synthetic image generators, independent of the library's own
//! fixture code.
#![allow(dead_code)]

pub mod oracles;
pub mod props;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use talkdet::media::GrayFrame;

/// Uniform noise blurred with a periodic Gaussian, rescaled to [0, 1].
pub fn smooth_texture(w: usize, h: usize, sigma: f64, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r)
                .map(|d| k[(d + r) as usize] * noise[y * w + wrap(x as isize + d, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r)
                .map(|d| k[(d + r) as usize] * tmp[wrap(y as isize + d, h) * w + x])
                .sum();
        }
    }
    let lo = out.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    GrayFrame::new(w, h, out.into_iter().map(|v| (v - lo) / (hi - lo)).collect()).unwrap()
}

/// `out(x, y) = src(x − dx, y − dy)` with wraparound: content moves by (dx, dy).
pub fn shift_wrap(src: &GrayFrame, dx: isize, dy: isize) -> GrayFrame {
    let (w, h) = (src.width, src.height);
    GrayFrame::from_fn(w, h, |x, y| {
        let sx = (x as isize - dx).rem_euclid(w as isize) as usize;
        let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
        src.get(sx, sy)
    })
}

/// Periodic bilinear sample.
pub fn sample_wrap(src: &GrayFrame, x: f64, y: f64) -> f64 {
    let (w, h) = (src.width as isize, src.height as isize);
    let x0 = x.floor();
    let y0 = y.floor();
    let tx = x - x0;
    let ty = y - y0;
    let at = |xi: isize, yi: isize| src.get(xi.rem_euclid(w) as usize, yi.rem_euclid(h) as usize);
    let (xi, yi) = (x0 as isize, y0 as isize);
    (1.0 - ty) * ((1.0 - tx) * at(xi, yi) + tx * at(xi + 1, yi))
        + ty * ((1.0 - tx) * at(xi, yi + 1) + tx * at(xi + 1, yi + 1))
}

/// Rotate content by `degrees` about the image centre. Returns the rotated
/// frame and the analytic displacement of each source pixel.
pub fn rotate_about_center(
    src: &GrayFrame,
    degrees: f64,
) -> (GrayFrame, impl Fn(usize, usize) -> (f64, f64)) {
    let th = degrees.to_radians();
    let (c, s) = (th.cos(), th.sin());
    let cx = (src.width as f64 - 1.0) / 2.0;
    let cy = (src.height as f64 - 1.0) / 2.0;
    let next = GrayFrame::from_fn(src.width, src.height, |x, y| {
        let (qx, qy) = (x as f64 - cx, y as f64 - cy);
        // inverse rotation
        let px = c * qx + s * qy + cx;
        let py = -s * qx + c * qy + cy;
        sample_wrap(src, px, py)
    });
    let truth = move |x: usize, y: usize| {
        let (px, py) = (x as f64 - cx, y as f64 - cy);
        let rx = c * px - s * py;
        let ry = s * px + c * py;
        (rx - px, ry - py)
    };
    (next, truth)
}
