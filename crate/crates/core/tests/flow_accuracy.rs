//! Flow accuracy against known synthetic motion, plus the polynomial
//! expansion checked against a dense per-pixel normal-equations solve.

mod common;

use common::{rotate_about_center, shift_wrap, smooth_texture};
use talkdet::flow::{
    applicability, farneback_flow, flow_magnitude, poly_expansion, FlowField, FlowParams,
};
use talkdet::media::GrayFrame;

fn mean_epe(field: &FlowField, margin: usize, truth: impl Fn(usize, usize) -> (f64, f64)) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in margin..field.height - margin {
        for x in margin..field.width - margin {
            let i = y * field.width + x;
            let (tu, tv) = truth(x, y);
            sum += ((field.u[i] - tu).powi(2) + (field.v[i] - tv).powi(2)).sqrt();
            n += 1;
        }
    }
    sum / n as f64
}

#[test]
fn identical_frames_have_no_motion() {
    let f = smooth_texture(100, 100, 2.0, 7);
    let flow = farneback_flow(&f, &f, &FlowParams::default()).unwrap();
    let max = flow_magnitude(&flow).mag.into_iter().fold(0.0, f64::max);
    assert!(max < 1e-3, "max magnitude {max}");
}

#[test]
fn horizontal_shift_of_three_pixels() {
    let prev = smooth_texture(100, 100, 2.0, 11);
    let next = shift_wrap(&prev, 3, 0);
    let flow = farneback_flow(&prev, &next, &FlowParams::default()).unwrap();
    let epe = mean_epe(&flow, 10, |_, _| (3.0, 0.0));
    eprintln!("mean EPE {epe:.4}");
    assert!(epe < 0.5, "mean EPE {epe}");
}

#[test]
fn small_rotation() {
    let prev = smooth_texture(100, 100, 2.0, 5);
    let (next, truth) = rotate_about_center(&prev, 2.0);
    let flow = farneback_flow(&prev, &next, &FlowParams::default()).unwrap();
    let epe = mean_epe(&flow, 20, |x, y| truth(x, y));
    eprintln!("mean EPE {epe:.4}");
    assert!(epe < 0.5, "mean EPE {epe}");
}

#[test]
fn flow_is_bit_deterministic() {
    let prev = smooth_texture(64, 64, 2.0, 3);
    let next = shift_wrap(&prev, 1, 2);
    let a = farneback_flow(&prev, &next, &FlowParams::default()).unwrap();
    let b = farneback_flow(&prev, &next, &FlowParams::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn magnitude_matches_scalar_loop() {
    let f = smooth_texture(40, 30, 1.0, 9);
    let g = smooth_texture(40, 30, 1.0, 10);
    let field = FlowField {
        width: 40,
        height: 30,
        u: f.pixels.iter().map(|v| (v - 0.5) * 13.0).collect(),
        v: g.pixels.iter().map(|v| (v - 0.5) * -7.0).collect(),
    };
    let mag = flow_magnitude(&field);
    for i in 0..field.u.len() {
        let mut s = 0.0;
        s += field.u[i] * field.u[i];
        s += field.v[i] * field.v[i];
        assert!((mag.mag[i] - s.sqrt()).abs() <= 1e-12);
        assert!(mag.mag[i] >= 0.0);
    }
}

/// Weighted least-squares fit at one pixel by assembling and solving the
/// full 6×6 normal equations from the raw neighbourhood.
fn dense_fit(frame: &GrayFrame, x: usize, y: usize, poly_n: usize, sigma: f64) -> [f64; 6] {
    let half = (poly_n / 2) as isize;
    let g = applicability(poly_n, sigma);
    let mut m = [[0.0f64; 7]; 6];
    for dy in -half..=half {
        for dx in -half..=half {
            let w = g[(dy + half) as usize] * g[(dx + half) as usize];
            let (fx, fy) = (dx as f64, dy as f64);
            let phi = [1.0, fx, fy, fx * fx, fy * fy, fx * fy];
            let val = frame.get((x as isize + dx) as usize, (y as isize + dy) as usize);
            for i in 0..6 {
                for j in 0..6 {
                    m[i][j] += w * phi[i] * phi[j];
                }
                m[i][6] += w * phi[i] * val;
            }
        }
    }
    // Gauss-Jordan with partial pivoting.
    for col in 0..6 {
        let piv = (col..6)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        for r in 0..6 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..7 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut p = [0.0; 6];
    for i in 0..6 {
        p[i] = m[i][6] / m[i][i];
    }
    p
}

#[test]
fn quadratic_curvature_recovered() {
    let f = GrayFrame::from_fn(40, 40, |x, _| 0.001 * (x as f64).powi(2));
    let e = poly_expansion(&f, 5, 1.1).unwrap();
    for y in 2..38 {
        for x in 2..38 {
            let q = e.at(x, y);
            let dense = dense_fit(&f, x, y, 5, 1.1);
            assert!((dense[3] - 0.001).abs() < 1e-5);
            assert!((q.a11 - 0.001).abs() < 1e-5, "a11 {} at ({x},{y})", q.a11);
        }
    }
}

#[test]
fn separable_expansion_matches_dense_solve() {
    for (poly_n, sigma) in [(5, 1.1), (7, 1.5)] {
        let f = smooth_texture(32, 28, 1.5, 21);
        let e = poly_expansion(&f, poly_n, sigma).unwrap();
        let half = poly_n / 2;
        for y in half..28 - half {
            for x in half..32 - half {
                let p = dense_fit(&f, x, y, poly_n, sigma);
                let q = e.at(x, y);
                let got = [q.c, q.b1, q.b2, q.a11, q.a22, 2.0 * q.a12];
                for k in 0..6 {
                    assert!((got[k] - p[k]).abs() < 1e-9, "coef {k} at ({x},{y})");
                }
            }
        }
    }
}
