//! Multichannel Gabor AM-FM decomposition with dominant component analysis.
//!
//! Channels are defined in the frequency domain as a Gaussian in log-radial
//! frequency times a Gaussian in orientation. The angular Gaussian is taken
//! over the full circle, so each channel passes only one half-plane and its
//! output is an analytic (complex) signal. Per pixel, the channel with the
//! largest response magnitude wins; its magnitude is the instantaneous
//! amplitude and the gradient of its phase the instantaneous frequency.
//!
//! Frames are mirror-extended to twice their size before the FFT so that the
//! implied periodic signal has no jump at the frame edges.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{write_pgm16, BoxAnnotation, GrayFrame};

/// Instantaneous frequency is reported as 0 where the amplitude is below this.
pub const MIN_AMPLITUDE: f64 = 1e-6;

/// Default background-rejection threshold on mean instantaneous frequency.
pub const DEFAULT_BACKGROUND_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterbankConfig {
    pub num_scales: usize,
    pub num_orientations: usize,
    /// Radial centre frequencies in rad/px, one per scale, increasing.
    pub center_frequencies: Vec<f64>,
    /// Full width at half maximum of the radial response, in octaves.
    pub bandwidth_octaves: f64,
}

impl Default for FilterbankConfig {
    fn default() -> Self {
        FilterbankConfig {
            num_scales: 6,
            num_orientations: 9,
            center_frequencies: geometric_frequencies(PI / 20.0, 0.75 * PI, 6),
            bandwidth_octaves: 1.0,
        }
    }
}

/// `n` geometrically spaced values from `lo` to `hi` inclusive.
pub fn geometric_frequencies(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| lo * ratio.powi(i as i32)).collect()
}

impl FilterbankConfig {
    pub fn channel_count(&self) -> usize {
        self.num_scales * self.num_orientations
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("filterbank: {m}")));
        if self.num_scales == 0 || self.num_orientations == 0 {
            return bad("needs at least one scale and one orientation".into());
        }
        if self.center_frequencies.len() != self.num_scales {
            return bad(format!(
                "{} centre frequencies for {} scales",
                self.center_frequencies.len(),
                self.num_scales
            ));
        }
        if self
            .center_frequencies
            .iter()
            .any(|&w| !(w > 0.0 && w < PI))
        {
            return bad("centre frequencies must lie in (0, π)".into());
        }
        if self.center_frequencies.windows(2).any(|p| p[1] <= p[0]) {
            return bad("centre frequencies must be strictly increasing".into());
        }
        if !(self.bandwidth_octaves > 0.0) {
            return bad("bandwidth must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub scale: usize,
    pub orientation: usize,
    /// rad/px
    pub center_frequency: f64,
    /// Direction of the passband centre, radians in `[0, π)`.
    pub theta: f64,
}

const FWHM_TO_SIGMA: f64 = 2.354_820_045_030_949_3; // 2·√(2 ln 2)

impl ChannelSpec {
    /// Transfer function gain at angular frequency `(wx, wy)`.
    pub fn gain(&self, wx: f64, wy: f64, radial_sigma: f64, angular_sigma: f64) -> f64 {
        let rho = wx.hypot(wy);
        if rho == 0.0 {
            return 0.0;
        }
        let lr = (rho / self.center_frequency).ln();
        let phi = wy.atan2(wx);
        let mut dphi = (phi - self.theta).rem_euclid(2.0 * PI);
        if dphi > PI {
            dphi -= 2.0 * PI;
        }
        (-(lr * lr) / (2.0 * radial_sigma * radial_sigma)).exp()
            * (-(dphi * dphi) / (2.0 * angular_sigma * angular_sigma)).exp()
    }
}

/// Frequency-domain channel transfer functions for one frame size.
pub struct Filterbank {
    width: usize,
    height: usize,
    padded_w: usize,
    padded_h: usize,
    channels: Vec<ChannelSpec>,
    radial_sigma: f64,
    angular_sigma: f64,
    /// One real transfer function per channel over the padded grid.
    transfer: Vec<Vec<f64>>,
    fft_row: Arc<dyn Fft<f64>>,
    fft_col: Arc<dyn Fft<f64>>,
    ifft_row: Arc<dyn Fft<f64>>,
    ifft_col: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Filterbank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Filterbank")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels.len())
            .finish()
    }
}

/// Signed angular frequency of FFT bin `k` out of `n`.
fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = if k > n / 2 { k as f64 - n as f64 } else { k as f64 };
    2.0 * PI * k / n as f64
}

pub fn build_filterbank(config: &FilterbankConfig, width: usize, height: usize) -> Result<Filterbank> {
    config.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!("filterbank for {width}x{height}")));
    }
    let radial_sigma = config.bandwidth_octaves * std::f64::consts::LN_2 / FWHM_TO_SIGMA;
    let angular_sigma = (PI / config.num_orientations as f64) / FWHM_TO_SIGMA;
    let channels: Vec<ChannelSpec> = config
        .center_frequencies
        .iter()
        .enumerate()
        .flat_map(|(scale, &w)| {
            (0..config.num_orientations).map(move |o| ChannelSpec {
                scale,
                orientation: o,
                center_frequency: w,
                theta: o as f64 * PI / config.num_orientations as f64,
            })
        })
        .collect();
    let (pw, ph) = (2 * width, 2 * height);
    let transfer = channels
        .iter()
        .map(|c| {
            let mut t = Vec::with_capacity(pw * ph);
            for ky in 0..ph {
                let wy = bin_frequency(ky, ph);
                for kx in 0..pw {
                    t.push(c.gain(bin_frequency(kx, pw), wy, radial_sigma, angular_sigma));
                }
            }
            t
        })
        .collect();
    let mut planner = FftPlanner::new();
    Ok(Filterbank {
        width,
        height,
        padded_w: pw,
        padded_h: ph,
        radial_sigma,
        angular_sigma,
        fft_row: planner.plan_fft_forward(pw),
        fft_col: planner.plan_fft_forward(ph),
        ifft_row: planner.plan_fft_inverse(pw),
        ifft_col: planner.plan_fft_inverse(ph),
        channels,
        transfer,
    })
}

impl Filterbank {
    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Analytic gain of channel `c` at angular frequency `(wx, wy)`.
    pub fn gain(&self, c: usize, wx: f64, wy: f64) -> f64 {
        self.channels[c].gain(wx, wy, self.radial_sigma, self.angular_sigma)
    }

    /// Sampled transfer function of channel `c` over the padded FFT grid,
    /// row-major `2·height × 2·width`.
    pub fn transfer(&self, c: usize) -> &[f64] {
        &self.transfer[c]
    }

    fn fft2(&self, data: &mut [Complex<f64>], inverse: bool) {
        let (w, h) = (self.padded_w, self.padded_h);
        let (row, col) = if inverse {
            (&self.ifft_row, &self.ifft_col)
        } else {
            (&self.fft_row, &self.fft_col)
        };
        for r in data.chunks_exact_mut(w) {
            row.process(r);
        }
        let mut column = vec![Complex::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = data[y * w + x];
            }
            col.process(&mut column);
            for y in 0..h {
                data[y * w + x] = column[y];
            }
        }
        if inverse {
            let s = 1.0 / (w * h) as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }

    fn check_frame(&self, frame: &GrayFrame) -> Result<()> {
        if (frame.width, frame.height) != (self.width, self.height) {
            return Err(Error::Dimension(format!(
                "{}x{} frame for a {}x{} filterbank",
                frame.width, frame.height, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Spectrum of the mirror-extended frame.
    fn spectrum(&self, frame: &GrayFrame) -> Vec<Complex<f64>> {
        let (w, h, pw) = (self.width, self.height, self.padded_w);
        let mut data = vec![Complex::new(0.0, 0.0); pw * self.padded_h];
        for py in 0..self.padded_h {
            let y = if py < h { py } else { 2 * h - 1 - py };
            for px in 0..pw {
                let x = if px < w { px } else { 2 * w - 1 - px };
                data[py * pw + px] = Complex::new(frame.get(x, y), 0.0);
            }
        }
        self.fft2(&mut data, false);
        data
    }

    /// Complex response of channel `c` over the padded grid.
    fn channel_response(&self, spectrum: &[Complex<f64>], c: usize) -> Vec<Complex<f64>> {
        let mut out: Vec<Complex<f64>> = spectrum
            .iter()
            .zip(&self.transfer[c])
            .map(|(s, t)| s * t)
            .collect();
        self.fft2(&mut out, true);
        out
    }

    /// Response magnitude of every channel at every pixel of the frame,
    /// indexed `[channel][y * width + x]`.
    pub fn channel_magnitudes(&self, frame: &GrayFrame) -> Result<Vec<Vec<f64>>> {
        self.check_frame(frame)?;
        let spectrum = self.spectrum(frame);
        Ok((0..self.channels.len())
            .map(|c| {
                let r = self.channel_response(&spectrum, c);
                (0..self.height)
                    .flat_map(|y| {
                        let row = &r[y * self.padded_w..y * self.padded_w + self.width];
                        row.iter().map(|z| z.norm())
                    })
                    .collect()
            })
            .collect())
    }
}

/// Dominant-component AM-FM estimates per pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmFmMap {
    pub width: usize,
    pub height: usize,
    /// Instantaneous amplitude, ≥ 0.
    pub ia: Vec<f64>,
    /// Instantaneous frequency magnitude, rad/px.
    pub if_mag: Vec<f64>,
    /// Winning channel index.
    pub channel: Vec<u16>,
}

/// Phase difference `arg(a · conj(b))`, i.e. the step from `b` to `a`
/// wrapped into `(−π, π]`.
#[inline]
fn phase_step(a: Complex<f64>, b: Complex<f64>) -> f64 {
    (a * b.conj()).arg()
}

pub fn amfm_decompose(frame: &GrayFrame, bank: &Filterbank) -> Result<AmFmMap> {
    bank.check_frame(frame)?;
    let (w, h, pw, ph) = (bank.width, bank.height, bank.padded_w, bank.padded_h);
    let n = w * h;
    let spectrum = bank.spectrum(frame);
    let mut ia = vec![-1.0; n];
    let mut if_mag = vec![0.0; n];
    let mut channel = vec![0u16; n];
    for c in 0..bank.channels.len() {
        let r = bank.channel_response(&spectrum, c);
        let at = |x: usize, y: usize| r[(y % ph) * pw + (x % pw)];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let z = at(x, y);
                let mag = z.norm();
                if mag <= ia[i] {
                    continue;
                }
                ia[i] = mag;
                channel[i] = c as u16;
                // Centred difference built from two unwrapped one-pixel steps.
                // Neighbours come from the padded grid, so borders need no
                // special case.
                let left = at(x + pw - 1, y);
                let right = at(x + 1, y);
                let up = at(x, y + ph - 1);
                let down = at(x, y + 1);
                let wx = 0.5 * (phase_step(right, z) + phase_step(z, left));
                let wy = 0.5 * (phase_step(down, z) + phase_step(z, up));
                if_mag[i] = wx.hypot(wy);
            }
        }
    }
    for i in 0..n {
        if ia[i] < MIN_AMPLITUDE {
            if_mag[i] = 0.0;
        }
    }
    Ok(AmFmMap {
        width: w,
        height: h,
        ia,
        if_mag,
        channel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundDecision {
    Keep,
    Reject,
}

/// Amplitude-weighted mean instantaneous frequency inside `bbox`, or `None`
/// when the box carries no amplitude.
pub fn mean_frequency(bbox: &BoxAnnotation, map: &AmFmMap) -> Option<f64> {
    let rect = bbox.clamp_to(map.width, map.height)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            let i = y * map.width + x;
            num += map.ia[i] * map.if_mag[i];
            den += map.ia[i];
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Reject a head box whose dominant spatial frequency is above `threshold`
/// (rad/px): distant heads are small and carry finer detail per pixel.
pub fn reject_background(bbox: &BoxAnnotation, map: &AmFmMap, threshold: f64) -> BackgroundDecision {
    match mean_frequency(bbox, map) {
        Some(f) if f > threshold => BackgroundDecision::Reject,
        _ => BackgroundDecision::Keep,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerScale {
    layer: String,
    /// value = sample / scale
    scale: f64,
    width: usize,
    height: usize,
}

/// Dump `ia`, `if_mag` and `channel` as 16-bit PGMs with a JSON sidecar
/// recording the scale of each layer.
pub fn write_amfm_layers(dir: &Path, stem: &str, map: &AmFmMap) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let max_ia = map.ia.iter().cloned().fold(0.0, f64::max);
    let layers: [(&str, Vec<f64>, f64); 3] = [
        (
            "ia",
            map.ia.clone(),
            if max_ia > 0.0 { 65535.0 / max_ia } else { 1.0 },
        ),
        ("if_mag", map.if_mag.clone(), 65535.0 / (PI * 2f64.sqrt())),
        (
            "channel",
            map.channel.iter().map(|&c| f64::from(c)).collect(),
            1.0,
        ),
    ];
    let mut scales = Vec::new();
    for (name, values, scale) in layers {
        let samples: Vec<u16> = values
            .iter()
            .map(|v| (v * scale).round().clamp(0.0, 65535.0) as u16)
            .collect();
        write_pgm16(
            &dir.join(format!("{stem}_{name}.pgm")),
            map.width,
            map.height,
            &samples,
        )?;
        scales.push(LayerScale {
            layer: name.to_string(),
            scale,
            width: map.width,
            height: map.height,
        });
    }
    let path = dir.join(format!("{stem}_amfm.json"));
    let text = serde_json::to_string_pretty(&scales).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
