//! Synthetic stand-ins for classroom video: textured "faces" with an
//! elliptical mouth that either oscillates (talking) or stays still.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learn::{Dataset, Label, LabeledExample};
use crate::media::{write_pgm, BoxAnnotation, BoxKind, ColorFormat, FrameManifest, GrayFrame};
use crate::pipeline::{clip_features, run_parallel, write_jsonl, ClipTruth, PipelineConfig};
use crate::proposals::{CLIP_SECONDS, CROP_SIZE};
use crate::provenance::{write_stamped_json, Provenance};

pub const FIXTURE_FPS: u32 = 30;

/// Coarse and fine texture scales, cycles/px: 4× apart.
pub const COARSE_TEXTURE_CYCLES: f64 = 0.05;
pub const FINE_TEXTURE_CYCLES: f64 = 0.2;

const MOUTH_INTENSITY: f64 = 0.1;

/// Sum of a few low-frequency plane waves around a mid-grey base.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceTexture {
    /// `(kx, ky, phase, amplitude)` per wave; `k` in rad/px.
    pub waves: Vec<(f64, f64, f64, f64)>,
    pub base: f64,
}

impl FaceTexture {
    pub fn random(rng: &mut impl Rng) -> Self {
        let waves = (0..5)
            .map(|_| {
                let k = rng.random_range(0.08..0.3);
                let theta = rng.random_range(0.0..PI);
                (k * theta.cos(), k * theta.sin(), rng.random_range(0.0..2.0 * PI), rng.random_range(0.04..0.08))
            })
            .collect();
        FaceTexture { waves, base: 0.55 }
    }

    pub fn at(&self, x: f64, y: f64) -> f64 {
        self.base
            + self
                .waves
                .iter()
                .map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).cos())
                .sum::<f64>()
    }
}

/// Mouth opening over time: a raised-cosine cycle whose rate and depth
/// are themselves slowly modulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MouthMotion {
    /// Peak extra half-height, px.
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

impl MouthMotion {
    pub fn opening(&self, t: f64) -> f64 {
        let phase = 2.0 * PI * self.frequency_hz * t + self.phase + 0.5 * (2.0 * PI * 0.5 * t).sin();
        let depth = 0.8 + 0.2 * (2.0 * PI * 0.37 * t).sin();
        self.amplitude * depth * (0.5 - 0.5 * phase.cos())
    }
}

/// Slow whole-head translation, px.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sway {
    pub amplitude: (f64, f64),
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceSpec {
    pub texture: FaceTexture,
    pub mouth_center: (f64, f64),
    pub mouth_half_width: f64,
    pub mouth_half_height: f64,
    pub motion: Option<MouthMotion>,
    pub sway: Option<Sway>,
}

impl FaceSpec {
    /// Randomized face for a `CROP_SIZE` box; `talking` decides whether the
    /// mouth moves. Half of all faces also sway slightly.
    pub fn random(rng: &mut impl Rng, talking: bool) -> Self {
        let texture = FaceTexture::random(rng);
        let mouth_center = (50.0 + rng.random_range(-5.0..5.0), 68.0 + rng.random_range(-5.0..5.0));
        let mouth_half_width = rng.random_range(10.0..15.0);
        let mouth_half_height = rng.random_range(1.5..3.0);
        let motion = talking.then(|| MouthMotion {
            amplitude: rng.random_range(3.0..6.0),
            frequency_hz: rng.random_range(2.0..5.0),
            phase: rng.random_range(0.0..2.0 * PI),
        });
        let sway = rng.random_bool(0.5).then(|| Sway {
            amplitude: (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)),
            frequency_hz: rng.random_range(0.2..0.7),
        });
        FaceSpec {
            texture,
            mouth_center,
            mouth_half_width,
            mouth_half_height,
            motion,
            sway,
        }
    }

    /// Intensity at face-local position `(x, y)` at time `t` seconds.
    pub fn sample(&self, x: f64, y: f64, t: f64) -> f64 {
        let (ox, oy) = self.sway.map_or((0.0, 0.0), |s| {
            let w = 2.0 * PI * s.frequency_hz * t;
            (s.amplitude.0 * w.sin(), s.amplitude.1 * (w * 0.8).cos())
        });
        let (x, y) = (x - ox, y - oy);
        let open = self.motion.map_or(0.0, |m| m.opening(t));
        let a = self.mouth_half_width;
        let b = self.mouth_half_height + open;
        let (dx, dy) = (x - self.mouth_center.0, y - self.mouth_center.1);
        let rho = ((dx / a).powi(2) + (dy / b).powi(2)).sqrt();
        // one-pixel anti-aliased edge
        let alpha = ((1.0 - rho) * a.min(b) + 0.5).clamp(0.0, 1.0);
        let skin = self.texture.at(x, y);
        (skin * (1.0 - alpha) + MOUTH_INTENSITY * alpha).clamp(0.0, 1.0)
    }

    pub fn render(&self, size: usize, t: f64) -> GrayFrame {
        GrayFrame::from_fn(size, size, |x, y| self.sample(x as f64, y as f64, t))
    }
}

/// Round-trip through 8 bits, as every stored frame does.
fn quantize(f: &GrayFrame) -> GrayFrame {
    GrayFrame::from_gray8(f.width, f.height, &f.to_gray8()).expect("same dimensions")
}

/// One 3-second clip of a face, quantized to 8 bits.
pub fn render_clip(face: &FaceSpec, fps: u32) -> Vec<GrayFrame> {
    (0..CLIP_SECONDS * fps as usize)
        .map(|i| quantize(&face.render(CROP_SIZE, i as f64 / fps as f64)))
        .collect()
}

/// `n` labelled clips, alternating talking / not talking, featurized with
/// the detector's own pipeline. Clip `i` draws from its own RNG stream, so
/// the set does not depend on the worker count.
pub fn training_set(n: usize, cfg: &PipelineConfig, seed: u64, workers: usize) -> Result<Dataset> {
    let examples = run_parallel(workers, || {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                let talking = i % 2 == 0;
                let face = FaceSpec::random(&mut rng, talking);
                let (_, features) = clip_features(&render_clip(&face, FIXTURE_FPS), cfg)?;
                Ok(LabeledExample {
                    features: features.values,
                    label: if talking { Label::Talking } else { Label::NotTalking },
                    clip_ref: format!("synthetic/{i:04}"),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Dataset::new(examples)
}

/// A rendered scene with per-frame head boxes and per-clip truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub frames: Vec<GrayFrame>,
    pub fps: u32,
    pub boxes: Vec<BoxAnnotation>,
    pub truth: Vec<ClipTruth>,
}

impl Scene {
    /// Write `frames/`, `manifest.json`, `annotations.jsonl` and
    /// `truth.jsonl` under `dir`.
    pub fn write(&self, dir: &Path, provenance: &Provenance) -> Result<FrameManifest> {
        let frames_dir = dir.join("frames");
        std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        let first = &self.frames[0];
        let manifest = FrameManifest {
            root_path: "frames".into(),
            width: first.width,
            height: first.height,
            frame_count: self.frames.len(),
            fps: self.fps,
            color: ColorFormat::Gray8,
        };
        for (i, f) in self.frames.iter().enumerate() {
            write_pgm(&frames_dir.join(manifest.frame_file_name(i)), f)?;
        }
        write_stamped_json(&dir.join("manifest.json"), &manifest, provenance)?;
        write_jsonl(&dir.join("annotations.jsonl"), &provenance.stamp_all(&self.boxes))?;
        write_jsonl(&dir.join("truth.jsonl"), &provenance.stamp_all(&self.truth))?;
        Ok(manifest)
    }
}

pub const TALKING_PERSON: &str = "person_a";
pub const SILENT_PERSON: &str = "person_b";

/// Two heads side by side for `seconds` at 30 fps: the left one talks, the
/// right one is still. Annotated boxes jitter by up to ±2 px per frame.
pub fn two_person_scene(seconds: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut talker = FaceSpec::random(&mut rng, true);
    talker.sway = None;
    talker.motion = Some(MouthMotion {
        amplitude: 5.0,
        frequency_hz: 3.0,
        phase: 0.0,
    });
    let mut silent = FaceSpec::random(&mut rng, false);
    silent.sway = None;
    let people = [(TALKING_PERSON, &talker, 10usize), (SILENT_PERSON, &silent, 130usize)];
    let (w, h, top) = (240, 120, 10usize);
    let fps = FIXTURE_FPS;
    let n = seconds * fps as usize;
    let frames: Vec<GrayFrame> = (0..n)
        .map(|i| {
            let t = i as f64 / fps as f64;
            quantize(&GrayFrame::from_fn(w, h, |x, y| {
                for &(_, face, left) in &people {
                    if (left..left + CROP_SIZE).contains(&x) && (top..top + CROP_SIZE).contains(&y) {
                        return face.sample((x - left) as f64, (y - top) as f64, t);
                    }
                }
                0.35 + 0.05 * (x as f64 * 0.05).sin() * (y as f64 * 0.07).cos()
            }))
        })
        .collect();
    let mut boxes = Vec::new();
    for i in 0..n {
        for &(id, _, left) in &people {
            let jx = rng.random_range(-2i64..=2);
            let jy = rng.random_range(-2i64..=2);
            boxes.push(BoxAnnotation {
                frame_index: i,
                person_id: id.to_string(),
                x: (left as i64 + jx) as usize,
                y: (top as i64 + jy) as usize,
                w: CROP_SIZE,
                h: CROP_SIZE,
                kind: BoxKind::Head,
            });
        }
    }
    let len = CLIP_SECONDS * fps as usize;
    let mut truth = Vec::new();
    for &(id, face, _) in &people {
        for k in 0..n / len {
            truth.push(ClipTruth {
                person_id: id.to_string(),
                start_frame: k * len,
                end_frame: (k + 1) * len - 1,
                label: if face.motion.is_some() { Label::Talking } else { Label::NotTalking },
            });
        }
    }
    Scene { frames, fps, boxes, truth }
}

/// Two crossed plane waves at `cycles_per_px`, a stand-in for a head's
/// texture seen at a given distance.
pub fn texture_scale_pattern(size: usize, cycles_per_px: f64) -> GrayFrame {
    let omega = 2.0 * PI * cycles_per_px;
    let (a, b) = (PI / 6.0, 2.0 * PI / 3.0);
    GrayFrame::from_fn(size, size, |x, y| {
        let (x, y) = (x as f64, y as f64);
        0.5 + 0.2 * (omega * (x * a.cos() + y * a.sin())).cos() + 0.2 * (omega * (x * b.cos() + y * b.sin())).cos()
    })
}
