//! Frame sequences, head-box annotations, grayscale conversion, cropping and
//! overlay rendering.
//!
//! Frames live on disk as binary PGM (P5) or PPM (P6) files named
//! `frame_%06d.pgm` / `frame_%06d.ppm`, described by one JSON manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{GraymapHeader, PnmEncoder, PnmHeader, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::Label;

/// Rec.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A 2-D scalar intensity field, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty frame {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(GrayFrame {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        GrayFrame {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayFrame {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Quantize to 8 bits with round-to-nearest.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_gray8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        GrayFrame::new(
            width,
            height,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    pub fn to_rgb(&self) -> RgbImage {
        let gray = self.to_gray8();
        let mut rgb = RgbImage::new(self.width as u32, self.height as u32);
        for (px, g) in rgb.pixels_mut().zip(gray) {
            *px = image::Rgb([g, g, g]);
        }
        rgb
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorFormat {
    Gray8,
    Rgb24,
}

impl ColorFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ColorFormat::Gray8 => "pgm",
            ColorFormat::Rgb24 => "ppm",
        }
    }
}

/// A validated on-disk frame sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub root_path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub fps: u32,
    pub color: ColorFormat,
}

impl FrameManifest {
    pub fn frame_file_name(&self, index: usize) -> String {
        format!("frame_{index:06}.{}", self.color.extension())
    }

    pub fn frame_path(&self, index: usize) -> PathBuf {
        self.root_path.join(self.frame_file_name(index))
    }

    /// Frames per 3-second clip window.
    pub fn window_len(&self) -> usize {
        crate::proposals::CLIP_SECONDS * self.fps as usize
    }

    fn check_index(&self, index: usize) -> Result<PathBuf> {
        let path = self.frame_path(index);
        if index >= self.frame_count {
            return Err(Error::Frame {
                index,
                path,
                message: format!("index beyond frame_count {}", self.frame_count),
            });
        }
        Ok(path)
    }

    pub fn read_gray(&self, index: usize) -> Result<GrayFrame> {
        let path = self.check_index(index)?;
        let img = open_frame(index, &path)?;
        let frame = match self.color {
            ColorFormat::Gray8 => {
                let luma = img.into_luma16();
                GrayFrame::new(
                    luma.width() as usize,
                    luma.height() as usize,
                    luma.pixels().map(|p| f64::from(p.0[0]) / 65535.0).collect(),
                )?
            }
            ColorFormat::Rgb24 => to_grayscale(&img.into_rgb8()),
        };
        self.check_dims(index, &path, frame.width, frame.height)?;
        Ok(frame)
    }

    pub fn read_rgb(&self, index: usize) -> Result<RgbImage> {
        let path = self.check_index(index)?;
        let img = open_frame(index, &path)?.into_rgb8();
        self.check_dims(index, &path, img.width() as usize, img.height() as usize)?;
        Ok(img)
    }

    fn check_dims(&self, index: usize, path: &Path, w: usize, h: usize) -> Result<()> {
        if (w, h) != (self.width, self.height) {
            return Err(Error::Frame {
                index,
                path: path.to_path_buf(),
                message: format!(
                    "size mismatch: {w}x{h}, manifest says {}x{}",
                    self.width, self.height
                ),
            });
        }
        Ok(())
    }

    /// Write a manifest file next to (or anywhere relative to) its frames.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn open_frame(index: usize, path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::Frame {
            index,
            path: path.to_path_buf(),
            message: "missing frame file".into(),
        });
    }
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Read and validate a frame manifest. Frame headers are checked eagerly;
/// pixel data is read on demand through [`FrameManifest::read_gray`].
///
/// A relative `root_path` is resolved against the manifest's directory.
pub fn load_frame_sequence(manifest_path: impl AsRef<Path>) -> Result<FrameManifest> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut manifest: FrameManifest =
        serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
    if manifest.width == 0 || manifest.height == 0 {
        return Err(Error::Manifest(format!(
            "{}: width and height must be positive",
            manifest_path.display()
        )));
    }
    if manifest.fps == 0 {
        return Err(Error::Manifest(format!(
            "{}: fps must be positive",
            manifest_path.display()
        )));
    }
    if manifest.frame_count == 0 {
        return Err(Error::Manifest(format!(
            "{}: frame_count must be at least 1",
            manifest_path.display()
        )));
    }
    if manifest.root_path.is_relative() {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        manifest.root_path = base.join(&manifest.root_path);
    }
    for index in 0..manifest.frame_count {
        let path = manifest.frame_path(index);
        if !path.exists() {
            return Err(Error::Frame {
                index,
                path,
                message: "missing frame file".into(),
            });
        }
        let (w, h) = image::image_dimensions(&path).map_err(|e| Error::Decode {
            path: path.clone(),
            message: e.to_string(),
        })?;
        manifest.check_dims(index, &path, w as usize, h as usize)?;
    }
    Ok(manifest)
}

/// Rec.601 luma, scaled to `[0, 1]`.
pub fn to_grayscale(frame: &RgbImage) -> GrayFrame {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let pixels = frame
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            ((wr * f64::from(r) + wg * f64::from(g) + wb * f64::from(b)) / 255.0).clamp(0.0, 1.0)
        })
        .collect();
    GrayFrame {
        width: frame.width() as usize,
        height: frame.height() as usize,
        pixels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxKind {
    Face,
    Head,
}

/// One detected (or annotated) head box in one frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub frame_index: usize,
    pub person_id: String,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub kind: BoxKind,
}

/// Integer pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

impl BoxAnnotation {
    /// Clamp to a `width × height` frame. `None` if nothing is left.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<Rect> {
        let x0 = self.x.min(width);
        let y0 = self.y.min(height);
        let x1 = self.x.saturating_add(self.w).min(width);
        let y1 = self.y.saturating_add(self.h).min(height);
        (x1 > x0 && y1 > y0).then_some(Rect { x0, y0, x1, y1 })
    }
}

/// Bilinear resample of the boxed region to `out_w × out_h`.
///
/// Uses the pixel-center (align-corners-false) convention: output pixel `o`
/// samples source coordinate `(o + 0.5) · scale − 0.5` inside the box, with
/// coordinates clamped to the box edges.
pub fn crop_resize(
    frame: &GrayFrame,
    bbox: &BoxAnnotation,
    out_w: usize,
    out_h: usize,
) -> Result<GrayFrame> {
    let rect = bbox.clamp_to(frame.width, frame.height).ok_or_else(|| {
        Error::EmptyRegion(format!(
            "box ({}, {}, {}, {}) has no area inside {}x{}",
            bbox.x, bbox.y, bbox.w, bbox.h, frame.width, frame.height
        ))
    })?;
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "output size {out_w}x{out_h}"
        )));
    }
    Ok(resample_rect(frame, rect, out_w, out_h))
}

/// Per-axis bilinear taps: `(i0, i1, t)` with `value = (1 − t)·s[i0] + t·s[i1]`.
fn bilinear_taps(src_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / out_len as f64;
    let max = (src_len - 1) as f64;
    (0..out_len)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

pub(crate) fn resample_rect(frame: &GrayFrame, rect: Rect, out_w: usize, out_h: usize) -> GrayFrame {
    GrayFrame {
        width: out_w,
        height: out_h,
        pixels: resample_plane(&frame.pixels, frame.width, rect, out_w, out_h),
    }
}

/// Bilinear resample of `rect` inside a row-major plane of row stride `src_w`.
pub(crate) fn resample_plane(
    src: &[f64],
    src_w: usize,
    rect: Rect,
    out_w: usize,
    out_h: usize,
) -> Vec<f64> {
    let xs = bilinear_taps(rect.width(), out_w);
    let ys = bilinear_taps(rect.height(), out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, ty) in &ys {
        let row0 = (rect.y0 + y0) * src_w + rect.x0;
        let row1 = (rect.y0 + y1) * src_w + rect.x0;
        for &(x0, x1, tx) in &xs {
            let top = (1.0 - tx) * src[row0 + x0] + tx * src[row0 + x1];
            let bottom = (1.0 - tx) * src[row1 + x0] + tx * src[row1 + x1];
            out.push((1.0 - ty) * top + ty * bottom);
        }
    }
    out
}

/// Resize a whole frame.
pub fn resize(frame: &GrayFrame, out_w: usize, out_h: usize) -> GrayFrame {
    let rect = Rect {
        x0: 0,
        y0: 0,
        x1: frame.width,
        y1: frame.height,
    };
    resample_rect(frame, rect, out_w, out_h)
}

pub const TALKING_COLOR: [u8; 3] = [0, 255, 0];
pub const NOT_TALKING_COLOR: [u8; 3] = [255, 0, 0];
pub const BORDER_PX: usize = 2;

pub fn label_color(label: Label) -> [u8; 3] {
    match label {
        Label::Talking => TALKING_COLOR,
        Label::NotTalking => NOT_TALKING_COLOR,
    }
}

/// Draw a 2-px rectangle border per box: green for talking, red otherwise.
/// Later entries overwrite earlier ones on shared pixels.
pub fn render_overlay(frame: &RgbImage, verdicts: &[(BoxAnnotation, Label)]) -> RgbImage {
    let mut out = frame.clone();
    let (w, h) = (out.width() as usize, out.height() as usize);
    for (bbox, label) in verdicts {
        let Some(rect) = bbox.clamp_to(w, h) else {
            continue;
        };
        let color = image::Rgb(label_color(*label));
        for y in rect.y0..rect.y1 {
            let edge_y = y - rect.y0 < BORDER_PX || rect.y1 - 1 - y < BORDER_PX;
            for x in rect.x0..rect.x1 {
                let edge_x = x - rect.x0 < BORDER_PX || rect.x1 - 1 - x < BORDER_PX;
                if edge_x || edge_y {
                    out.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    out
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn encode_error(path: &Path, e: image::ImageError) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Write an 8-bit binary PGM (P5).
pub fn write_pgm(path: &Path, frame: &GrayFrame) -> Result<()> {
    let mut out = create(path)?;
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .encode(
            frame.to_gray8().as_slice(),
            frame.width as u32,
            frame.height as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| encode_error(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Write a 16-bit binary PGM (P5, maxval 65535).
pub fn write_pgm16(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    let mut out = create(path)?;
    let header = PnmHeader::from(GraymapHeader {
        encoding: SampleEncoding::Binary,
        width: width as u32,
        height: height as u32,
        maxwhite: 65535,
    });
    PnmEncoder::new(&mut out)
        .with_header(header)
        .encode(samples, width as u32, height as u32, ExtendedColorType::L16)
        .map_err(|e| encode_error(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Write an 8-bit binary PPM (P6).
pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    let mut out = create(path)?;
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .encode(
            img.as_raw().as_slice(),
            img.width(),
            img.height(),
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| encode_error(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}
