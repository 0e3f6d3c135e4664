//! C ABI over `talkdet`.
//!
//! Conventions:
//! * every fallible function returns a [`TdStatus`]; results go through
//!   out-pointers, which are left untouched on failure;
//! * the message for the most recent failure on the calling thread is
//!   available from [`td_last_error`];
//! * models and ensembles are opaque handles released with their `_free`
//!   function;
//! * labels cross the boundary as `1` (talking) and `0` (not talking);
//! * undefined metrics (zero denominators) are reported as NaN.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use talkdet::ensemble::EnsembleModel;
use talkdet::eval::{auc, f1_from_counts, metrics_from_confusion, ConfusionMatrix, DetectionCounts};
use talkdet::flow::{farneback_flow, FlowParams};
use talkdet::learn::TrainedModel;
use talkdet::media::GrayFrame;
use talkdet::pipeline::{clip_features, PipelineConfig};
use talkdet::{Error, Label};

/// Outcome of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Io = 4,
    Parse = 5,
    UnsupportedVersion = 6,
    CorruptModel = 7,
    Data = 8,
    Panic = 9,
}

impl From<&Error> for TdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => TdStatus::Io,
            Error::Json { .. } | Error::Parse { .. } | Error::Decode { .. } => TdStatus::Parse,
            Error::Dimension(_) => TdStatus::Dimension,
            Error::InvalidArgument(_) | Error::EmptyRegion(_) => TdStatus::InvalidArgument,
            Error::Version { .. } => TdStatus::UnsupportedVersion,
            Error::Corrupt { .. } => TdStatus::CorruptModel,
            Error::Proposal { source, .. } => TdStatus::from(source.as_ref()),
            Error::Frame { .. } | Error::Manifest(_) | Error::DuplicateAnnotation { .. } | Error::Dataset(_) => {
                TdStatus::Data
            }
        }
    }
}

/// A trained single classifier.
pub struct TdModel(TrainedModel);

/// A three-member majority-vote ensemble.
pub struct TdEnsemble(EnsembleModel);

/// Derived confusion-matrix metrics; NaN where undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn fail(status: TdStatus, message: impl Into<String>) -> TdStatus {
    set_last_error(message.into());
    status
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), TdStatus>) -> TdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TdStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(TdStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> TdStatus {
    fail(TdStatus::from(&e), e.to_string())
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), TdStatus> {
    if p.is_null() {
        Err(fail(TdStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, TdStatus> {
    non_null(p, "path")?;
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(TdStatus::InvalidArgument, "path is not valid UTF-8"))
}

/// An input slice; `len == 0` accepts a null pointer.
unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], TdStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

fn label_code(l: Label) -> i32 {
    l.is_talking() as i32
}

fn nan_if_none(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn td_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version, e.g. `talkdet/0.1.0`. Static storage.
#[no_mangle]
pub extern "C" fn td_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!("talkdet/", env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains a NUL"),
    };
    VERSION.as_ptr()
}

/// Load a model file written by `talkdet train`.
#[no_mangle]
pub unsafe extern "C" fn td_model_load(path: *const c_char, out: *mut *mut TdModel) -> TdStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = TrainedModel::load(path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TdModel(model)));
        Ok(())
    })
}

/// Release a model; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn td_model_free(model: *mut TdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn td_model_dim(model: *const TdModel, out_dim: *mut usize) -> TdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out_dim, "out_dim")?;
        *out_dim = (*model).0.dim;
        Ok(())
    })
}

/// Talking score in `[0, 1]` for one feature vector.
#[no_mangle]
pub unsafe extern "C" fn td_model_score(
    model: *const TdModel,
    features: *const f64,
    len: usize,
    out_score: *mut f64,
) -> TdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out_score, "out_score")?;
        let x = slice_arg(features, len, "features")?;
        *out_score = (*model).0.score(x).map_err(lib_err)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn td_model_predict(
    model: *const TdModel,
    features: *const f64,
    len: usize,
    out_label: *mut i32,
) -> TdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out_label, "out_label")?;
        let x = slice_arg(features, len, "features")?;
        *out_label = label_code((*model).0.predict(x).map_err(lib_err)?);
        Ok(())
    })
}

/// Load an ensemble file written by `talkdet select`, with its members.
#[no_mangle]
pub unsafe extern "C" fn td_ensemble_load(path: *const c_char, out: *mut *mut TdEnsemble) -> TdStatus {
    guard(|| {
        non_null(out, "out")?;
        let (ensemble, _) = EnsembleModel::load(path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TdEnsemble(ensemble)));
        Ok(())
    })
}

/// Release an ensemble; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn td_ensemble_free(ensemble: *mut TdEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

#[no_mangle]
pub unsafe extern "C" fn td_ensemble_dim(ensemble: *const TdEnsemble, out_dim: *mut usize) -> TdStatus {
    guard(|| {
        non_null(ensemble, "ensemble")?;
        non_null(out_dim, "out_dim")?;
        *out_dim = (*ensemble).0.dim();
        Ok(())
    })
}

/// Majority label; `out_votes`, if not null, receives the three member
/// labels in ensemble order.
#[no_mangle]
pub unsafe extern "C" fn td_ensemble_predict(
    ensemble: *const TdEnsemble,
    features: *const f64,
    len: usize,
    out_label: *mut i32,
    out_votes: *mut i32,
) -> TdStatus {
    guard(|| {
        non_null(ensemble, "ensemble")?;
        non_null(out_label, "out_label")?;
        let x = slice_arg(features, len, "features")?;
        let e = &(*ensemble).0;
        let verdict = e.predict(x).map_err(lib_err)?;
        *out_label = label_code(verdict.label);
        if !out_votes.is_null() {
            for (i, m) in e.members().iter().enumerate() {
                *out_votes.add(i) = label_code(verdict.member_votes[&m.model_id]);
            }
        }
        Ok(())
    })
}

unsafe fn gray_frames(pixels: *const u8, width: usize, height: usize, count: usize) -> Result<Vec<GrayFrame>, TdStatus> {
    let n = width
        .checked_mul(height)
        .and_then(|a| a.checked_mul(count))
        .ok_or_else(|| fail(TdStatus::InvalidArgument, "frame size overflows"))?;
    let all = slice_arg(pixels, n, "pixels")?;
    if width == 0 || height == 0 {
        return Err(fail(TdStatus::InvalidArgument, "frames must be non-empty"));
    }
    all.chunks_exact(width * height)
        .map(|c| GrayFrame::from_gray8(width, height, c).map_err(lib_err))
        .collect()
}

/// Dense flow between two 8-bit frames with default parameters. `out_u`
/// and `out_v` each receive `width * height` values, row-major.
#[no_mangle]
pub unsafe extern "C" fn td_flow(
    prev: *const u8,
    next: *const u8,
    width: usize,
    height: usize,
    out_u: *mut f64,
    out_v: *mut f64,
) -> TdStatus {
    guard(|| {
        non_null(out_u, "out_u")?;
        non_null(out_v, "out_v")?;
        let a = gray_frames(prev, width, height, 1)?;
        let b = gray_frames(next, width, height, 1)?;
        let f = farneback_flow(&a[0], &b[0], &FlowParams::default()).map_err(lib_err)?;
        ptr::copy_nonoverlapping(f.u.as_ptr(), out_u, f.u.len());
        ptr::copy_nonoverlapping(f.v.as_ptr(), out_v, f.v.len());
        Ok(())
    })
}

/// Projection image and pooled features of a clip of `count` 8-bit frames
/// (stacked row-major), using default parameters. `out_projection`
/// (nullable) receives `width * height` values; `out_features` receives
/// `grid_w * grid_h`.
#[no_mangle]
pub unsafe extern "C" fn td_clip_features(
    pixels: *const u8,
    width: usize,
    height: usize,
    count: usize,
    grid_w: usize,
    grid_h: usize,
    out_projection: *mut f64,
    out_features: *mut f64,
) -> TdStatus {
    guard(|| {
        non_null(out_features, "out_features")?;
        if count < 2 {
            return Err(fail(TdStatus::InvalidArgument, "a clip needs at least two frames"));
        }
        let frames = gray_frames(pixels, width, height, count)?;
        let cfg = PipelineConfig {
            pooling_grid: [grid_w, grid_h],
            ..PipelineConfig::default()
        };
        let (proj, features) = clip_features(&frames, &cfg).map_err(lib_err)?;
        if !out_projection.is_null() {
            ptr::copy_nonoverlapping(proj.p.as_ptr(), out_projection, proj.p.len());
        }
        ptr::copy_nonoverlapping(features.values.as_ptr(), out_features, features.values.len());
        Ok(())
    })
}

/// Metrics of the confusion matrix `[tn fp; fn tp]`, talking positive.
#[no_mangle]
pub unsafe extern "C" fn td_metrics(tn: u64, fp: u64, fn_: u64, tp: u64, out: *mut TdMetrics) -> TdStatus {
    guard(|| {
        non_null(out, "out")?;
        let m = metrics_from_confusion(&ConfusionMatrix { tn, fp, fn_, tp });
        *out = TdMetrics {
            accuracy: nan_if_none(m.accuracy),
            precision: nan_if_none(m.precision),
            recall: nan_if_none(m.recall),
            f1: nan_if_none(m.f1),
        };
        Ok(())
    })
}

/// ROC AUC of `scores` against `labels` (1 talking, 0 not talking).
#[no_mangle]
pub unsafe extern "C" fn td_auc(scores: *const f64, labels: *const i32, n: usize, out_auc: *mut f64) -> TdStatus {
    guard(|| {
        non_null(out_auc, "out_auc")?;
        let s = slice_arg(scores, n, "scores")?;
        let truth = slice_arg(labels, n, "labels")?
            .iter()
            .map(|&l| match l {
                0 => Ok(Label::NotTalking),
                1 => Ok(Label::Talking),
                other => Err(fail(TdStatus::InvalidArgument, format!("label {other} is neither 0 nor 1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        *out_auc = auc(s, &truth).map_err(lib_err)?;
        Ok(())
    })
}

/// Detection F1 `2tp / (2tp + fp + fn)`; NaN when undefined.
#[no_mangle]
pub unsafe extern "C" fn td_f1_from_counts(tp: u64, fp: u64, fn_: u64, out_f1: *mut f64) -> TdStatus {
    guard(|| {
        non_null(out_f1, "out_f1")?;
        *out_f1 = nan_if_none(f1_from_counts(&DetectionCounts { tp, fp, fn_ }));
        Ok(())
    })
}
