//! End-to-end wiring: configuration, clip features, detection, evaluation
//! reports and overlays.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amfm::{
    amfm_decompose, build_filterbank, mean_frequency, Filterbank, FilterbankConfig, DEFAULT_BACKGROUND_THRESHOLD,
};
use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};
use crate::eval::{auc, confusion, metrics_from_confusion, percent_half_up, ConfusionMatrix, Metrics};
use crate::flow::{flow_magnitude, flow_sequence, FlowParams};
use crate::learn::{Hyper, Label};
use crate::media::{render_overlay, write_ppm, BoxAnnotation, FrameManifest, GrayFrame};
use crate::projection::{pool_features, project_log_magnitude, FeatureVector, ProjectionImage, DEFAULT_GRID};
use crate::proposals::{extract_clip, window_clips, ClipProposal, PersonTrack};
use crate::provenance::Provenance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub flow: FlowParams,
    pub filterbank: FilterbankConfig,
    /// Amplitude-weighted mean IF (rad/px) above which a head is background.
    pub background_threshold: f64,
    /// `[grid_w, grid_h]` for feature pooling.
    pub pooling_grid: [usize; 2],
    pub classifier_hyper: Hyper,
    pub iou_threshold: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            flow: FlowParams::default(),
            filterbank: FilterbankConfig::default(),
            background_threshold: DEFAULT_BACKGROUND_THRESHOLD,
            pooling_grid: [DEFAULT_GRID.0, DEFAULT_GRID.1],
            classifier_hyper: Hyper::default(),
            iou_threshold: crate::eval::DEFAULT_IOU_THRESHOLD,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.filterbank.validate()?;
        if !(self.background_threshold > 0.0 && self.background_threshold.is_finite()) {
            return Err(Error::InvalidArgument("background_threshold must be positive".into()));
        }
        if self.pooling_grid.contains(&0) {
            return Err(Error::InvalidArgument("pooling_grid entries must be positive".into()));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidArgument("iou_threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        Provenance::hash_json(self)
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::new(self.hash(), self.seed)
    }

    pub fn feature_dim(&self) -> usize {
        self.pooling_grid[0] * self.pooling_grid[1]
    }
}

/// Flow over consecutive crops → log-magnitude projection → pooled features.
pub fn clip_features(frames: &[GrayFrame], cfg: &PipelineConfig) -> Result<(ProjectionImage, FeatureVector)> {
    let flows = flow_sequence(frames, &cfg.flow)?;
    let mags: Vec<_> = flows.iter().map(flow_magnitude).collect();
    let proj = project_log_magnitude(&mags)?;
    let features = pool_features(&proj, cfg.pooling_grid[0], cfg.pooling_grid[1])?;
    Ok((proj, features))
}

/// All proposals of all tracks, ordered by (person_id, start_frame).
pub fn all_proposals(tracks: &[PersonTrack], fps: u32) -> Vec<ClipProposal> {
    let mut out: Vec<ClipProposal> = tracks.iter().flat_map(|t| window_clips(t, fps)).collect();
    out.sort_by(|a, b| (&a.person_id, a.start_frame).cmp(&(&b.person_id, b.start_frame)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NotTalking,
    Talking,
    RejectedBackground,
}

impl Verdict {
    pub fn label(self) -> Option<Label> {
        match self {
            Verdict::Talking => Some(Label::Talking),
            Verdict::NotTalking => Some(Label::NotTalking),
            Verdict::RejectedBackground => None,
        }
    }
}

impl From<Label> for Verdict {
    fn from(l: Label) -> Self {
        match l {
            Label::Talking => Verdict::Talking,
            Label::NotTalking => Verdict::NotTalking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub person_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: Verdict,
    pub member_votes: BTreeMap<String, Label>,
    pub member_scores: BTreeMap<String, f64>,
    pub crop_box: BoxAnnotation,
    /// Amplitude-weighted mean IF of the start-frame head crop, rad/px.
    pub background_frequency: Option<f64>,
    #[serde(flatten)]
    pub provenance: Provenance,
}

impl DetectionRecord {
    /// Mean member score, the ensemble's ranking score for AUC.
    pub fn score(&self) -> Option<f64> {
        (!self.member_scores.is_empty())
            .then(|| self.member_scores.values().sum::<f64>() / self.member_scores.len() as f64)
    }
}

/// Filterbanks are built once per head-box size and shared across workers.
#[derive(Default)]
struct BankCache(Mutex<HashMap<(usize, usize), Arc<Filterbank>>>);

impl BankCache {
    fn get(&self, cfg: &FilterbankConfig, w: usize, h: usize) -> Result<Arc<Filterbank>> {
        if let Some(b) = self.0.lock().expect("bank cache poisoned").get(&(w, h)) {
            return Ok(b.clone());
        }
        let bank = Arc::new(build_filterbank(cfg, w, h)?);
        Ok(self
            .0
            .lock()
            .expect("bank cache poisoned")
            .entry((w, h))
            .or_insert(bank)
            .clone())
    }
}

/// Amplitude-weighted mean IF of the native-resolution head crop.
fn head_frequency(seq: &FrameManifest, p: &ClipProposal, cfg: &PipelineConfig, banks: &BankCache) -> Result<Option<f64>> {
    let frame = seq.read_gray(p.start_frame)?;
    let rect = p
        .crop_box
        .clamp_to(frame.width, frame.height)
        .ok_or_else(|| Error::EmptyRegion(format!("box for {} at frame {}", p.person_id, p.start_frame)))?;
    let (w, h) = (rect.x1 - rect.x0, rect.y1 - rect.y0);
    let crop = GrayFrame::from_fn(w, h, |x, y| frame.get(rect.x0 + x, rect.y0 + y));
    let bank = banks.get(&cfg.filterbank, w, h)?;
    let map = amfm_decompose(&crop, &bank)?;
    let whole = BoxAnnotation {
        x: 0,
        y: 0,
        w,
        h,
        ..p.crop_box.clone()
    };
    Ok(mean_frequency(&whole, &map))
}

fn detect_one(
    seq: &FrameManifest,
    p: &ClipProposal,
    ensemble: &EnsembleModel,
    cfg: &PipelineConfig,
    banks: &BankCache,
) -> Result<DetectionRecord> {
    let freq = head_frequency(seq, p, cfg, banks)?;
    let mut record = DetectionRecord {
        person_id: p.person_id.clone(),
        start_frame: p.start_frame,
        end_frame: p.end_frame,
        label: Verdict::RejectedBackground,
        member_votes: BTreeMap::new(),
        member_scores: BTreeMap::new(),
        crop_box: p.crop_box.clone(),
        background_frequency: freq,
        provenance: cfg.provenance(),
    };
    if freq.is_some_and(|f| f > cfg.background_threshold) {
        return Ok(record);
    }
    let clip = extract_clip(seq, p)?;
    let (_, features) = clip_features(&clip.frames, cfg)?;
    let verdict = ensemble.predict(&features.values)?;
    record.label = verdict.label.into();
    record.member_votes = verdict.member_votes;
    record.member_scores = verdict.member_scores;
    Ok(record)
}

/// Classify every proposal. Work is spread over `workers` threads; the
/// result is ordered by (person_id, start_frame) regardless.
pub fn detect(
    seq: &FrameManifest,
    tracks: &[PersonTrack],
    ensemble: &EnsembleModel,
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<Vec<DetectionRecord>> {
    if ensemble.dim() != cfg.feature_dim() {
        return Err(Error::Dimension(format!(
            "ensemble expects {} features but the pooling grid gives {}",
            ensemble.dim(),
            cfg.feature_dim()
        )));
    }
    let proposals = all_proposals(tracks, seq.fps);
    let banks = BankCache::default();
    let mut records = run_parallel(workers, || {
        proposals
            .par_iter()
            .map(|p| {
                detect_one(seq, p, ensemble, cfg, &banks).map_err(|e| Error::Proposal {
                    person_id: p.person_id.clone(),
                    start_frame: p.start_frame,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    records.sort_by(|a, b| (&a.person_id, a.start_frame).cmp(&(&b.person_id, b.start_frame)));
    Ok(records)
}

/// Run `f` on a dedicated pool of `workers` threads (0 = rayon default).
pub fn run_parallel<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::json(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Ground truth for one clip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipTruth {
    pub person_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonAccuracy {
    pub clips: u64,
    pub correct: u64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipReport {
    pub confusion: Option<ConfusionMatrix>,
    pub metrics: Option<Metrics>,
    pub accuracy_percent: Option<String>,
    pub auc: Option<f64>,
    pub per_person: BTreeMap<String, PersonAccuracy>,
    /// Truth clips whose detection was rejected as background.
    pub rejected_background: u64,
    /// Truth clips with no detection record.
    pub missing: u64,
    /// Detection records with no truth entry.
    pub unmatched_detections: u64,
    #[serde(flatten)]
    pub provenance: Provenance,
}

/// Score classified clips against truth keyed by (person_id, start_frame).
/// Background-rejected clips are counted separately, not as negatives.
pub fn evaluate_clips(records: &[DetectionRecord], truth: &[ClipTruth], provenance: Provenance) -> ClipReport {
    let by_key: BTreeMap<(&str, usize), &DetectionRecord> =
        records.iter().map(|r| ((r.person_id.as_str(), r.start_frame), r)).collect();
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    let mut per_person: BTreeMap<String, PersonAccuracy> = BTreeMap::new();
    let (mut rejected, mut missing) = (0, 0);
    let mut matched = 0;
    for t in truth {
        let Some(r) = by_key.get(&(t.person_id.as_str(), t.start_frame)) else {
            missing += 1;
            continue;
        };
        matched += 1;
        let Some(pred) = r.label.label() else {
            rejected += 1;
            continue;
        };
        preds.push(pred);
        labels.push(t.label);
        if let Some(s) = r.score() {
            scores.push(s);
        }
        let pa = per_person.entry(t.person_id.clone()).or_default();
        pa.clips += 1;
        pa.correct += (pred == t.label) as u64;
    }
    for pa in per_person.values_mut() {
        pa.accuracy = Some(pa.correct as f64 / pa.clips as f64);
    }
    let cm = confusion(&preds, &labels).ok();
    let auc = (scores.len() == labels.len()).then(|| auc(&scores, &labels).ok()).flatten();
    ClipReport {
        metrics: cm.as_ref().map(metrics_from_confusion),
        accuracy_percent: cm
            .as_ref()
            .and_then(|c| percent_half_up(c.correct(), c.total()))
            .map(|p| format!("{p}%")),
        confusion: cm,
        auc,
        per_person,
        rejected_background: rejected,
        missing,
        unmatched_detections: (records.len() - matched) as u64,
        provenance,
    }
}

/// Draw every classified clip's fixed box on each frame of its window and
/// write one PPM per frame into `out_dir`.
pub fn write_overlays(seq: &FrameManifest, records: &[DetectionRecord], out_dir: &Path) -> Result<usize> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for i in 0..seq.frame_count {
        let verdicts: Vec<(BoxAnnotation, Label)> = records
            .iter()
            .filter(|r| (r.start_frame..=r.end_frame).contains(&i))
            .filter_map(|r| r.label.label().map(|l| (r.crop_box.clone(), l)))
            .collect();
        let frame = seq.read_rgb(i)?;
        let img = render_overlay(&frame, &verdicts);
        write_ppm(&out_dir.join(format!("frame_{i:06}.ppm")), &img)?;
    }
    Ok(seq.frame_count)
}

/// Fixed-box crops for every proposal plus their features, in proposal
/// order.
pub fn project_proposals(
    seq: &FrameManifest,
    proposals: &[ClipProposal],
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<Vec<(ProjectionImage, FeatureVector)>> {
    run_parallel(workers, || {
        proposals
            .par_iter()
            .map(|p| {
                extract_clip(seq, p)
                    .and_then(|clip| clip_features(&clip.frames, cfg))
                    .map_err(|e| Error::Proposal {
                        person_id: p.person_id.clone(),
                        start_frame: p.start_frame,
                        source: Box::new(e),
                    })
            })
            .collect()
    })?
}
