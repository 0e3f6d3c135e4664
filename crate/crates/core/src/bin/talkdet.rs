use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use talkdet::ensemble::{select_top3, EnsembleMember, EnsembleModel, MetricRow, Selection};
use talkdet::eval::{
    auc, confusion, f1_from_counts, match_detections, metrics_from_confusion, DetectionTally,
};
use talkdet::fixture::{
    texture_scale_pattern, training_set, two_person_scene, COARSE_TEXTURE_CYCLES, FINE_TEXTURE_CYCLES,
};
use talkdet::learn::{train, Dataset, LabeledExample, ModelKind, TrainedModel};
use talkdet::media::{load_frame_sequence, write_pgm, BoxAnnotation};
use talkdet::pipeline::{
    all_proposals, detect, evaluate_clips, project_proposals, read_jsonl, write_jsonl, write_overlays, ClipTruth,
    DetectionRecord, PipelineConfig,
};
use talkdet::projection::write_projection;
use talkdet::proposals::{load_head_tracks, CROP_SIZE};
use talkdet::provenance::{write_stamped_json, Provenance};
use talkdet::{Error, Result};

/// Talking-activity detection over per-person head tracks.
#[derive(Parser)]
#[command(name = "talkdet", version, about)]
struct Cli {
    /// Pipeline configuration (JSON); defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Frame manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Head-box annotations (JSON-lines).
    #[arg(long)]
    annotations: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Validate frames and annotations and list the clip proposals.
    Ingest {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write each proposal's projection image; with truth, also a dataset.
    Project {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out_dir: PathBuf,
        /// Clip labels (JSON-lines) to turn the projections into a dataset.
        #[arg(long, requires = "dataset")]
        truth: Option<PathBuf>,
        #[arg(long, requires = "truth")]
        dataset: Option<PathBuf>,
    },
    /// Train one model per kind on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        models_dir: PathBuf,
        /// Comma-separated kinds; all six by default.
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<ModelKind>>,
    },
    /// Pick the ensemble's three members by mean metric rank.
    Select {
        /// Metric table (CSV: model_id, accuracy, auc, f1).
        #[arg(long, conflicts_with = "validation", required_unless_present = "validation")]
        metrics: Option<PathBuf>,
        /// Validation dataset scored with every model in --models-dir.
        #[arg(long, requires = "models_dir")]
        validation: Option<PathBuf>,
        /// Trained models named `<model_id>.json`.
        #[arg(long)]
        models_dir: Option<PathBuf>,
        /// Ensemble file when models are available, else the selection.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every clip proposal.
    Detect {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score clip detections against truth, or boxes against boxes.
    Eval {
        #[arg(long, requires = "truth")]
        detections: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Ground-truth boxes (JSON-lines) for IoU matching.
        #[arg(long, requires = "detected_boxes")]
        labeled_boxes: Option<PathBuf>,
        #[arg(long)]
        detected_boxes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw classified boxes onto the frames.
    Overlay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate synthetic inputs.
    Fixture {
        #[command(subcommand)]
        kind: FixtureKind,
    },
}

#[derive(Subcommand)]
enum FixtureKind {
    /// Two heads, the left one talking, with frames, boxes and truth.
    Scene {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 6)]
        seconds: usize,
    },
    /// A labelled dataset of single-face clips, half of them talking.
    Training {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        clips: usize,
    },
    /// One coarse and one fine texture patch for background rejection.
    Textures {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let prov = cfg.provenance();
    let workers = cli.workers;
    match cli.command {
        Command::Ingest { inputs, out } => {
            let seq = load_frame_sequence(&inputs.manifest)?;
            let tracks = load_head_tracks(&inputs.annotations)?;
            let proposals = all_proposals(&tracks, seq.fps);
            info!("{} tracks, {} proposals", tracks.len(), proposals.len());
            write_jsonl(&out, &prov.stamp_all(&proposals))
        }
        Command::Project {
            inputs,
            out_dir,
            truth,
            dataset,
        } => {
            let seq = load_frame_sequence(&inputs.manifest)?;
            let proposals = all_proposals(&load_head_tracks(&inputs.annotations)?, seq.fps);
            let projected = project_proposals(&seq, &proposals, &cfg, workers)?;
            create_dir(&out_dir)?;
            for (p, (proj, _)) in proposals.iter().zip(&projected) {
                write_projection(&out_dir.join(format!("{}_{:06}.pgm", p.person_id, p.start_frame)), proj, &prov)?;
            }
            if let (Some(truth), Some(dataset)) = (truth, dataset) {
                let labels: BTreeMap<(String, usize), _> = read_jsonl::<ClipTruth>(&truth)?
                    .into_iter()
                    .map(|t| ((t.person_id, t.start_frame), t.label))
                    .collect();
                let examples = proposals
                    .iter()
                    .zip(projected)
                    .filter_map(|(p, (_, features))| {
                        labels.get(&(p.person_id.clone(), p.start_frame)).map(|&label| LabeledExample {
                            features: features.values,
                            label,
                            clip_ref: format!("{}@{}", p.person_id, p.start_frame),
                        })
                    })
                    .collect();
                Dataset::new(examples)?.save(&dataset, &prov)?;
            }
            Ok(())
        }
        Command::Train {
            dataset,
            models_dir,
            kinds,
        } => {
            let data = Dataset::load(&dataset)?;
            create_dir(&models_dir)?;
            for kind in kinds.unwrap_or_else(|| ModelKind::ALL.to_vec()) {
                info!("training {kind} on {} examples", data.len());
                let model = train(kind, &data, &cfg.classifier_hyper, cfg.seed)?;
                model.save(models_dir.join(format!("{kind}.json")), &prov)?;
            }
            Ok(())
        }
        Command::Select {
            metrics,
            validation,
            models_dir,
            out,
        } => {
            let rows = match (&metrics, &validation, &models_dir) {
                (Some(csv), _, _) => read_metric_rows(csv)?,
                (None, Some(val), Some(dir)) => validation_rows(&Dataset::load(val)?, dir)?,
                _ => unreachable!("clap enforces one metric source"),
            };
            let selection = select_top3(&rows)?;
            info!("selected {:?}", selection.chosen);
            match models_dir {
                Some(dir) => build_ensemble(&dir, selection)?.save(&out, &prov),
                None => write_stamped_json(&out, &selection, &prov),
            }
        }
        Command::Detect {
            inputs,
            ensemble,
            out,
        } => {
            let seq = load_frame_sequence(&inputs.manifest)?;
            let tracks = load_head_tracks(&inputs.annotations)?;
            let (ensemble, _) = EnsembleModel::load(&ensemble)?;
            let records = detect(&seq, &tracks, &ensemble, &cfg, workers)?;
            write_jsonl(&out, &records)
        }
        Command::Eval {
            detections,
            truth,
            labeled_boxes,
            detected_boxes,
            out,
        } => {
            if let (Some(det), Some(truth)) = (detections, truth) {
                let records: Vec<DetectionRecord> = read_jsonl(&det)?;
                let truth: Vec<ClipTruth> = read_jsonl(&truth)?;
                let report = evaluate_clips(&records, &truth, prov);
                write_json(&out, &report)
            } else if let (Some(gt), Some(det)) = (labeled_boxes, detected_boxes) {
                let gt: Vec<BoxAnnotation> = read_jsonl(&gt)?;
                let det: Vec<BoxAnnotation> = read_jsonl(&det)?;
                let counts = match_detections(&gt, &det, cfg.iou_threshold)?;
                let tally = DetectionTally {
                    labeled: gt.len() as u64,
                    detected: det.len() as u64,
                    counts,
                };
                let report = BoxReport {
                    iou_threshold: cfg.iou_threshold,
                    f1: f1_from_counts(&counts),
                    inconsistencies: tally.inconsistencies(),
                    tally,
                    provenance: prov,
                };
                write_json(&out, &report)
            } else {
                Err(Error::InvalidArgument(
                    "eval needs --detections with --truth, or --labeled-boxes with --detected-boxes".into(),
                ))
            }
        }
        Command::Overlay {
            manifest,
            detections,
            out_dir,
        } => {
            let seq = load_frame_sequence(&manifest)?;
            let records: Vec<DetectionRecord> = read_jsonl(&detections)?;
            let frames = write_overlays(&seq, &records, &out_dir)?;
            write_stamped_json(&out_dir.join("overlay.json"), &OverlayIndex { frames, detections }, &prov)
        }
        Command::Fixture { kind } => match kind {
            FixtureKind::Scene { out_dir, seconds } => {
                let scene = two_person_scene(seconds, cfg.seed);
                scene.write(&out_dir, &prov).map(|_| ())
            }
            FixtureKind::Training { out, clips } => training_set(clips, &cfg, cfg.seed, workers)?.save(&out, &prov),
            FixtureKind::Textures { out_dir } => {
                create_dir(&out_dir)?;
                let mut index = Vec::new();
                for (name, cycles) in [("coarse", COARSE_TEXTURE_CYCLES), ("fine", FINE_TEXTURE_CYCLES)] {
                    let file = format!("{name}.pgm");
                    write_pgm(&out_dir.join(&file), &texture_scale_pattern(CROP_SIZE, cycles))?;
                    index.push(TextureEntry {
                        file,
                        cycles_per_px: cycles,
                    });
                }
                write_jsonl(&out_dir.join("textures.jsonl"), &prov.stamp_all(&index))
            }
        },
    }
}

#[derive(Serialize)]
struct BoxReport {
    iou_threshold: f64,
    tally: DetectionTally,
    f1: Option<f64>,
    inconsistencies: Vec<String>,
    #[serde(flatten)]
    provenance: Provenance,
}

#[derive(Serialize)]
struct OverlayIndex {
    frames: usize,
    detections: PathBuf,
}

#[derive(Serialize)]
struct TextureEntry {
    file: String,
    cycles_per_px: f64,
}

#[derive(Deserialize)]
struct CsvRow {
    model_id: String,
    accuracy: String,
    auc: f64,
    f1: f64,
}

/// Accuracy may be a fraction or a percent string such as `67%`.
fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    match s.strip_suffix('%') {
        Some(p) => p.trim().parse::<f64>().map(|v| v / 100.0),
        None => s.parse::<f64>(),
    }
    .map_err(|e| format!("{s:?}: {e}"))
}

fn read_metric_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let accuracy = parse_fraction(&rec.accuracy).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        rows.push(MetricRow {
            model_id: rec.model_id,
            accuracy,
            auc: rec.auc,
            f1: rec.f1,
        });
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Every `*.json` model in `dir`, ordered by file name.
fn model_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}

fn validation_rows(val: &Dataset, dir: &Path) -> Result<Vec<MetricRow>> {
    let truth: Vec<_> = val.examples().iter().map(|e| e.label).collect();
    let mut rows = Vec::new();
    for (model_id, path) in model_files(dir)? {
        let model = TrainedModel::load(&path)?;
        let scores = val
            .examples()
            .iter()
            .map(|e| model.score(&e.features))
            .collect::<Result<Vec<_>>>()?;
        let preds: Vec<_> = scores.iter().map(|&s| talkdet::Label::from_score(s)).collect();
        let m = metrics_from_confusion(&confusion(&preds, &truth)?);
        rows.push(MetricRow {
            model_id,
            accuracy: m.accuracy.unwrap_or(0.0),
            auc: auc(&scores, &truth)?,
            f1: m.f1.unwrap_or(0.0),
        });
    }
    Ok(rows)
}

fn build_ensemble(dir: &Path, selection: Selection) -> Result<EnsembleModel> {
    let load = |id: &String| -> Result<EnsembleMember> {
        let path = dir.join(format!("{id}.json"));
        Ok(EnsembleMember {
            model: TrainedModel::load(&path)?,
            model_id: id.clone(),
            path,
        })
    };
    let [a, b, c] = &selection.chosen;
    let members = [load(a)?, load(b)?, load(c)?];
    EnsembleModel::new(members, Some(selection))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_and_percents() {
        assert_eq!(parse_fraction("67%"), Ok(0.67));
        assert_eq!(parse_fraction(" 0.7 "), Ok(0.7));
        assert!(parse_fraction("x%").is_err());
    }
}
