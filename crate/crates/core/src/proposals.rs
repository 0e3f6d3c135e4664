//! Per-person head tracks and fixed-box 3-second clip proposals.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{crop_resize, BoxAnnotation, FrameManifest, GrayFrame};

pub const CLIP_SECONDS: usize = 3;

/// Side of the square crops the flow is computed on.
pub const CROP_SIZE: usize = 100;

/// One person's boxes, strictly increasing in frame index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonTrack {
    pub person_id: String,
    pub boxes: Vec<BoxAnnotation>,
}

/// One person × one 3-second window × a fixed head box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipProposal {
    pub person_id: String,
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    pub crop_box: BoxAnnotation,
    pub fps: u32,
}

impl ClipProposal {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start_frame..=self.end_frame
    }
}

/// `3·fps` crops of `CROP_SIZE × CROP_SIZE`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipStack {
    pub frames: Vec<GrayFrame>,
}

/// Parse a JSON-lines annotation file into per-person tracks, ordered by
/// person id.
pub fn load_head_tracks(path: impl AsRef<Path>) -> Result<Vec<PersonTrack>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut boxes = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let b: BoxAnnotation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if b.w == 0 || b.h == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: "box width and height must be positive".into(),
            });
        }
        boxes.push(b);
    }
    group_tracks(boxes)
}

/// Group boxes by person and sort each track by frame index.
pub fn group_tracks(boxes: Vec<BoxAnnotation>) -> Result<Vec<PersonTrack>> {
    let mut by_person: BTreeMap<String, Vec<BoxAnnotation>> = BTreeMap::new();
    for b in boxes {
        by_person.entry(b.person_id.clone()).or_default().push(b);
    }
    by_person
        .into_iter()
        .map(|(person_id, mut boxes)| {
            boxes.sort_by_key(|b| b.frame_index);
            if let Some(dup) = boxes.windows(2).find(|p| p[0].frame_index == p[1].frame_index) {
                return Err(Error::DuplicateAnnotation {
                    person_id,
                    frame_index: dup[0].frame_index,
                });
            }
            Ok(PersonTrack { person_id, boxes })
        })
        .collect()
}

/// Non-overlapping `3·fps` windows over each maximal run of contiguous frame
/// indices. Trailing partial windows are dropped.
pub fn window_clips(track: &PersonTrack, fps: u32) -> Vec<ClipProposal> {
    let len = CLIP_SECONDS * fps as usize;
    let mut out = Vec::new();
    if len == 0 {
        return out;
    }
    let mut run_start = 0;
    for i in 1..=track.boxes.len() {
        let run_ends = i == track.boxes.len()
            || track.boxes[i].frame_index != track.boxes[i - 1].frame_index + 1;
        if !run_ends {
            continue;
        }
        let run = &track.boxes[run_start..i];
        for chunk in run.chunks_exact(len) {
            out.push(ClipProposal {
                person_id: track.person_id.clone(),
                start_frame: chunk[0].frame_index,
                end_frame: chunk[len - 1].frame_index,
                crop_box: chunk[0].clone(),
                fps,
            });
        }
        run_start = i;
    }
    out
}

/// Crop every window frame at the proposal's fixed box and resize to
/// `CROP_SIZE × CROP_SIZE`.
pub fn extract_clip(seq: &FrameManifest, proposal: &ClipProposal) -> Result<ClipStack> {
    let frames = proposal
        .frames()
        .map(|i| {
            let frame = seq.read_gray(i)?;
            crop_resize(&frame, &proposal.crop_box, CROP_SIZE, CROP_SIZE)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClipStack { frames })
}
