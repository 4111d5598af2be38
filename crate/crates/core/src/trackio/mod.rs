//! Parse, segment, orient, subsample and normalize tracking data.

mod binary;
mod frame;
mod parse;

use serde::{Deserialize, Serialize};

pub use binary::{decode_frames, encode_frames, read_frames, write_frames, MAGIC};
pub use frame::{
    normalize, orient_attack_right, segment_by_lineup, split_by_stride, subsample, AttackSide, NormalizedFrame,
    Possession, Segment, TrackingFrame, PLAYERS,
};
pub use parse::{parse_csv, parse_jsonl, parse_tracking, write_csv, InputFormat, ParsedTracking};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub stride: usize,
    pub min_segment_sec: f64,
    /// Attacking side per surviving segment; a single entry applies to all.
    pub attack_sides: Vec<AttackSide>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            stride: 5,
            min_segment_sec: 300.0,
            attack_sides: vec![AttackSide::Right],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub dropped_incomplete: usize,
    pub degenerate: usize,
    pub segments: usize,
    pub kept: usize,
    pub held_out: usize,
}

/// Segment, orient, subsample and normalize parsed frames.
///
/// Frames on the stride grid are returned with `held_out = false`; the frames
/// skipped by subsampling are kept too, flagged `held_out = true`, so the
/// mixture classifier can train on data disjoint from the evaluation set.
pub fn prepare_frames(parsed: ParsedTracking, opts: &IngestOptions) -> Result<(Vec<NormalizedFrame>, IngestStats)> {
    if opts.stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let mut stats = IngestStats {
        dropped_incomplete: parsed.dropped_incomplete,
        ..Default::default()
    };
    let segments = segment_by_lineup(parsed.frames, opts.min_segment_sec);
    if opts.attack_sides.len() != 1 && opts.attack_sides.len() != segments.len() {
        return Err(Error::Config(format!(
            "{} attack sides given for {} segments",
            opts.attack_sides.len(),
            segments.len()
        )));
    }
    stats.segments = segments.len();
    let mut out = Vec::new();
    for (si, seg) in segments.iter().enumerate() {
        let side = opts.attack_sides[if opts.attack_sides.len() == 1 { 0 } else { si }];
        let seg = orient_attack_right(seg, side);
        for (i, raw) in seg.frames.iter().enumerate() {
            match normalize(raw) {
                Ok(mut nf) => {
                    nf.segment = si as u32;
                    nf.held_out = i % opts.stride != 0;
                    if nf.held_out {
                        stats.held_out += 1;
                    } else {
                        stats.kept += 1;
                    }
                    out.push(nf);
                }
                Err(Error::DegenerateFrame { .. }) => stats.degenerate += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok((out, stats))
}

/// Frames on the stride grid only.
pub fn kept_frames(frames: &[NormalizedFrame]) -> Vec<NormalizedFrame> {
    frames.iter().filter(|f| !f.held_out).cloned().collect()
}

/// Frames skipped by subsampling.
pub fn held_out_frames(frames: &[NormalizedFrame]) -> Vec<NormalizedFrame> {
    frames.iter().filter(|f| f.held_out).cloned().collect()
}
