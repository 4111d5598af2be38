use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gausscore::Point;

/// Number of players per team on the pitch.
pub const PLAYERS: usize = 11;

/// Which team holds the ball in a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Possession {
    Home,
    Away,
    Unassigned,
}

impl Possession {
    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "H" | "h" => Some(Possession::Home),
            "A" | "a" => Some(Possession::Away),
            "N" | "n" => Some(Possession::Unassigned),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Possession::Home => "H",
            Possession::Away => "A",
            Possession::Unassigned => "N",
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Possession::Home => 0,
            Possession::Away => 1,
            Possession::Unassigned => 2,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Possession::Home),
            1 => Some(Possession::Away),
            2 => Some(Possession::Unassigned),
            _ => None,
        }
    }

    pub const ALL: [Possession; 3] = [Possession::Home, Possession::Away, Possession::Unassigned];
}

/// One raw snapshot of the team, positions in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingFrame {
    pub timestamp: f64,
    pub positions: Vec<Point>,
    pub possession: Possession,
    pub lineup_id: String,
}

/// A maximal run of frames sharing one lineup.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub frames: Vec<TrackingFrame>,
    pub lineup_id: String,
    pub duration: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackSide {
    Left,
    Right,
}

/// A frame centered on its mean location and scaled per axis.
///
/// `timestamp`, `possession`, `segment` and `held_out` are carried through so
/// downstream stages can report and split without the raw data.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedFrame {
    pub y: Vec<Point>,
    pub frame_mean: Point,
    pub frame_std: Point,
    pub timestamp: f64,
    pub possession: Possession,
    pub segment: u32,
    /// Set on frames dropped by subsampling; used only as held-out training data.
    pub held_out: bool,
}

impl NormalizedFrame {
    /// A frame whose coordinates are already in model units.
    pub fn from_model_coords(y: Vec<Point>) -> Self {
        Self {
            y,
            frame_mean: [0.0, 0.0],
            frame_std: [1.0, 1.0],
            timestamp: 0.0,
            possession: Possession::Unassigned,
            segment: 0,
            held_out: false,
        }
    }

    pub fn d(&self) -> usize {
        self.y.len()
    }

    /// Row-major flattening `(x_1, y_1, ..., x_d, y_d)`.
    pub fn flatten(&self) -> Vec<f64> {
        self.y.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    /// Inverse of [`normalize`] using the stored mean and spread.
    pub fn denormalize(&self) -> Vec<Point> {
        self.y
            .iter()
            .map(|p| {
                [
                    p[0] * self.frame_std[0] + self.frame_mean[0],
                    p[1] * self.frame_std[1] + self.frame_mean[1],
                ]
            })
            .collect()
    }
}

/// Per-axis z-scores with the population (divide-by-d) standard deviation.
pub fn normalize(frame: &TrackingFrame) -> Result<NormalizedFrame> {
    let d = frame.positions.len();
    if d == 0 {
        return Err(Error::EmptyInput);
    }
    let n = d as f64;
    let mut mean = [0.0; 2];
    for p in &frame.positions {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    let mut var = [0.0; 2];
    for p in &frame.positions {
        var[0] += (p[0] - mean[0]).powi(2);
        var[1] += (p[1] - mean[1]).powi(2);
    }
    let std = [(var[0] / n).sqrt(), (var[1] / n).sqrt()];
    for (axis, s) in std.iter().enumerate() {
        if !(*s > 1e-12) || !s.is_finite() {
            return Err(Error::DegenerateFrame { axis });
        }
    }
    let y = frame
        .positions
        .iter()
        .map(|p| [(p[0] - mean[0]) / std[0], (p[1] - mean[1]) / std[1]])
        .collect();
    Ok(NormalizedFrame {
        y,
        frame_mean: mean,
        frame_std: std,
        timestamp: frame.timestamp,
        possession: frame.possession,
        segment: 0,
        held_out: false,
    })
}

/// Split a frame-ordered stream into maximal constant-lineup runs, dropping
/// runs shorter than `min_duration` seconds.
///
/// A run lasts from its first timestamp to the first timestamp of the next
/// run (the substitution time), or to its own last timestamp at the end of
/// the stream.
pub fn segment_by_lineup(frames: Vec<TrackingFrame>, min_duration: f64) -> Vec<Segment> {
    let mut runs: Vec<Vec<TrackingFrame>> = Vec::new();
    for f in frames {
        match runs.last_mut() {
            Some(run) if run[0].lineup_id == f.lineup_id => run.push(f),
            _ => runs.push(vec![f]),
        }
    }
    let starts: Vec<f64> = runs.iter().map(|r| r[0].timestamp).collect();
    runs.into_iter()
        .enumerate()
        .filter_map(|(i, run)| {
            let start = run[0].timestamp;
            let end = starts
                .get(i + 1)
                .copied()
                .unwrap_or_else(|| run.last().map(|f| f.timestamp).unwrap_or(start));
            let duration = end - start;
            (duration >= min_duration).then(|| Segment {
                lineup_id: run[0].lineup_id.clone(),
                frames: run,
                duration,
            })
        })
        .collect()
}

/// Keep frames `0, stride, 2·stride, ...`.
pub fn subsample(segment: &Segment, stride: usize) -> Segment {
    let (kept, _) = split_by_stride(&segment.frames, stride);
    Segment {
        frames: kept,
        lineup_id: segment.lineup_id.clone(),
        duration: segment.duration,
    }
}

/// Frames on the stride grid and the remainder, both in original order.
pub fn split_by_stride<T: Clone>(frames: &[T], stride: usize) -> (Vec<T>, Vec<T>) {
    let stride = stride.max(1);
    let mut kept = Vec::with_capacity(frames.len().div_ceil(stride));
    let mut rest = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        if i % stride == 0 {
            kept.push(f.clone());
        } else {
            rest.push(f.clone());
        }
    }
    (kept, rest)
}

/// Point-reflect every position when the team attacks to the left.
pub fn orient_attack_right(segment: &Segment, attacking_side: AttackSide) -> Segment {
    let mut out = segment.clone();
    if attacking_side == AttackSide::Left {
        for f in &mut out.frames {
            for p in &mut f.positions {
                *p = [-p[0], -p[1]];
            }
        }
    }
    out
}
