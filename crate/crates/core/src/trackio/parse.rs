use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use super::frame::{Possession, TrackingFrame, PLAYERS};
use crate::error::{Error, Result};
use crate::gausscore::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    JsonLines,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" | "json-lines" | "ndjson" => Ok(InputFormat::JsonLines),
            other => Err(Error::Config(format!("unknown input format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParsedTracking {
    pub frames: Vec<TrackingFrame>,
    /// Rows discarded because at least one player was not tracked.
    pub dropped_incomplete: usize,
}

pub fn parse_tracking(path: &Path, format: InputFormat) -> Result<ParsedTracking> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        InputFormat::Csv => parse_csv(reader),
        InputFormat::JsonLines => parse_jsonl(reader),
    }
}

/// Coordinates that mark an untracked player.
fn is_missing(field: &str) -> bool {
    matches!(field.trim(), "" | "NaN" | "nan" | "NA" | "null")
}

fn parse_f64(field: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what}: {field:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{what}: {field:?} is not finite"),
        });
    }
    Ok(v)
}

fn sort_by_time(frames: &mut [TrackingFrame]) {
    frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
}

/// CSV layout: `t,player1_x,player1_y,...,player11_x,player11_y,possession,lineup`.
pub fn parse_csv<R: Read>(reader: R) -> Result<ParsedTracking> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::EmptyInput);
    }
    let expected = 3 + 2 * PLAYERS;
    if headers.len() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected {expected} columns, header has {}", headers.len()),
        });
    }
    let mut want = vec!["t".to_string()];
    for k in 1..=PLAYERS {
        want.push(format!("player{k}_x"));
        want.push(format!("player{k}_y"));
    }
    want.push("possession".into());
    want.push("lineup".into());
    for (got, want) in headers.iter().zip(&want) {
        if got.trim() != want {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header column {got:?}, wanted {want:?}"),
            });
        }
    }

    let mut out = ParsedTracking::default();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        rows += 1;
        if record.len() != expected {
            return Err(Error::Parse {
                line,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let t = parse_f64(&record[0], line, "timestamp")?;
        let mut positions: Vec<Point> = Vec::with_capacity(PLAYERS);
        let mut complete = true;
        for k in 0..PLAYERS {
            let (xs, ys) = (&record[1 + 2 * k], &record[2 + 2 * k]);
            if is_missing(xs) || is_missing(ys) {
                complete = false;
                continue;
            }
            let x = parse_f64(xs, line, &format!("player{}_x", k + 1))?;
            let y = parse_f64(ys, line, &format!("player{}_y", k + 1))?;
            positions.push([x, y]);
        }
        let possession = Possession::from_code(&record[expected - 2]).ok_or_else(|| Error::Parse {
            line,
            message: format!("possession {:?} is not one of H, A, N", &record[expected - 2]),
        })?;
        if !complete {
            out.dropped_incomplete += 1;
            continue;
        }
        out.frames.push(TrackingFrame {
            timestamp: t,
            positions,
            possession,
            lineup_id: record[expected - 1].trim().to_string(),
        });
    }
    if rows == 0 {
        return Err(Error::EmptyInput);
    }
    sort_by_time(&mut out.frames);
    Ok(out)
}

#[derive(Deserialize)]
struct JsonFrame {
    t: f64,
    xy: Vec<Option<[Option<f64>; 2]>>,
    possession: String,
    lineup: serde_json::Value,
}

/// One JSON object per line: `{"t": .., "xy": [[x, y], ...], "possession": "H", "lineup": ..}`.
pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<ParsedTracking> {
    let mut out = ParsedTracking::default();
    let mut rows = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx as u64 + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let raw: JsonFrame = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if !raw.t.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                message: "timestamp is not finite".into(),
            });
        }
        let possession = Possession::from_code(&raw.possession).ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("possession {:?} is not one of H, A, N", raw.possession),
        })?;
        let lineup_id = match raw.lineup {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        if raw.xy.len() > PLAYERS {
            return Err(Error::Parse {
                line: lineno,
                message: format!("{} players listed, at most {PLAYERS} allowed", raw.xy.len()),
            });
        }
        let positions: Vec<Point> = raw
            .xy
            .iter()
            .filter_map(|p| match p {
                Some([Some(x), Some(y)]) => Some([*x, *y]),
                _ => None,
            })
            .collect();
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: lineno,
                message: "non-finite coordinate".into(),
            });
        }
        if positions.len() < PLAYERS {
            out.dropped_incomplete += 1;
            continue;
        }
        out.frames.push(TrackingFrame {
            timestamp: raw.t,
            positions,
            possession,
            lineup_id,
        });
    }
    if rows == 0 {
        return Err(Error::EmptyInput);
    }
    sort_by_time(&mut out.frames);
    Ok(out)
}

/// Write frames in the CSV layout accepted by [`parse_csv`].
pub fn write_csv<W: std::io::Write>(writer: W, frames: &[TrackingFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    for k in 1..=PLAYERS {
        header.push(format!("player{k}_x"));
        header.push(format!("player{k}_y"));
    }
    header.push("possession".into());
    header.push("lineup".into());
    let fmt_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(&header).map_err(fmt_err)?;
    for f in frames {
        let mut rec = vec![f.timestamp.to_string()];
        for p in &f.positions {
            rec.push(p[0].to_string());
            rec.push(p[1].to_string());
        }
        rec.push(f.possession.code().to_string());
        rec.push(f.lineup_id.clone());
        w.write_record(&rec).map_err(fmt_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}
