//! `frames.bin`: little-endian container of normalized frames.
//!
//! ```text
//! magic   4 bytes  "FLF1"
//! d       u32      players per frame
//! n       u64      number of records
//! record (repeated n times):
//!   t           f64
//!   segment     u32
//!   possession  u8    0 = home, 1 = away, 2 = unassigned
//!   flags       u8    bit 0: held out by subsampling
//!   mean        2 × f64
//!   std         2 × f64
//!   y           d × 2 × f64, player-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::frame::{NormalizedFrame, Possession};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FLF1";
const FLAG_HELD_OUT: u8 = 1;

pub fn encode_frames<W: Write>(mut w: W, frames: &[NormalizedFrame]) -> std::io::Result<()> {
    let d = frames.first().map(|f| f.d()).unwrap_or(0);
    w.write_all(MAGIC)?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(frames.len() as u64).to_le_bytes())?;
    for f in frames {
        assert_eq!(f.d(), d, "all frames must have the same player count");
        w.write_all(&f.timestamp.to_le_bytes())?;
        w.write_all(&f.segment.to_le_bytes())?;
        w.write_all(&[f.possession.to_byte()])?;
        w.write_all(&[if f.held_out { FLAG_HELD_OUT } else { 0 }])?;
        for v in f.frame_mean.iter().chain(&f.frame_std) {
            w.write_all(&v.to_le_bytes())?;
        }
        for p in &f.y {
            w.write_all(&p[0].to_le_bytes())?;
            w.write_all(&p[1].to_le_bytes())?;
        }
    }
    w.flush()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated frames file at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_frames(bytes: &[u8]) -> Result<Vec<NormalizedFrame>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("missing FLF1 magic".into()));
    }
    let d = c.u32()? as usize;
    let n = c.u64()? as usize;
    let record = 8 + 4 + 1 + 1 + 32 + 16 * d;
    if bytes.len() != 16 + n * record {
        return Err(Error::Format(format!(
            "expected {} bytes for {n} frames of {d} players, found {}",
            16 + n * record,
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let timestamp = c.f64()?;
        let segment = c.u32()?;
        let possession =
            Possession::from_byte(c.u8()?).ok_or_else(|| Error::Format("invalid possession byte".into()))?;
        let flags = c.u8()?;
        let frame_mean = [c.f64()?, c.f64()?];
        let frame_std = [c.f64()?, c.f64()?];
        let mut y = Vec::with_capacity(d);
        for _ in 0..d {
            y.push([c.f64()?, c.f64()?]);
        }
        out.push(NormalizedFrame {
            y,
            frame_mean,
            frame_std,
            timestamp,
            possession,
            segment,
            held_out: flags & FLAG_HELD_OUT != 0,
        });
    }
    Ok(out)
}

pub fn write_frames(path: &Path, frames: &[NormalizedFrame]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    encode_frames(BufWriter::new(file), frames).map_err(|e| Error::io(path, e))
}

pub fn read_frames(path: &Path) -> Result<Vec<NormalizedFrame>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_frames(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            raw in proptest::collection::vec(
                (any::<f64>(), 0u32..5, 0u8..3, any::<bool>(), proptest::collection::vec(-5.0..5.0f64, 6)),
                0..20,
            )
        ) {
            let frames: Vec<NormalizedFrame> = raw
                .into_iter()
                .map(|(t, seg, pos, held, ys)| NormalizedFrame {
                    y: ys.chunks(2).map(|c| [c[0], c[1]]).collect(),
                    frame_mean: [if t.is_finite() { t.sin() } else { 0.0 }, 2.0],
                    frame_std: [1.5, 0.5],
                    timestamp: if t.is_finite() { t } else { 0.0 },
                    possession: Possession::from_byte(pos).unwrap(),
                    segment: seg,
                    held_out: held,
                })
                .collect();
            let mut buf = Vec::new();
            encode_frames(&mut buf, &frames).unwrap();
            prop_assert_eq!(&buf[..4], MAGIC);
            prop_assert_eq!(decode_frames(&buf).unwrap(), frames);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(decode_frames(b"XXXX\0\0\0\0\0\0\0\0\0\0\0\0").is_err());
        let f = NormalizedFrame::from_model_coords(vec![[1.0, 2.0]; 3]);
        let mut buf = Vec::new();
        encode_frames(&mut buf, &[f]).unwrap();
        assert!(decode_frames(&buf[..buf.len() - 1]).is_err());
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
    }
}
