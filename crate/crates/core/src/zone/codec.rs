//! Compact binary form of a Bayes zone model.
//!
//! Layout, all integers big-endian:
//!
//! ```text
//! "ZBM1"  u8 version  i16 v_min  i16 v_max  u16 p_sustain  u16 stations
//! stations x (u8 length, utf-8 id)
//! for in-zone then out-of-zone, for each station: (u16 count, u16 prob) runs
//! ```
//!
//! Probabilities are fixed point over 65535. The runs of one row cover the
//! value range exactly, so a row ends when its counts reach the range width.

use crate::error::{Error, Result};
use crate::types::{BaseStationId, ValueRange};

use super::bayes::BayesZoneModel;

pub const MAGIC: &[u8; 4] = b"ZBM1";
pub const VERSION: u8 = 1;
/// Fixed-point denominator.
pub const SCALE: u32 = 65535;

/// Quantizes one probability row. Rounding is half-up and the rounding
/// residual goes to the largest entry (lowest index on ties), so non-empty
/// rows sum to exactly `SCALE`.
pub fn quantize_row(row: &[f64]) -> Vec<u16> {
    let mut q: Vec<i64> = row
        .iter()
        .map(|p| (p * SCALE as f64 + 0.5).floor().clamp(0.0, SCALE as f64) as i64)
        .collect();
    let total: i64 = q.iter().sum();
    if total > 0 {
        let mut top = 0;
        for (i, v) in q.iter().enumerate() {
            if *v > q[top] {
                top = i;
            }
        }
        q[top] += SCALE as i64 - total;
    }
    q.into_iter().map(|v| v.clamp(0, SCALE as i64) as u16).collect()
}

fn quantize_p(p: f64) -> u16 {
    (p * SCALE as f64 + 0.5).floor().clamp(1.0, SCALE as f64 - 1.0) as u16
}

fn dequantize(q: &[u16]) -> Vec<f64> {
    q.iter().map(|v| *v as f64 / SCALE as f64).collect()
}

/// The model as the terminal sees it after a round trip through the codec.
pub fn quantize(model: &BayesZoneModel) -> BayesZoneModel {
    let rows = |rs: &[Vec<f64>]| rs.iter().map(|r| dequantize(&quantize_row(r))).collect();
    BayesZoneModel {
        range: model.range,
        p_sustain: quantize_p(model.p_sustain) as f64 / SCALE as f64,
        stations: model.stations.clone(),
        in_zone: rows(&model.in_zone),
        out_zone: rows(&model.out_zone),
    }
}

/// Run-length pairs `(count, value)` of a row.
pub fn runs(row: &[u16]) -> Vec<(u16, u16)> {
    let mut out: Vec<(u16, u16)> = Vec::new();
    for v in row {
        match out.last_mut() {
            Some((n, last)) if *last == *v && *n < u16::MAX => *n += 1,
            _ => out.push((1, *v)),
        }
    }
    out
}

pub fn encode(model: &BayesZoneModel) -> Result<Vec<u8>> {
    model.validate()?;
    let (lo, hi) = (model.range.min(), model.range.max());
    let (Ok(lo), Ok(hi)) = (i16::try_from(lo), i16::try_from(hi)) else {
        return Err(Error::InvalidArgument("value range does not fit 16 bits".into()));
    };
    let count = u16::try_from(model.stations.len())
        .map_err(|_| Error::InvalidArgument("too many stations for the codec".into()))?;
    let mut out = Vec::with_capacity(256);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&lo.to_be_bytes());
    out.extend_from_slice(&hi.to_be_bytes());
    out.extend_from_slice(&quantize_p(model.p_sustain).to_be_bytes());
    out.extend_from_slice(&count.to_be_bytes());
    for b in &model.stations {
        let bytes = b.as_str().as_bytes();
        let len = u8::try_from(bytes.len())
            .map_err(|_| Error::InvalidArgument(format!("station id {b} is longer than 255 bytes")))?;
        out.push(len);
        out.extend_from_slice(bytes);
    }
    for row in model.in_zone.iter().chain(&model.out_zone) {
        for (n, v) in runs(&quantize_row(row)) {
            out.extend_from_slice(&n.to_be_bytes());
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Malformed(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn i16(&mut self) -> Result<i16> {
        let b = self.take(2)?;
        Ok(i16::from_be_bytes([b[0], b[1]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<BayesZoneModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Malformed("bad magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Malformed(format!("unsupported version {version}")));
    }
    let (lo, hi) = (r.i16()?, r.i16()?);
    let range = ValueRange::new(lo as i32, hi as i32)
        .map_err(|e| Error::Malformed(format!("bad value range: {e}")))?;
    let p = r.u16()?;
    if p == 0 || p as u32 == SCALE {
        return Err(Error::Malformed("sustain probability must lie strictly inside (0, 1)".into()));
    }
    let n = r.u16()? as usize;
    let mut stations = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u8()? as usize;
        let id = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Malformed("station id is not utf-8".into()))?;
        stations.push(BaseStationId::new(id).map_err(|e| Error::Malformed(e.to_string()))?);
    }
    if stations.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Malformed("stations must be sorted and distinct".into()));
    }
    let width = range.len();
    let mut rows = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        let mut row: Vec<u16> = Vec::with_capacity(width);
        while row.len() < width {
            let (count, v) = (r.u16()? as usize, r.u16()?);
            if count == 0 || row.len() + count > width {
                return Err(Error::Malformed(format!("run of {count} overflows the value range")));
            }
            row.extend(std::iter::repeat_n(v, count));
        }
        let total: u32 = row.iter().map(|v| *v as u32).sum();
        if total != 0 && total != SCALE {
            return Err(Error::Malformed(format!("row sums to {total}/{SCALE}")));
        }
        rows.push(dequantize(&row));
    }
    if r.pos != bytes.len() {
        return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let out_zone = rows.split_off(n);
    Ok(BayesZoneModel {
        range,
        p_sustain: p as f64 / SCALE as f64,
        stations,
        in_zone: rows,
        out_zone,
    })
}
