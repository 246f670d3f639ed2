//! Line-oriented trace and fingerprint files.
//!
//! Trace files start with `#range <min> <max>` followed by sample lines
//! `t=<sec> <station>:<rss> ...` and annotation lines `@cell <sec> <cell>` /
//! `@motion <sec> still|moving`. Fingerprint files use the same sample lines
//! grouped under `!cell <cell>` block headers. Other lines starting with `#`
//! are comments.
//!
//! The writers emit a canonical form: header first, then lines ordered by
//! timestamp, with `@cell` before `@motion` before samples at equal times.
//! Parsing a canonical file and writing it again reproduces it byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{
    BaseStationId, CellId, Fingerprint, FingerprintSet, Motion, Observation, Sample, Trace,
    ValueRange,
};

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    parse_trace(&read(path.as_ref())?)
}

pub fn save_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    write(path.as_ref(), &write_trace(trace))
}

pub fn load_fingerprints(path: impl AsRef<Path>) -> Result<FingerprintSet> {
    parse_fingerprints(&read(path.as_ref())?)
}

pub fn save_fingerprints(path: impl AsRef<Path>, set: &FingerprintSet) -> Result<()> {
    write(path.as_ref(), &write_fingerprints(set))
}

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Lines that carry content, with 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub(crate) fn parse_range_header(line_no: usize, line: &str) -> Result<ValueRange> {
    let mut parts = line.split_whitespace().skip(1);
    let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(Error::parse(line_no, "expected `#range <min> <max>`"));
    };
    let min = a
        .parse::<i32>()
        .map_err(|e| Error::parse(line_no, format!("bad range minimum {a:?}: {e}")))?;
    let max = b
        .parse::<i32>()
        .map_err(|e| Error::parse(line_no, format!("bad range maximum {b:?}: {e}")))?;
    ValueRange::new(min, max).map_err(|e| Error::parse(line_no, e.to_string()))
}

pub(crate) fn parse_number(line_no: usize, what: &str, token: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad {what} {token:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line_no, format!("non-finite {what} {token:?}")));
    }
    Ok(v)
}

fn parse_sample_line(line_no: usize, line: &str) -> Result<Sample> {
    let mut tokens = line.split_whitespace();
    let head = tokens.next().unwrap_or_default();
    let ts = head
        .strip_prefix("t=")
        .ok_or_else(|| Error::parse(line_no, "sample line must start with `t=<sec>`"))?;
    let timestamp = parse_number(line_no, "timestamp", ts)?;
    let mut observations = Vec::new();
    for tok in tokens {
        let (station, rss) = tok
            .rsplit_once(':')
            .ok_or_else(|| Error::parse(line_no, format!("expected <station>:<rss>, got {tok:?}")))?;
        let station =
            BaseStationId::new(station).map_err(|e| Error::parse(line_no, e.to_string()))?;
        let rss = parse_number(line_no, "rss", rss)?;
        observations.push(Observation::new(station, rss));
    }
    Sample::new(timestamp, observations).map_err(|e| Error::parse(line_no, e.to_string()))
}

fn check_in_range(line_no: usize, sample: &Sample, range: &ValueRange) -> Result<()> {
    if let Some(o) = sample.observations().iter().find(|o| !range.contains(o.rss)) {
        return Err(Error::parse(
            line_no,
            format!(
                "rss {} of station {} outside range [{}, {}]",
                o.rss,
                o.station,
                range.min(),
                range.max()
            ),
        ));
    }
    Ok(())
}

fn annotation_parts<'a>(line_no: usize, line: &'a str, tag: &str) -> Result<(f64, &'a str)> {
    let mut parts = line.split_whitespace().skip(1);
    let (Some(ts), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(Error::parse(line_no, format!("expected `{tag} <sec> <value>`")));
    };
    Ok((parse_number(line_no, "timestamp", ts)?, value))
}

struct Monotone {
    what: &'static str,
    last: f64,
}

impl Monotone {
    fn new(what: &'static str) -> Self {
        Self {
            what,
            last: f64::NEG_INFINITY,
        }
    }

    fn check(&mut self, line_no: usize, t: f64) -> Result<()> {
        if t < self.last {
            return Err(Error::parse(
                line_no,
                format!("{} timestamp {t} precedes {}", self.what, self.last),
            ));
        }
        self.last = t;
        Ok(())
    }
}

pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut range = ValueRange::default();
    let mut samples = Vec::new();
    let mut truth = Vec::new();
    let mut motion = Vec::new();
    let (mut sample_clock, mut cell_clock, mut motion_clock) = (
        Monotone::new("sample"),
        Monotone::new("@cell"),
        Monotone::new("@motion"),
    );
    for (line_no, line) in content_lines(text) {
        if line.starts_with("#range") {
            if !samples.is_empty() {
                return Err(Error::parse(line_no, "#range header after samples"));
            }
            range = parse_range_header(line_no, line)?;
        } else if line.starts_with('#') {
            continue;
        } else if line.starts_with("@cell") {
            let (t, cell) = annotation_parts(line_no, line, "@cell")?;
            cell_clock.check(line_no, t)?;
            let cell = CellId::new(cell).map_err(|e| Error::parse(line_no, e.to_string()))?;
            truth.push((t, cell));
        } else if line.starts_with("@motion") {
            let (t, mark) = annotation_parts(line_no, line, "@motion")?;
            motion_clock.check(line_no, t)?;
            let mark: Motion = mark.parse().map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
            motion.push((t, mark));
        } else if line.starts_with("t=") {
            let sample = parse_sample_line(line_no, line)?;
            sample_clock.check(line_no, sample.timestamp())?;
            check_in_range(line_no, &sample, &range)?;
            samples.push(sample);
        } else {
            return Err(Error::parse(line_no, format!("unrecognised line {line:?}")));
        }
    }
    Trace::new(range, samples, truth, motion)
}

pub fn parse_fingerprints(text: &str) -> Result<FingerprintSet> {
    let mut range = ValueRange::default();
    let mut blocks: Vec<(usize, CellId, Vec<Sample>)> = Vec::new();
    for (line_no, line) in content_lines(text) {
        if line.starts_with("#range") {
            if !blocks.is_empty() {
                return Err(Error::parse(line_no, "#range header after cell blocks"));
            }
            range = parse_range_header(line_no, line)?;
        } else if line.starts_with('#') {
            continue;
        } else if let Some(rest) = line.strip_prefix("!cell") {
            let mut parts = rest.split_whitespace();
            let (Some(cell), None) = (parts.next(), parts.next()) else {
                return Err(Error::parse(line_no, "expected `!cell <cell>`"));
            };
            let cell = CellId::new(cell).map_err(|e| Error::parse(line_no, e.to_string()))?;
            blocks.push((line_no, cell, Vec::new()));
        } else if line.starts_with("t=") {
            let sample = parse_sample_line(line_no, line)?;
            check_in_range(line_no, &sample, &range)?;
            match blocks.last_mut() {
                Some((_, _, samples)) => samples.push(sample),
                None => return Err(Error::parse(line_no, "sample before any `!cell` header")),
            }
        } else {
            return Err(Error::parse(line_no, format!("unrecognised line {line:?}")));
        }
    }
    if blocks.is_empty() {
        return Err(Error::InsufficientData("fingerprint file is empty".into()));
    }
    let fps = blocks
        .into_iter()
        .map(|(line_no, cell, samples)| {
            Fingerprint::new(cell, samples).map_err(|e| Error::parse(line_no, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    FingerprintSet::new(range, fps)
}

fn write_sample(out: &mut String, s: &Sample) {
    let _ = write!(out, "t={}", s.timestamp());
    for o in s.observations() {
        let _ = write!(out, " {}:{}", o.station, o.rss);
    }
    out.push('\n');
}

pub fn write_trace(trace: &Trace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "#range {} {}", trace.range.min(), trace.range.max());
    let (mut gi, mut mi, mut si) = (0, 0, 0);
    let (truth, marks, samples) = (trace.ground_truth(), trace.motion_marks(), trace.samples());
    loop {
        let next = [
            truth.get(gi).map(|g| g.0),
            marks.get(mi).map(|m| m.0),
            samples.get(si).map(|s| s.timestamp()),
        ];
        // earliest timestamp wins, ties resolved in array order
        let Some((which, _)) = next
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (i, t)))
            .fold(None, |best: Option<(usize, f64)>, (i, t)| match best {
                Some((_, bt)) if bt <= t => best,
                _ => Some((i, t)),
            })
        else {
            break;
        };
        match which {
            0 => {
                let _ = writeln!(out, "@cell {} {}", truth[gi].0, truth[gi].1);
                gi += 1;
            }
            1 => {
                let _ = writeln!(out, "@motion {} {}", marks[mi].0, marks[mi].1);
                mi += 1;
            }
            _ => {
                write_sample(&mut out, &samples[si]);
                si += 1;
            }
        }
    }
    out
}

pub fn write_fingerprints(set: &FingerprintSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "#range {} {}", set.range.min(), set.range.max());
    for (cell, fp) in set.iter() {
        let _ = writeln!(out, "!cell {cell}");
        for s in fp.samples() {
            write_sample(&mut out, s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_trace() {
        let t = parse_trace("#range 1 100\nt=0 ap1:50\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.samples()[0].len(), 1);
        assert!(!t.is_labeled());
    }

    #[test]
    fn decreasing_timestamps_name_the_line() {
        let err = parse_trace("#range 1 100\nt=5 a:1\n\nt=4 a:2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_station_is_rejected() {
        let err = parse_trace("t=0 a:1 a:2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_range_rss_is_rejected() {
        assert!(parse_trace("#range 1 10\nt=0 a:11\n").is_err());
    }

    #[test]
    fn station_ids_may_contain_colons() {
        let t = parse_trace("t=0 00:1a:2b:3c:4d:5e:42\n").unwrap();
        let o = &t.samples()[0].observations()[0];
        assert_eq!(o.station.as_str(), "00:1a:2b:3c:4d:5e");
        assert_eq!(o.rss, 42.0);
    }

    #[test]
    fn canonical_trace_round_trips_bytes() {
        let text = "#range 1 100\n@cell 0 c1\n@motion 0 still\nt=0 a:50 b:60\n\
                    t=1 a:51\n@cell 2 c2\n@motion 2 moving\nt=2 b:61.5\n";
        let trace = parse_trace(text).unwrap();
        assert_eq!(write_trace(&trace), text);
    }

    #[test]
    fn fingerprints_group_by_cell() {
        let text = "#range 1 100\n!cell a\nt=0 x:1\nt=1 x:2\n!cell b\nt=0 x:3\nt=1 x:4\n";
        let set = parse_fingerprints(text).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.iter().all(|(_, f)| f.samples().len() == 2));
        assert_eq!(write_fingerprints(&set), text);
    }

    #[test]
    fn duplicate_cell_blocks_merge() {
        let text = "!cell a\nt=0 x:1\n!cell b\nt=0 x:3\n!cell a\nt=1 x:2\n";
        let set = parse_fingerprints(text).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.get(&CellId::new("a").unwrap()).unwrap().samples().len(), 2);
        assert_eq!(set.sample_count(), 3);
    }

    #[test]
    fn fingerprint_errors() {
        assert!(matches!(
            parse_fingerprints("#range 1 100\n"),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            parse_fingerprints("!cell a\n!cell b\nt=0 x:1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_fingerprints("t=0 x:1\n").is_err());
    }
}
