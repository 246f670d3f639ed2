//! Domain types shared by every module: identifiers, samples, fingerprints
//! and annotated traces.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self> {
                let id = id.into();
                if id.is_empty() || id.chars().any(char::is_whitespace) {
                    return Err(Error::invariant(format!(
                        "{} must be a non-empty token, got {:?}",
                        stringify!($name),
                        id
                    )));
                }
                Ok(Self(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a base station (access point), e.g. a MAC-like token.
    BaseStationId
);
string_id!(
    /// Identifier of a cell, the smallest location unit the system distinguishes.
    CellId
);

/// Discrete signal-strength value range `[min, max]` of a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueRange {
    min: i32,
    max: i32,
}

impl Default for ValueRange {
    fn default() -> Self {
        Self { min: 1, max: 100 }
    }
}

impl ValueRange {
    pub fn new(min: i32, max: i32) -> Result<Self> {
        if min <= 0 {
            return Err(Error::invariant(format!(
                "value range minimum must be positive, got {min}"
            )));
        }
        if max < min {
            return Err(Error::invariant(format!(
                "value range maximum {max} below minimum {min}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> i32 {
        self.min
    }

    pub fn max(&self) -> i32 {
        self.max
    }

    /// Number of distinct integer values in the range.
    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, rss: f64) -> bool {
        rss >= self.min as f64 && rss <= self.max as f64
    }

    pub fn clamp(&self, rss: f64) -> f64 {
        rss.clamp(self.min as f64, self.max as f64)
    }

    /// Iterator over all integer values of the range.
    pub fn values(&self) -> impl Iterator<Item = i32> {
        self.min..=self.max
    }
}

/// A single base station measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub station: BaseStationId,
    pub rss: f64,
}

impl Observation {
    pub fn new(station: BaseStationId, rss: f64) -> Self {
        Self { station, rss }
    }
}

/// A set of same-time same-place observations, at most one per station.
///
/// Observations are kept sorted by station id.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    timestamp: f64,
    observations: Vec<Observation>,
}

impl Sample {
    pub fn new(timestamp: f64, mut observations: Vec<Observation>) -> Result<Self> {
        if !timestamp.is_finite() {
            return Err(Error::invariant("sample timestamp must be finite"));
        }
        observations.sort_by(|a, b| a.station.cmp(&b.station));
        if let Some(w) = observations
            .windows(2)
            .find(|w| w[0].station == w[1].station)
        {
            return Err(Error::invariant(format!(
                "duplicate station {} in one sample",
                w[0].station
            )));
        }
        if let Some(o) = observations.iter().find(|o| !o.rss.is_finite()) {
            return Err(Error::invariant(format!(
                "non-finite rss for station {}",
                o.station
            )));
        }
        Ok(Self {
            timestamp,
            observations,
        })
    }

    /// Convenience constructor from `(station, rss)` pairs.
    pub fn from_pairs<S: AsRef<str>>(timestamp: f64, pairs: &[(S, f64)]) -> Result<Self> {
        let observations = pairs
            .iter()
            .map(|(s, v)| Ok(Observation::new(BaseStationId::new(s.as_ref())?, *v)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(timestamp, observations)
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn get(&self, station: &BaseStationId) -> Option<f64> {
        self.observations
            .binary_search_by(|o| o.station.cmp(station))
            .ok()
            .map(|i| self.observations[i].rss)
    }

    pub fn stations(&self) -> impl Iterator<Item = &BaseStationId> {
        self.observations.iter().map(|o| &o.station)
    }

    /// Returns a copy with every rss transformed by `f`.
    pub fn map_rss(&self, mut f: impl FnMut(f64) -> f64) -> Sample {
        Sample {
            timestamp: self.timestamp,
            observations: self
                .observations
                .iter()
                .map(|o| Observation::new(o.station.clone(), f(o.rss)))
                .collect(),
        }
    }

    /// Keeps only observations satisfying `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&Observation) -> bool) -> Sample {
        Sample {
            timestamp: self.timestamp,
            observations: self
                .observations
                .iter()
                .filter(|o| keep(o))
                .cloned()
                .collect(),
        }
    }

    pub(crate) fn with_timestamp(&self, timestamp: f64) -> Sample {
        Sample {
            timestamp,
            observations: self.observations.clone(),
        }
    }
}

/// The set of samples collected within one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub cell: CellId,
    samples: Vec<Sample>,
}

impl Fingerprint {
    pub fn new(cell: CellId, samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invariant(format!(
                "fingerprint for cell {cell} has no samples"
            )));
        }
        Ok(Self { cell, samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub(crate) fn extend(&mut self, samples: Vec<Sample>) {
        self.samples.extend(samples);
    }
}

/// All fingerprints of a deployment, keyed by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintSet {
    pub range: ValueRange,
    cells: BTreeMap<CellId, Fingerprint>,
}

impl FingerprintSet {
    pub fn new(range: ValueRange, fingerprints: Vec<Fingerprint>) -> Result<Self> {
        let mut cells: BTreeMap<CellId, Fingerprint> = BTreeMap::new();
        for fp in fingerprints {
            for s in fp.samples() {
                check_range(s, &range)?;
            }
            match cells.get_mut(&fp.cell) {
                Some(existing) => existing.extend(fp.samples),
                None => {
                    cells.insert(fp.cell.clone(), fp);
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::InsufficientData("no fingerprints".into()));
        }
        Ok(Self { range, cells })
    }

    pub fn get(&self, cell: &CellId) -> Option<&Fingerprint> {
        self.cells.get(cell)
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellId> {
        self.cells.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellId, &Fingerprint)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.cells.values().map(|f| f.samples.len()).sum()
    }

    /// Restricts the set to the cells accepted by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&CellId) -> bool) -> Option<FingerprintSet> {
        let cells: BTreeMap<_, _> = self
            .cells
            .iter()
            .filter(|(c, _)| keep(c))
            .map(|(c, f)| (c.clone(), f.clone()))
            .collect();
        if cells.is_empty() {
            None
        } else {
            Some(FingerprintSet {
                range: self.range,
                cells,
            })
        }
    }
}

/// Whether a client is stationary or walking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Motion {
    Still,
    Moving,
}

impl Motion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Motion::Still => "still",
            Motion::Moving => "moving",
        }
    }
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Motion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "still" => Ok(Motion::Still),
            "moving" => Ok(Motion::Moving),
            other => Err(Error::invariant(format!("unknown motion mark {other:?}"))),
        }
    }
}

/// A recorded or synthetic walk: samples plus optional ground-truth and
/// motion annotations. Annotations apply from their timestamp until the next
/// annotation of the same kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub range: ValueRange,
    samples: Vec<Sample>,
    ground_truth: Vec<(f64, CellId)>,
    motion_marks: Vec<(f64, Motion)>,
}

impl Trace {
    pub fn new(
        range: ValueRange,
        samples: Vec<Sample>,
        ground_truth: Vec<(f64, CellId)>,
        motion_marks: Vec<(f64, Motion)>,
    ) -> Result<Self> {
        check_monotone(samples.iter().map(|s| s.timestamp()), "sample")?;
        check_monotone(ground_truth.iter().map(|g| g.0), "@cell annotation")?;
        check_monotone(motion_marks.iter().map(|m| m.0), "@motion annotation")?;
        for s in &samples {
            check_range(s, &range)?;
        }
        Ok(Self {
            range,
            samples,
            ground_truth,
            motion_marks,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn ground_truth(&self) -> &[(f64, CellId)] {
        &self.ground_truth
    }

    pub fn motion_marks(&self) -> &[(f64, Motion)] {
        &self.motion_marks
    }

    pub fn is_labeled(&self) -> bool {
        !self.ground_truth.is_empty()
    }

    pub fn has_motion_marks(&self) -> bool {
        !self.motion_marks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time between first and last sample.
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.timestamp() - a.timestamp(),
            _ => 0.0,
        }
    }

    /// Ground-truth cell in effect at `t`.
    pub fn cell_at(&self, t: f64) -> Option<&CellId> {
        annotation_at(&self.ground_truth, t)
    }

    /// Motion mark in effect at `t`.
    pub fn motion_at(&self, t: f64) -> Option<Motion> {
        annotation_at(&self.motion_marks, t).copied()
    }

    /// Ground-truth cell for every sample; errors if the trace is unlabeled or
    /// a sample precedes the first annotation.
    pub fn truth_per_sample(&self) -> Result<Vec<CellId>> {
        if !self.is_labeled() {
            return Err(Error::InsufficientData(
                "trace carries no ground-truth annotations".into(),
            ));
        }
        self.samples
            .iter()
            .map(|s| {
                self.cell_at(s.timestamp()).cloned().ok_or_else(|| {
                    Error::InsufficientData(format!(
                        "no ground truth at t={}",
                        s.timestamp()
                    ))
                })
            })
            .collect()
    }

    /// Motion mark for every sample; errors if marks are missing.
    pub fn motion_per_sample(&self) -> Result<Vec<Motion>> {
        if !self.has_motion_marks() {
            return Err(Error::InsufficientData(
                "trace carries no motion annotations".into(),
            ));
        }
        self.samples
            .iter()
            .map(|s| {
                self.motion_at(s.timestamp()).ok_or_else(|| {
                    Error::InsufficientData(format!("no motion mark at t={}", s.timestamp()))
                })
            })
            .collect()
    }

    /// Returns a copy with every sample transformed by `f`, keeping annotations.
    pub fn map_samples(&self, f: impl FnMut(&Sample) -> Sample) -> Trace {
        Trace {
            range: self.range,
            samples: self.samples.iter().map(f).collect(),
            ground_truth: self.ground_truth.clone(),
            motion_marks: self.motion_marks.clone(),
        }
    }
}

fn annotation_at<T>(marks: &[(f64, T)], t: f64) -> Option<&T> {
    let idx = marks.partition_point(|(ts, _)| *ts <= t);
    idx.checked_sub(1).map(|i| &marks[i].1)
}

fn check_monotone(ts: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for t in ts {
        if t < prev {
            return Err(Error::invariant(format!(
                "{what} timestamps decrease ({t} after {prev})"
            )));
        }
        prev = t;
    }
    Ok(())
}

fn check_range(sample: &Sample, range: &ValueRange) -> Result<()> {
    match sample.observations().iter().find(|o| !range.contains(o.rss)) {
        Some(o) => Err(Error::invariant(format!(
            "rss {} of station {} outside range [{}, {}]",
            o.rss,
            o.station,
            range.min(),
            range.max()
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_reject_empty_and_whitespace() {
        assert!(CellId::new("").is_err());
        assert!(CellId::new("a b").is_err());
        assert!(BaseStationId::new("00:11:22").is_ok());
    }

    #[test]
    fn sample_rejects_duplicate_station() {
        let err = Sample::from_pairs(0.0, &[("a", 10.0), ("a", 12.0)]).unwrap_err();
        assert!(err.to_string().contains("duplicate station a"));
    }

    #[test]
    fn sample_keeps_observations_sorted() {
        let s = Sample::from_pairs(0.0, &[("b", 1.0), ("a", 2.0)]).unwrap();
        let ids: Vec<_> = s.stations().map(|b| b.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(s.get(&BaseStationId::new("a").unwrap()), Some(2.0));
    }

    #[test]
    fn value_range_requires_positive_min() {
        assert!(ValueRange::new(0, 10).is_err());
        assert!(ValueRange::new(5, 4).is_err());
        assert_eq!(ValueRange::default().len(), 100);
    }

    #[test]
    fn annotations_apply_until_next() {
        let c = |s: &str| CellId::new(s).unwrap();
        let trace = Trace::new(
            ValueRange::default(),
            vec![],
            vec![(0.0, c("x")), (5.0, c("y"))],
            vec![(1.0, Motion::Moving)],
        )
        .unwrap();
        assert_eq!(trace.cell_at(4.9), Some(&c("x")));
        assert_eq!(trace.cell_at(5.0), Some(&c("y")));
        assert_eq!(trace.motion_at(0.5), None);
        assert_eq!(trace.motion_at(100.0), Some(Motion::Moving));
    }

    #[test]
    fn fingerprint_set_merges_duplicate_cells() {
        let c = CellId::new("k").unwrap();
        let s = Sample::from_pairs(0.0, &[("a", 10.0)]).unwrap();
        let set = FingerprintSet::new(
            ValueRange::default(),
            vec![
                Fingerprint::new(c.clone(), vec![s.clone()]).unwrap(),
                Fingerprint::new(c.clone(), vec![s.clone(), s]).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(&c).unwrap().samples().len(), 3);
    }
}
