use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::locate::bayes_estimate;
use crate::proximity::DistanceTable;
use crate::radiomap::{DeterministicMap, HistogramMap};
use crate::types::{BaseStationId, CellId, FingerprintSet, Sample, Trace};

use super::bayes::{BayesZoneDetector, BayesZoneModel, DEFAULT_P_SUSTAIN, MAX_STATIONS};
use super::detect::{cbs_detect, manhattan_detect, ranking_detect, Aggregator, Zone, CBS_THRESHOLD, RANK_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorKind {
    Cbs,
    Rank,
    Manhattan,
    Bayes,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [Self::Cbs, Self::Rank, Self::Manhattan, Self::Bayes];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Cbs => "cbs",
            Self::Rank => "rank",
            Self::Manhattan => "manhattan",
            Self::Bayes => "bayes",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown detector {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub cbs_threshold: f64,
    pub rank_threshold: f64,
    /// Samples averaged per detection by the ranking and Manhattan detectors.
    pub aggregate: usize,
    pub max_stations: usize,
    pub p_sustain: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            cbs_threshold: CBS_THRESHOLD,
            rank_threshold: RANK_THRESHOLD,
            aggregate: 1,
            max_stations: MAX_STATIONS,
            p_sustain: DEFAULT_P_SUSTAIN,
        }
    }
}

/// Terminal-side detector configured for one zone.
#[derive(Debug, Clone, PartialEq)]
pub enum ZoneDetector {
    Cbs {
        stations: BTreeSet<BaseStationId>,
        threshold: f64,
    },
    Rank {
        map: DeterministicMap,
        threshold: f64,
        agg: Aggregator,
    },
    Manhattan {
        map: DeterministicMap,
        agg: Aggregator,
    },
    Bayes(BayesZoneDetector),
    /// The zone spans every fingerprinted cell, so the terminal can never leave it.
    Everywhere,
}

impl ZoneDetector {
    pub fn configure(kind: DetectorKind, zone: &Zone, fps: &FingerprintSet, params: &DetectorParams) -> Result<Self> {
        if fps.cells().all(|c| zone.contains(c)) {
            return Ok(Self::Everywhere);
        }
        let zone_fps = fps
            .filter(|c| zone.contains(c))
            .ok_or_else(|| Error::InsufficientData("no fingerprints inside the zone".into()))?;
        Ok(match kind {
            DetectorKind::Cbs => Self::Cbs {
                stations: zone_fps
                    .iter()
                    .flat_map(|(_, fp)| fp.samples().iter().flat_map(|s| s.stations().cloned()))
                    .collect(),
                threshold: params.cbs_threshold,
            },
            DetectorKind::Rank => Self::Rank {
                map: DeterministicMap::build(&zone_fps),
                threshold: params.rank_threshold,
                agg: Aggregator::new(params.aggregate)?,
            },
            DetectorKind::Manhattan => Self::Manhattan {
                map: DeterministicMap::build(&zone_fps),
                agg: Aggregator::new(params.aggregate)?,
            },
            DetectorKind::Bayes => Self::Bayes(BayesZoneDetector::new(BayesZoneModel::build(
                zone,
                fps,
                params.max_stations,
                params.p_sustain,
            )?)),
        })
    }

    /// Feeds one sample; `true` means the terminal believes it is in the zone.
    pub fn step(&mut self, sample: &Sample) -> Result<bool> {
        Ok(match self {
            Self::Cbs { stations, threshold } => cbs_detect(stations, sample, *threshold),
            Self::Rank { map, threshold, agg } => ranking_detect(map, &agg.push(sample)?, *threshold),
            Self::Manhattan { map, agg } => manhattan_detect(map, &agg.push(sample)?),
            Self::Bayes(d) => d.step(sample),
            Self::Everywhere => true,
        })
    }
}

/// Frame-by-frame detector output for a fixed zone: `(truth_in, detected_in)`.
pub fn detect_zone(
    kind: DetectorKind,
    zone: &Zone,
    fps: &FingerprintSet,
    trace: &Trace,
    params: &DetectorParams,
) -> Result<Vec<(bool, bool)>> {
    let truth = trace.truth_per_sample()?;
    let mut det = ZoneDetector::configure(kind, zone, fps, params)?;
    trace
        .samples()
        .iter()
        .zip(&truth)
        .map(|(s, c)| Ok((zone.contains(c), det.step(s)?)))
        .collect()
}

/// How the server picks the next zone around an estimated cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ZonePolicy<'a> {
    /// Cells within `radius` meters of walking distance.
    Wds { table: &'a DistanceTable, radius: f64 },
    /// Precomputed neighborhood per cell.
    Neighborhoods(BTreeMap<CellId, Zone>),
}

/// Radius of the tracking zones.
pub const TRACKING_RADIUS: f64 = 10.0;

impl ZonePolicy<'_> {
    pub fn zone_for(&self, center: &CellId) -> Result<Zone> {
        match self {
            ZonePolicy::Wds { table, radius } => table.wds(center, *radius),
            ZonePolicy::Neighborhoods(n) => n
                .get(center)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("no neighborhood for cell {center}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolFrame {
    pub truth_in: bool,
    pub detected_in: bool,
    /// The terminal sent an RSS update in this frame.
    pub update: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolLog {
    pub frames: Vec<ProtocolFrame>,
    /// Zones in the order they were configured.
    pub zones: Vec<Zone>,
}

impl ProtocolLog {
    pub fn updates(&self) -> u64 {
        self.frames.iter().filter(|f| f.update).count() as u64
    }

    /// Messages of the periodic reference protocol: one per frame.
    pub fn baseline(&self) -> u64 {
        self.frames.len() as u64
    }

    /// Frames where the terminal correctly stayed silent inside its zone.
    pub fn correctly_saved(&self) -> u64 {
        self.frames.iter().filter(|f| f.detected_in && f.truth_in).count() as u64
    }

    /// Frames where the terminal stayed silent although it had left.
    pub fn wrongly_saved(&self) -> u64 {
        self.frames.iter().filter(|f| f.detected_in && !f.truth_in).count() as u64
    }
}

/// Continuous tracking: the first zone is centered on the trace's starting
/// cell; whenever the detector reports an exit, the server locates the
/// reported sample on the histogram map and configures a zone around the
/// estimate. Reconfiguration takes effect from the next sample.
pub fn zone_protocol_run(
    fps: &FingerprintSet,
    trace: &Trace,
    policy: &ZonePolicy<'_>,
    kind: DetectorKind,
    params: &DetectorParams,
) -> Result<ProtocolLog> {
    let truth = trace.truth_per_sample()?;
    let Some(start) = truth.first() else {
        return Ok(ProtocolLog {
            frames: Vec::new(),
            zones: Vec::new(),
        });
    };
    let server = HistogramMap::build(fps);
    let mut zone = policy.zone_for(start)?;
    let mut det = ZoneDetector::configure(kind, &zone, fps, params)?;
    let mut log = ProtocolLog {
        frames: Vec::with_capacity(truth.len()),
        zones: vec![zone.clone()],
    };
    for (s, c) in trace.samples().iter().zip(&truth) {
        let inside = det.step(s)?;
        log.frames.push(ProtocolFrame {
            truth_in: zone.contains(c),
            detected_in: inside,
            update: !inside,
        });
        if !inside {
            let est = bayes_estimate(&server, s, None)?;
            zone = policy.zone_for(&est.cell)?;
            det = ZoneDetector::configure(kind, &zone, fps, params)?;
            log.zones.push(zone.clone());
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Fingerprint, ValueRange};

    fn c(s: &str) -> CellId {
        CellId::new(s).unwrap()
    }

    /// Three cells along a line, each heard best by its own station.
    fn fps() -> FingerprintSet {
        let cell = |id: &str, vals: [f64; 3]| {
            let samples = (0..20)
                .map(|t| {
                    let j = (t % 3) as f64 - 1.0;
                    Sample::from_pairs(t as f64, &[("a", vals[0] + j), ("b", vals[1] + j), ("c", vals[2] + j)])
                        .unwrap()
                })
                .collect();
            Fingerprint::new(c(id), samples).unwrap()
        };
        FingerprintSet::new(
            ValueRange::default(),
            vec![cell("x", [80.0, 40.0, 10.0]), cell("y", [40.0, 80.0, 40.0]), cell("z", [10.0, 40.0, 80.0])],
        )
        .unwrap()
    }

    fn trace(cells: &[(&str, [f64; 3])]) -> Trace {
        let samples = cells
            .iter()
            .enumerate()
            .map(|(t, (_, v))| Sample::from_pairs(t as f64, &[("a", v[0]), ("b", v[1]), ("c", v[2])]).unwrap())
            .collect();
        let truth = cells.iter().enumerate().map(|(t, (id, _))| (t as f64, c(id))).collect();
        Trace::new(ValueRange::default(), samples, truth, vec![]).unwrap()
    }

    fn own_cell() -> ZonePolicy<'static> {
        ZonePolicy::Neighborhoods(["x", "y", "z"].into_iter().map(|k| (c(k), Zone::new([c(k)]).unwrap())).collect())
    }

    #[test]
    fn kinds_parse() {
        for k in DetectorKind::ALL {
            assert_eq!(k.as_str().parse::<DetectorKind>().unwrap(), k);
        }
        assert!("knn".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn staying_home_sends_nothing() {
        let t = trace(&[("x", [80.0, 40.0, 10.0]); 30]);
        for k in [DetectorKind::Rank, DetectorKind::Manhattan, DetectorKind::Bayes] {
            let log = zone_protocol_run(&fps(), &t, &own_cell(), k, &DetectorParams::default()).unwrap();
            assert_eq!(log.updates(), 0, "{k}");
            assert_eq!(log.baseline(), 30);
        }
    }

    #[test]
    fn one_crossing_one_update() {
        let mut cells = vec![("x", [80.0, 40.0, 10.0]); 10];
        cells.extend(vec![("z", [10.0, 40.0, 80.0]); 10]);
        let log = zone_protocol_run(&fps(), &trace(&cells), &own_cell(), DetectorKind::Manhattan, &DetectorParams::default())
            .unwrap();
        assert_eq!(log.updates(), 1);
        assert!(log.frames[10].update);
        assert_eq!(log.zones.last().unwrap(), &Zone::new([c("z")]).unwrap());
        assert!(log.updates() <= log.baseline());
    }

    #[test]
    fn whole_world_zone_never_reports() {
        let all = Zone::new([c("x"), c("y"), c("z")]).unwrap();
        let t = trace(&[("z", [10.0, 40.0, 80.0]); 5]);
        let frames = detect_zone(DetectorKind::Bayes, &all, &fps(), &t, &DetectorParams::default()).unwrap();
        assert!(frames.iter().all(|f| *f == (true, true)));
    }

    #[test]
    fn unlabeled_trace_is_rejected() {
        let s = vec![Sample::from_pairs(0.0, &[("a", 1.0)]).unwrap()];
        let t = Trace::new(ValueRange::default(), s, vec![], vec![]).unwrap();
        assert!(zone_protocol_run(&fps(), &t, &own_cell(), DetectorKind::Cbs, &DetectorParams::default()).is_err());
    }
}
