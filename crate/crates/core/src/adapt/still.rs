use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::movement::{
    train_emissions, weighted_variance, FeatureKind, Grid, MovementHmm, MovementModel, Transitions,
};
use crate::radiomap::StationStats;
use crate::stats::Kde;
use crate::types::{BaseStationId, Motion, Trace};

use super::normalize::SegmentStats;

/// Length of the variance window in seconds.
pub const ANALYZER_WINDOW: f64 = 20.0;
/// Still runs shorter than this (seconds) are discarded.
pub const MIN_SEGMENT: f64 = 10.0;
/// Seconds dropped from the ends of a still run that border movement. Decoded transitions lag
/// the true change by a sample or two, and a single moving reading
/// noticeably shifts the place statistics.
pub const SEGMENT_TRIM: f64 = 2.0;
/// Observations a station needs within a segment to contribute statistics.
pub const MIN_SEGMENT_OBSERVATIONS: usize = 5;

/// Splits a trace into periods during which the client stood still.
#[derive(Debug, Clone, PartialEq)]
pub struct StillAnalyzer {
    pub hmm: MovementHmm,
    pub window: f64,
    pub min_segment: f64,
    pub trim: f64,
    pub min_observations: usize,
}

impl StillAnalyzer {
    pub fn new(hmm: MovementHmm) -> Self {
        Self {
            hmm,
            window: ANALYZER_WINDOW,
            min_segment: MIN_SEGMENT,
            trim: SEGMENT_TRIM,
            min_observations: MIN_SEGMENT_OBSERVATIONS,
        }
    }

    /// Trains still and moving densities of the windowed variance from
    /// motion-labeled traces.
    pub fn train(traces: &[Trace], transitions: Transitions) -> Result<Self> {
        let (mut still, mut moving) = (Vec::new(), Vec::new());
        for t in traces {
            let marks = t.motion_per_sample()?;
            for (f, m) in window_features(t, ANALYZER_WINDOW).into_iter().zip(marks) {
                match (f, m) {
                    (Some(f), Motion::Still) => still.push(f),
                    (Some(f), Motion::Moving) => moving.push(f),
                    _ => {}
                }
            }
        }
        if still.is_empty() || moving.is_empty() {
            return Err(Error::InsufficientData(
                "analyzer training needs both still and moving windows".into(),
            ));
        }
        let bw = (Kde::silverman(&still, 0.1), Kde::silverman(&moving, 0.1));
        let hi = still.iter().chain(&moving).copied().fold(0.0, f64::max) * 1.2 + 1.0;
        let grid = Grid {
            lo: 0.0,
            hi: hi.ceil(),
            step: 0.1,
        };
        let emissions = train_emissions(&still, &moving, bw, grid)?;
        Ok(Self::new(MovementHmm::new(transitions, emissions, 1)?))
    }

    /// Analyzer models are stored as movement models of the weighted
    /// variance feature; the window is given in seconds.
    pub fn to_model(&self) -> MovementModel {
        MovementModel {
            feature: FeatureKind::WeightedVariance,
            window: self.window.round() as usize,
            k: None,
            history: 1,
            emissions: self.hmm.emissions.clone(),
        }
    }

    pub fn from_model(model: &MovementModel, transitions: Transitions) -> Result<Self> {
        if model.feature != FeatureKind::WeightedVariance {
            return Err(Error::InvalidArgument(format!(
                "analyzer needs a weighted-variance model, got {}",
                model.feature.as_str()
            )));
        }
        let mut a = Self::new(MovementHmm::new(transitions, model.emissions.clone(), 1)?);
        a.window = model.window as f64;
        Ok(a)
    }

    /// Still periods as `(start, end)` timestamps, ordered and disjoint,
    /// after trimming [`SEGMENT_TRIM`] from ends that border movement.
    pub fn segments(&self, trace: &Trace) -> Result<Vec<(f64, f64)>> {
        if trace.duration() < self.window {
            return Err(Error::InsufficientData(format!(
                "trace lasts {} s, the analyzer window is {} s",
                trace.duration(),
                self.window
            )));
        }
        let features = window_features(trace, self.window);
        let known: Vec<(usize, f64)> = features
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.map(|f| (i, f)))
            .collect();
        let values: Vec<f64> = known.iter().map(|(_, f)| *f).collect();
        let mut still = vec![false; features.len()];
        for ((i, _), m) in known.iter().zip(self.hmm.decode(&values)) {
            still[*i] = m == Motion::Still;
        }
        let samples = trace.samples();
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for i in 0..=samples.len() {
            let is_still = i < samples.len() && still[i];
            match (start, is_still) {
                (None, true) => start = Some(i),
                (Some(s), false) => {
                    // only edges next to a decoded movement are trimmed
                    let lead = if s > 0 { self.trim } else { 0.0 };
                    let tail = if i < samples.len() { self.trim } else { 0.0 };
                    let (a, b) = (samples[s].timestamp() + lead, samples[i - 1].timestamp() - tail);
                    if b - a >= self.min_segment {
                        out.push((a, b));
                    }
                    start = None;
                }
                _ => {}
            }
        }
        Ok(out)
    }
}

/// Weighted variance over a window centered on each sample.
pub fn window_features(trace: &Trace, window: f64) -> Vec<Option<f64>> {
    let samples = trace.samples();
    let half = window / 2.0;
    let (mut lo, mut hi) = (0, 0);
    samples
        .iter()
        .map(|s| {
            let t = s.timestamp();
            while samples[lo].timestamp() < t - half {
                lo += 1;
            }
            while hi < samples.len() && samples[hi].timestamp() <= t + half {
                hi += 1;
            }
            weighted_variance(&samples[lo..hi])
        })
        .collect()
}

/// Per-station statistics of the samples inside each segment; stations with
/// fewer than `min_observations` readings are left out.
pub fn segment_stats(
    trace: &Trace,
    segments: &[(f64, f64)],
    min_observations: usize,
) -> Vec<SegmentStats> {
    segments
        .iter()
        .map(|(a, b)| {
            let mut series: BTreeMap<BaseStationId, Vec<f64>> = BTreeMap::new();
            for s in trace
                .samples()
                .iter()
                .filter(|s| s.timestamp() >= *a && s.timestamp() <= *b)
            {
                for o in s.observations() {
                    series.entry(o.station.clone()).or_default().push(o.rss);
                }
            }
            series
                .into_iter()
                .filter(|(_, v)| v.len() >= min_observations.max(1))
                .filter_map(|(b, v)| StationStats::from_values(&v).map(|s| (b, s)))
                .collect()
        })
        .collect()
}
