//! Movement detection: windowed signal-strength features, a two-state HMM
//! decoded with Viterbi, and the scan-mode switching built on top of it.

mod composcan;
mod features;
mod hmm;

pub use composcan::{composcan_step, detect_samples, DetectStep, MovementDetector, ScanMode, ScanState};
pub use features::{
    euclid_avg_feature, euclid_gap_feature, feature_series, variance_feature, weighted_variance,
    FeatureKind,
    FeatureWindow, DEFAULT_WINDOW, ELIGIBILITY,
};
pub use hmm::{
    train_emissions, viterbi, Emissions, Grid, MovementHmm, MovementModel, Preset, Transitions,
    DEFAULT_HISTORY, EMISSION_FLOOR, MOVING_BANDWIDTH, STILL_BANDWIDTH,
};

use crate::error::{Error, Result};
use crate::types::{Motion, Trace};

/// Settings used when training a detector from labeled traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub feature: FeatureKind,
    pub window: usize,
    pub k: Option<usize>,
    pub history: usize,
    pub bandwidths: (f64, f64),
    pub grid: Grid,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            feature: FeatureKind::Variance,
            window: DEFAULT_WINDOW,
            k: None,
            history: DEFAULT_HISTORY,
            bandwidths: (STILL_BANDWIDTH, MOVING_BANDWIDTH),
            grid: Grid::default(),
        }
    }
}

/// Feature values of a trace split by the motion mark of the newest sample.
pub fn labeled_features(trace: &Trace, config: &TrainConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let marks = trace.motion_per_sample()?;
    let series = feature_series(trace.samples(), config.window, config.feature, config.k)?;
    let (mut still, mut moving) = (Vec::new(), Vec::new());
    for (f, m) in series.into_iter().zip(marks) {
        if let Some(f) = f {
            match m {
                Motion::Still => still.push(f),
                Motion::Moving => moving.push(f),
            }
        }
    }
    Ok((still, moving))
}

/// Trains emission densities from motion-labeled traces.
pub fn train_model(traces: &[Trace], config: &TrainConfig) -> Result<MovementModel> {
    if traces.is_empty() {
        return Err(Error::InsufficientData("no training traces".into()));
    }
    let (mut still, mut moving) = (Vec::new(), Vec::new());
    for t in traces {
        let (s, m) = labeled_features(t, config)?;
        still.extend(s);
        moving.extend(m);
    }
    Ok(MovementModel {
        feature: config.feature,
        window: config.window,
        k: config.k,
        history: config.history,
        emissions: train_emissions(&still, &moving, config.bandwidths, config.grid)?,
    })
}
