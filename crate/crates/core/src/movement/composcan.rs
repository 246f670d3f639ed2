use std::collections::VecDeque;

use crate::error::Result;
use crate::types::{Motion, Sample};

use super::features::{FeatureKind, FeatureWindow};
use super::hmm::{MovementHmm, MovementModel, Transitions};

/// How the client collects its next signal-strength measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// Full active scan over all channels; interrupts traffic.
    ActiveScanning,
    /// Passive capture on the current channel only.
    MonitorSniffing,
}

impl ScanMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanMode::ActiveScanning => "active",
            ScanMode::MonitorSniffing => "monitor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanState {
    pub mode: ScanMode,
    pub last_verdict: Option<Motion>,
}

impl Default for ScanState {
    fn default() -> Self {
        Self {
            mode: ScanMode::ActiveScanning,
            last_verdict: None,
        }
    }
}

/// Chooses the next scan mode from the current feature history. Without any
/// history the client keeps scanning actively.
pub fn composcan_step(_state: &ScanState, hmm: &MovementHmm, features: &[f64]) -> (ScanState, ScanMode) {
    let verdict = hmm.detect(features).ok();
    let mode = match verdict {
        Some(Motion::Still) => ScanMode::MonitorSniffing,
        Some(Motion::Moving) | None => ScanMode::ActiveScanning,
    };
    (
        ScanState {
            mode,
            last_verdict: verdict,
        },
        mode,
    )
}

/// Per-sample output of the streaming detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectStep {
    pub timestamp: f64,
    pub verdict: Option<Motion>,
    pub mode: ScanMode,
}

/// Streaming movement detector driving the scan-mode state machine.
#[derive(Debug, Clone)]
pub struct MovementDetector {
    hmm: MovementHmm,
    feature: FeatureKind,
    k: Option<usize>,
    window: FeatureWindow,
    features: VecDeque<f64>,
    state: ScanState,
}

impl MovementDetector {
    pub fn new(model: &MovementModel, transitions: Transitions) -> Result<Self> {
        Ok(Self {
            hmm: model.hmm(transitions)?,
            feature: model.feature,
            k: model.k,
            window: FeatureWindow::new(model.window)?,
            features: VecDeque::with_capacity(model.history),
            state: ScanState::default(),
        })
    }

    pub fn state(&self) -> ScanState {
        self.state
    }

    pub fn push(&mut self, sample: &Sample) -> DetectStep {
        self.window.push(sample.clone());
        let feature = if self.window.is_full() {
            self.feature.compute(&self.window, self.k).ok()
        } else {
            None
        };
        let history: Vec<f64> = match feature {
            Some(f) => {
                if self.features.len() == self.hmm.history {
                    self.features.pop_front();
                }
                self.features.push_back(f);
                self.features.iter().copied().collect()
            }
            None => Vec::new(),
        };
        let (state, mode) = composcan_step(&self.state, &self.hmm, &history);
        self.state = state;
        DetectStep {
            timestamp: sample.timestamp(),
            verdict: state.last_verdict,
            mode,
        }
    }
}

/// Runs the detector over a sample sequence.
pub fn detect_samples(
    model: &MovementModel,
    transitions: Transitions,
    samples: &[Sample],
) -> Result<Vec<DetectStep>> {
    let mut d = MovementDetector::new(model, transitions)?;
    Ok(samples.iter().map(|s| d.push(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::movement::hmm::{train_emissions, Grid};

    fn hmm() -> MovementHmm {
        let e = train_emissions(&[0.0, 0.2], &[10.0, 12.0], (0.1, 1.5), Grid::default()).unwrap();
        MovementHmm::new(Transitions::COMM_FRIENDLY, e, 10).unwrap()
    }

    #[test]
    fn startup_scans_actively() {
        let (s, mode) = composcan_step(&ScanState::default(), &hmm(), &[]);
        assert_eq!(mode, ScanMode::ActiveScanning);
        assert_eq!(s.last_verdict, None);
    }

    #[test]
    fn verdict_drives_mode() {
        let h = hmm();
        let (_, still) = composcan_step(&ScanState::default(), &h, &[0.1; 5]);
        assert_eq!(still, ScanMode::MonitorSniffing);
        let (_, moving) = composcan_step(&ScanState::default(), &h, &[11.0; 5]);
        assert_eq!(moving, ScanMode::ActiveScanning);
    }

    #[test]
    fn detector_waits_for_full_window() {
        let model = MovementModel {
            feature: FeatureKind::Variance,
            window: 4,
            k: None,
            history: 10,
            emissions: hmm().emissions,
        };
        let samples: Vec<_> = (0..6)
            .map(|i| Sample::from_pairs(i as f64, &[("a", 40.0)]).unwrap())
            .collect();
        let steps = detect_samples(&model, Transitions::COMM_FRIENDLY, &samples).unwrap();
        assert!(steps[..3].iter().all(|s| s.verdict.is_none() && s.mode == ScanMode::ActiveScanning));
        assert!(steps[3..].iter().all(|s| s.verdict == Some(Motion::Still)));
    }
}
