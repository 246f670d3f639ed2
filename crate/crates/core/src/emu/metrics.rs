use std::fmt;

/// Frame-level confusion counts of a binary detector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// Tallies one frame.
    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn from_frames(frames: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (t, p) in frames {
            c.record(t, p);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, other: Self) {
        *self = self.merge(&other);
    }
}

/// Sensitivity in percent, `None` without positive frames.
pub fn sensitivity(c: &ConfusionCounts) -> Option<f64> {
    let d = c.tp + c.fn_;
    (d > 0).then(|| 100.0 * c.tp as f64 / d as f64)
}

/// Specificity in percent, `None` without negative frames.
pub fn specificity(c: &ConfusionCounts) -> Option<f64> {
    let d = c.tn + c.fp;
    (d > 0).then(|| 100.0 * c.tn as f64 / d as f64)
}

/// Correlation coefficient in [-1, 1], `None` when a marginal is zero.
pub fn correlation_coefficient(c: &ConfusionCounts) -> Option<f64> {
    let [tp, fp, tn, fn_] = [c.tp, c.fp, c.tn, c.fn_].map(|v| v as f64);
    let d = (tp + fp) * (tn + fn_) * (tp + fn_) * (tn + fp);
    (d > 0.0).then(|| ((tp * tn - fp * fn_) / d.sqrt()).clamp(-1.0, 1.0))
}

/// True- and false-positive rates in percent with the positive class as
/// given by the detector; `None` when the class has no frames.
pub fn rates(c: &ConfusionCounts) -> (Option<f64>, Option<f64>) {
    let fp = (c.fp + c.tn > 0).then(|| 100.0 * c.fp as f64 / (c.fp + c.tn) as f64);
    (sensitivity(c), fp)
}

/// Formats an optional metric for CSV output; undefined values print as `nan`.
pub struct Metric(pub Option<f64>);

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.4}"),
            None => f.write_str("nan"),
        }
    }
}
