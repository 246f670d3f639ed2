//! Trace emulation and evaluation: synthetic worlds, frame metrics,
//! receiver operating points and cross-validation.

mod eval;
mod metrics;
pub mod synth;

pub use eval::{
    accuracy, average_likelihood, crossval, locate_accuracy, locate_counts, locate_trace, movement_counts,
    roc_points, trace_fingerprints, CrossvalReport, RocPoint,
};
pub use metrics::{correlation_coefficient, rates, sensitivity, specificity, ConfusionCounts, Metric};
pub use synth::{random_building, synth_trace, Client, Layout, Leg, Propagation, Script, SynthWorld};
