//! Handling of heterogeneous client hardware: measurement-quality
//! classifiers, a still-period analyzer and linear normalization of client
//! values onto the calibration scale.

mod classify;
mod normalize;
mod still;

pub use classify::{
    autocorrelation, caching_features, classify_caching, classify_not_ss, train_caching,
    train_not_ss, variation_feature, NaiveBayes, QualityModel, QualityVerdict,
    AUTOCORRELATION_BANDWIDTH, MIN_CACHING_DURATION, MIN_STATIONS, MIN_VARIATION_BANDWIDTH,
    THRESHOLD,
};
pub use normalize::{
    apply_mapping, apply_mapping_trace, compute_weights, fit_manual, fit_weighted, moment_guess,
    normalize_automatic, normalize_quasi, overlap_weight, station_overlap, AutoOptions, Fit,
    Iteration, LinearMapping, SegmentStats, Weighting,
};
pub use still::{
    segment_stats, window_features, StillAnalyzer, ANALYZER_WINDOW, MIN_SEGMENT, SEGMENT_TRIM,
    MIN_SEGMENT_OBSERVATIONS,
};
