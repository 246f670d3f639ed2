//! Zone-based reporting: a terminal decides on its own whether it is still
//! inside the zone configured by the server and reports only when it leaves.

mod bayes;
pub mod codec;
mod detect;
mod protocol;

pub use bayes::{bayes_update, markov_step, BayesZoneDetector, BayesZoneModel, DEFAULT_P_SUSTAIN, MAX_STATIONS};
pub use detect::{
    aggregate, cbs_detect, manhattan_detect, manhattan_score, rank_score, ranking_detect, spearman, Aggregator, Zone,
    CBS_THRESHOLD, MIN_COMMON, RANK_THRESHOLD,
};
pub use protocol::{
    detect_zone, zone_protocol_run, DetectorKind, DetectorParams, ProtocolFrame, ProtocolLog, ZoneDetector, ZonePolicy,
    TRACKING_RADIUS,
};
