//! Location fingerprinting engine and trace-emulation toolkit.
//!
//! The crate covers the full pipeline of a terminal-assisted positioning
//! system: radio maps built from fingerprints ([`radiomap`]), per-sample
//! estimators ([`locate`]), handling of heterogeneous client hardware
//! ([`adapt`]), zone-based reporting ([`zone`]), walking-distance proximity
//! detection ([`proximity`]) and movement detection ([`movement`]). The
//! [`emu`] module replays recorded or synthetic traces through all of them.

pub mod adapt;
pub mod emu;
pub mod error;
pub mod io;
pub mod locate;
pub mod movement;
pub mod proximity;
pub mod radiomap;
pub mod stats;
pub mod types;
pub mod zone;

pub use error::{Error, Result};
pub use types::{
    BaseStationId, CellId, Fingerprint, FingerprintSet, Motion, Observation, Sample, Trace,
    ValueRange,
};
