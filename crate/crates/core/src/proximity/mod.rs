//! Proximity and separation detection over walking distances.

mod dcc;
mod graph;
mod monitor;

pub use dcc::{
    dcc_proximity_radius, dcc_separation_radius, proximity_check, separation_check, Detection, Event, Message,
    MessageCounts, PairMonitor, Radius, Requirement,
};
pub use graph::{BuildingGraph, DistanceTable, Point, PointKind};
pub use monitor::{buddy_service, dcc_monitor, BuddyChange, BuddyEvent, BuddyLog, MonitorLog, TIMELINE_TOLERANCE};
