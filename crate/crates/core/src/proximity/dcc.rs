use crate::error::{Error, Result};
use crate::types::CellId;
use crate::zone::Zone;

use super::graph::DistanceTable;

/// Whether a distance forces, permits or forbids an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    Must,
    May,
    MustNot,
}

/// Proximity must be seen below `d_p` and must not be seen above `d_p + b`.
pub fn proximity_check(d: f64, d_p: f64, b: f64) -> Requirement {
    if d < d_p {
        Requirement::Must
    } else if d <= d_p + b {
        Requirement::May
    } else {
        Requirement::MustNot
    }
}

/// Separation must be seen above `d_s + b` and must not be seen below `d_s`.
pub fn separation_check(d: f64, d_s: f64, b: f64) -> Requirement {
    if d > d_s + b {
        Requirement::Must
    } else if d >= d_s {
        Requirement::May
    } else {
        Requirement::MustNot
    }
}

/// Zone radius together with a flag telling the server to poll the other
/// target because the unclamped radius was not positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius {
    pub radius: f64,
    pub poll: bool,
}

/// `max(d - r_j - d_p, b / 2)`.
pub fn dcc_proximity_radius(d: f64, r_j: f64, d_p: f64, b: f64) -> Radius {
    let raw = d - r_j - d_p;
    Radius {
        radius: raw.max(b / 2.0),
        poll: raw <= 0.0,
    }
}

/// `max(d_s - d - r_j, b / 2)`.
pub fn dcc_separation_radius(d: f64, r_j: f64, d_s: f64, b: f64) -> Radius {
    let raw = d_s - d - r_j;
    Radius {
        radius: raw.max(b / 2.0),
        poll: raw <= 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detection {
    Proximity { d_p: f64 },
    Separation { d_s: f64 },
}

impl Detection {
    pub fn distance(&self) -> f64 {
        match self {
            Detection::Proximity { d_p } => *d_p,
            Detection::Separation { d_s } => *d_s,
        }
    }

    /// The server only fires outside the must-not region. Proximity fires
    /// strictly below `d_p + b` and separation strictly above `d_s`, which
    /// keeps the switched-to detection of the buddy service quiet.
    pub fn fires(&self, d: f64, b: f64) -> bool {
        match self {
            Detection::Proximity { d_p } => d < d_p + b,
            Detection::Separation { d_s } => d > *d_s,
        }
    }

    /// Whether the nearest (proximity) or farthest (separation) distance to
    /// the other target's zone is close enough to the trigger to poll it.
    pub fn needs_poll(&self, near: f64, far: f64, b: f64) -> bool {
        match self {
            Detection::Proximity { d_p } => near - d_p < b,
            Detection::Separation { d_s } => d_s - far < b,
        }
    }

    /// Radius for the reporting target when the other one is not polled.
    pub fn solo_radius(&self, near: f64, far: f64, b: f64) -> f64 {
        match self {
            Detection::Proximity { d_p } => dcc_proximity_radius(near, 0.0, *d_p, b).radius,
            Detection::Separation { d_s } => dcc_separation_radius(far, 0.0, *d_s, b).radius,
        }
    }

    /// Radii for both targets once the distance between their cells is known.
    pub fn split_radii(&self, d: f64, b: f64) -> (f64, f64) {
        let (r_j, r_i) = match self {
            Detection::Proximity { d_p } => {
                let r_j = ((d - d_p) / 2.0).max(b / 2.0);
                (r_j, dcc_proximity_radius(d, r_j, *d_p, b).radius)
            }
            Detection::Separation { d_s } => {
                let r_j = ((d_s - d) / 2.0).max(b / 2.0);
                (r_j, dcc_separation_radius(d, r_j, *d_s, b).radius)
            }
        };
        (r_i, r_j)
    }
}

/// Server-side message kinds and their cost in messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Message {
    /// Terminal reports its RSS after leaving its zone.
    Update,
    /// Server requests and receives a terminal's RSS.
    Poll,
    /// Server sends a new detection request.
    Config,
}

impl Message {
    pub fn cost(&self) -> u64 {
        match self {
            Message::Update | Message::Config => 1,
            Message::Poll => 2,
        }
    }
}

/// Message tallies of a monitoring run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageCounts {
    pub updates: u64,
    pub polls: u64,
    pub configs: u64,
}

impl MessageCounts {
    pub fn add(&mut self, m: Message) {
        match m {
            Message::Update => self.updates += 1,
            Message::Poll => self.polls += 1,
            Message::Config => self.configs += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.updates * Message::Update.cost()
            + self.polls * Message::Poll.cost()
            + self.configs * Message::Config.cost()
    }
}

/// A proximity or separation event raised by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub timestamp: f64,
    pub detection: Detection,
    /// Walking distance between the estimated cells that triggered it.
    pub distance: f64,
}

/// DCC state of one monitored pair of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMonitor {
    pub detection: Detection,
    pub b: f64,
    zones: Option<[Zone; 2]>,
    cells: [CellId; 2],
    pub messages: MessageCounts,
}

impl PairMonitor {
    /// Polls both targets, then either fires at once or configures both zones.
    pub fn start(
        table: &DistanceTable,
        detection: Detection,
        b: f64,
        cells: [CellId; 2],
        timestamp: f64,
    ) -> Result<(Self, Option<Event>)> {
        if !(detection.distance() > 0.0) || !(b >= 0.0) {
            return Err(Error::InvalidArgument(
                "detection distance must be positive and tolerance non-negative".into(),
            ));
        }
        let mut m = Self {
            detection,
            b,
            zones: None,
            cells: cells.clone(),
            messages: MessageCounts::default(),
        };
        m.messages.add(Message::Poll);
        m.messages.add(Message::Poll);
        let ev = m.decide(table, 0, timestamp)?;
        Ok((m, ev))
    }

    /// Switches to another detection with both positions already known from
    /// the exchange that raised the last event.
    pub fn switch(&mut self, table: &DistanceTable, detection: Detection, timestamp: f64) -> Result<Option<Event>> {
        self.detection = detection;
        self.decide(table, 0, timestamp)
    }

    pub fn zones(&self) -> Option<&[Zone; 2]> {
        self.zones.as_ref()
    }

    pub fn is_active(&self) -> bool {
        self.zones.is_some()
    }

    /// Fires on the known cells or assigns zones to both targets; `i` is the
    /// target whose radius takes the reporting role.
    fn decide(&mut self, table: &DistanceTable, i: usize, timestamp: f64) -> Result<Option<Event>> {
        let d = table.distance(&self.cells[0], &self.cells[1])?;
        if self.detection.fires(d, self.b) {
            self.zones = None;
            return Ok(Some(Event {
                timestamp,
                detection: self.detection,
                distance: d,
            }));
        }
        let (r_i, r_j) = self.detection.split_radii(d, self.b);
        let j = 1 - i;
        let mut zones = [table.wds(&self.cells[0], 0.0)?, table.wds(&self.cells[1], 0.0)?];
        zones[i] = table.wds(&self.cells[i], r_i)?;
        zones[j] = table.wds(&self.cells[j], r_j)?;
        self.zones = Some(zones);
        self.messages.add(Message::Config);
        self.messages.add(Message::Config);
        Ok(None)
    }

    /// Feeds the current cell estimate of both targets. Targets outside
    /// their zone report in index order; `poll` supplies a fresh estimate
    /// of the other target when the server asks for one.
    pub fn step(
        &mut self,
        table: &DistanceTable,
        estimates: [&CellId; 2],
        mut poll: impl FnMut(usize) -> Result<CellId>,
        timestamp: f64,
    ) -> Result<Option<Event>> {
        for i in 0..2 {
            let Some(zones) = &self.zones else {
                return Ok(None);
            };
            if zones[i].contains(estimates[i]) {
                continue;
            }
            self.messages.add(Message::Update);
            self.cells[i] = estimates[i].clone();
            let j = 1 - i;
            let (near, far) = table.zone_extent(&self.cells[i], &zones[j])?;
            if self.detection.needs_poll(near, far, self.b) {
                self.messages.add(Message::Poll);
                self.cells[j] = poll(j)?;
                if let Some(ev) = self.decide(table, i, timestamp)? {
                    return Ok(Some(ev));
                }
            } else {
                let r = self.detection.solo_radius(near, far, self.b);
                let z = table.wds(&self.cells[i], r)?;
                if let Some(zs) = &mut self.zones {
                    zs[i] = z;
                }
                self.messages.add(Message::Config);
            }
        }
        Ok(None)
    }
}
