use crate::error::{Error, Result};
use crate::types::{CellId, Sample, Trace};

use super::dcc::{Detection, Event, MessageCounts, PairMonitor};
use super::graph::DistanceTable;

/// Frame timestamps of different targets may differ by at most this much.
pub const TIMELINE_TOLERANCE: f64 = 1e-6;

fn check_timeline(traces: &[Trace]) -> Result<usize> {
    if traces.len() < 2 {
        return Err(Error::InvalidArgument("monitoring needs at least two targets".into()));
    }
    let n = traces[0].len();
    if n == 0 {
        return Err(Error::InsufficientData("target traces are empty".into()));
    }
    for t in &traces[1..] {
        if t.len() != n {
            return Err(Error::invariant("target traces differ in length"));
        }
        for (a, b) in traces[0].samples().iter().zip(t.samples()) {
            if (a.timestamp() - b.timestamp()).abs() > TIMELINE_TOLERANCE {
                return Err(Error::invariant(format!(
                    "target timelines diverge at {} s",
                    a.timestamp()
                )));
            }
        }
    }
    Ok(n)
}

fn estimates(
    traces: &[Trace],
    frame: usize,
    locate: &mut impl FnMut(usize, usize, &Sample) -> Result<CellId>,
) -> Result<Vec<CellId>> {
    traces
        .iter()
        .enumerate()
        .map(|(i, t)| locate(i, frame, &t.samples()[frame]))
        .collect()
}

/// Result of monitoring one pair for a single detection.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorLog {
    pub events: Vec<Event>,
    pub messages: MessageCounts,
    pub frames: usize,
    pub targets: usize,
}

impl MonitorLog {
    /// Messages a periodic protocol would send: one update per target per frame.
    pub fn baseline(&self) -> u64 {
        (self.frames * self.targets) as u64
    }
}

/// Runs DCC for one detection over two aligned traces until the event fires.
/// `locate(target, frame, sample)` estimates a target's cell.
pub fn dcc_monitor(
    table: &DistanceTable,
    traces: &[Trace; 2],
    detection: Detection,
    b: f64,
    mut locate: impl FnMut(usize, usize, &Sample) -> Result<CellId>,
) -> Result<MonitorLog> {
    let n = check_timeline(traces)?;
    let mut log = MonitorLog {
        events: Vec::new(),
        messages: MessageCounts::default(),
        frames: n,
        targets: 2,
    };
    let first = estimates(traces, 0, &mut locate)?;
    let ts = traces[0].samples()[0].timestamp();
    let (mut m, ev) = PairMonitor::start(table, detection, b, [first[0].clone(), first[1].clone()], ts)?;
    log.events.extend(ev);
    for frame in 1..n {
        if !m.is_active() {
            break;
        }
        let est = estimates(traces, frame, &mut locate)?;
        let ts = traces[0].samples()[frame].timestamp();
        let ev = m.step(table, [&est[0], &est[1]], |j| Ok(est[j].clone()), ts)?;
        log.events.extend(ev);
    }
    log.messages = m.messages;
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuddyChange {
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuddyEvent {
    pub timestamp: f64,
    pub pair: (usize, usize),
    pub change: BuddyChange,
    pub distance: f64,
}

/// Buddy-list run: events, per-pair list membership after every frame, and
/// the messages of all pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BuddyLog {
    pub events: Vec<BuddyEvent>,
    pub pairs: Vec<(usize, usize)>,
    /// `listed[p][f]`: pair `p` is on the list after frame `f`.
    pub listed: Vec<Vec<bool>>,
    pub messages: MessageCounts,
    pub frames: usize,
    pub targets: usize,
}

impl BuddyLog {
    pub fn baseline(&self) -> u64 {
        (self.frames * self.targets) as u64
    }
}

/// Community buddy service: every pair alternates between proximity
/// detection at `p - b` and separation detection at `p`.
pub fn buddy_service(
    table: &DistanceTable,
    traces: &[Trace],
    p: f64,
    b: f64,
    mut locate: impl FnMut(usize, usize, &Sample) -> Result<CellId>,
) -> Result<BuddyLog> {
    if !(p > b && b >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "buddy distance {p} must exceed the tolerance {b}"
        )));
    }
    let n = check_timeline(traces)?;
    let prox = Detection::Proximity { d_p: p - b };
    let sep = Detection::Separation { d_s: p };
    let pairs: Vec<(usize, usize)> = (0..traces.len())
        .flat_map(|i| (i + 1..traces.len()).map(move |j| (i, j)))
        .collect();
    let mut log = BuddyLog {
        events: Vec::new(),
        pairs: pairs.clone(),
        listed: vec![Vec::with_capacity(n); pairs.len()],
        messages: MessageCounts::default(),
        frames: n,
        targets: traces.len(),
    };
    let mut on = vec![false; pairs.len()];
    let mut monitors = Vec::with_capacity(pairs.len());
    let first = estimates(traces, 0, &mut locate)?;
    let ts0 = traces[0].samples()[0].timestamp();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (mut m, mut ev) = PairMonitor::start(table, prox, b, [first[i].clone(), first[j].clone()], ts0)?;
        while let Some(e) = ev.take() {
            ev = toggle(table, &mut m, &mut on[k], &mut log.events, (i, j), e, prox, sep)?;
        }
        monitors.push(m);
    }
    for (k, m) in on.iter().enumerate() {
        log.listed[k].push(*m);
    }
    for frame in 1..n {
        let est = estimates(traces, frame, &mut locate)?;
        let ts = traces[0].samples()[frame].timestamp();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let m = &mut monitors[k];
            let local = [est[i].clone(), est[j].clone()];
            let mut ev = m.step(table, [&local[0], &local[1]], |x| Ok(local[x].clone()), ts)?;
            while let Some(e) = ev.take() {
                ev = toggle(table, m, &mut on[k], &mut log.events, (i, j), e, prox, sep)?;
            }
            log.listed[k].push(on[k]);
        }
    }
    for m in &monitors {
        log.messages.updates += m.messages.updates;
        log.messages.polls += m.messages.polls;
        log.messages.configs += m.messages.configs;
    }
    Ok(log)
}

#[allow(clippy::too_many_arguments)]
fn toggle(
    table: &DistanceTable,
    m: &mut PairMonitor,
    on: &mut bool,
    events: &mut Vec<BuddyEvent>,
    pair: (usize, usize),
    e: Event,
    prox: Detection,
    sep: Detection,
) -> Result<Option<Event>> {
    let (change, next) = if *on {
        (BuddyChange::Removed, prox)
    } else {
        (BuddyChange::Added, sep)
    };
    *on = !*on;
    events.push(BuddyEvent {
        timestamp: e.timestamp,
        pair,
        change,
        distance: e.distance,
    });
    m.switch(table, next, e.timestamp)
}
