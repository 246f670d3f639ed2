//! Seeded synthetic radio environments, clients and walks.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `seed_from_u64`, so a
//! seed reproduces a trace exactly on every platform.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::adapt::LinearMapping;
use crate::error::{Error, Result};
use crate::proximity::{BuildingGraph, Point, PointKind};
use crate::types::{BaseStationId, CellId, Fingerprint, FingerprintSet, Motion, Observation, Sample, Trace, ValueRange};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(rng: &mut impl Rng, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(mean, std).expect("finite std").sample(rng)
    } else {
        mean
    }
}

/// Knobs of the log-distance propagation model used by [`Layout::grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagation {
    /// Mean value one meter from a station.
    pub p0: f64,
    /// Loss per decade of distance.
    pub slope: f64,
    /// Std of the per-cell shadowing offset.
    pub shadowing: f64,
    /// Stations whose mean falls below this are not heard in a cell.
    pub floor: f64,
    /// Per-reading spread range drawn for every cell and station.
    pub spread: (f64, f64),
}

impl Default for Propagation {
    fn default() -> Self {
        Self {
            p0: 80.0,
            slope: 25.0,
            shadowing: 3.0,
            floor: 15.0,
            spread: (1.5, 3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub id: CellId,
    pub x: f64,
    pub y: f64,
    /// True `(mean, std)` per audible station.
    pub stations: BTreeMap<BaseStationId, (f64, f64)>,
}

/// Radio environment: cell positions and their true signal statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub range: ValueRange,
    pub spacing: f64,
    pub cols: usize,
    pub cells: Vec<CellSpec>,
    /// Probability that an audible station is missing from a reading.
    pub miss_prob: f64,
    /// Extra spread of readings while the carrier moves.
    pub motion_fading: f64,
}

pub fn cell_name(i: usize) -> CellId {
    CellId::new(format!("c{i:03}")).expect("valid id")
}

pub fn station_name(i: usize) -> BaseStationId {
    BaseStationId::new(format!("ap{i:02}")).expect("valid id")
}

impl Layout {
    /// `cols x rows` cells `spacing` meters apart, named `c000`, `c001`, ...
    /// row by row, and `stations` stations at random positions.
    pub fn grid(cols: usize, rows: usize, spacing: f64, stations: usize, prop: Propagation, seed: u64) -> Result<Self> {
        if cols == 0 || rows == 0 || stations == 0 || !(spacing > 0.0) {
            return Err(Error::InvalidArgument("grid needs cells, stations and a positive spacing".into()));
        }
        let mut r = rng(seed);
        let (w, h) = (cols as f64 * spacing, rows as f64 * spacing);
        let aps: Vec<(f64, f64)> = (0..stations)
            .map(|_| (r.random_range(-spacing..w), r.random_range(-spacing..h)))
            .collect();
        let range = ValueRange::default();
        let mut cells = Vec::with_capacity(cols * rows);
        for i in 0..cols * rows {
            let (x, y) = ((i % cols) as f64 * spacing, (i / cols) as f64 * spacing);
            let mut heard = BTreeMap::new();
            for (k, (ax, ay)) in aps.iter().enumerate() {
                let d = ((x - ax).powi(2) + (y - ay).powi(2)).sqrt().max(1.0);
                let mean = prop.p0 - prop.slope * d.log10() + gauss(&mut r, 0.0, prop.shadowing);
                let std = r.random_range(prop.spread.0..=prop.spread.1);
                if mean >= prop.floor {
                    heard.insert(station_name(k), (mean.min(range.max() as f64), std));
                }
            }
            cells.push(CellSpec {
                id: cell_name(i),
                x,
                y,
                stations: heard,
            });
        }
        if let Some(c) = cells.iter().find(|c| c.stations.is_empty()) {
            return Err(Error::InvalidArgument(format!("no station is audible in {}", c.id)));
        }
        Ok(Self {
            range,
            spacing,
            cols,
            cells,
            miss_prob: 0.05,
            motion_fading: 4.0,
        })
    }

    pub fn cell(&self, id: &CellId) -> Option<&CellSpec> {
        self.cells.iter().find(|c| &c.id == id)
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = &CellId> {
        self.cells.iter().map(|c| &c.id)
    }

    fn nearest(&self, x: f64, y: f64) -> &CellSpec {
        self.cells
            .iter()
            .min_by(|a, b| {
                let da = (a.x - x).powi(2) + (a.y - y).powi(2);
                let db = (b.x - x).powi(2) + (b.y - y).powi(2);
                da.total_cmp(&db)
            })
            .expect("layout has cells")
    }

    /// Building graph of the layout: every cell has a center and four
    /// transit points a quarter spacing away; facing transit points of
    /// neighboring cells are joined, so adjacent centers are `spacing` apart.
    pub fn graph(&self) -> Result<BuildingGraph> {
        let q = self.spacing / 4.0;
        let dirs = [("n", 0.0, q), ("e", q, 0.0), ("s", 0.0, -q), ("w", -q, 0.0)];
        let mut points = Vec::new();
        let mut edges = Vec::new();
        let pos: BTreeMap<(i64, i64), &CellSpec> = self
            .cells
            .iter()
            .map(|c| (((c.x / self.spacing).round() as i64, (c.y / self.spacing).round() as i64), c))
            .collect();
        for c in &self.cells {
            let center = format!("{}", c.id);
            points.push(Point {
                id: center.clone(),
                kind: PointKind::Center,
                cell: c.id.clone(),
            });
            for (k, (d, dx, dy)) in dirs.iter().enumerate() {
                let t = format!("{}.{d}", c.id);
                points.push(Point {
                    id: t.clone(),
                    kind: PointKind::Transit,
                    cell: c.id.clone(),
                });
                edges.push((center.clone(), t.clone(), q));
                for (d2, dx2, dy2) in &dirs[k + 1..] {
                    let w = ((dx - dx2).powi(2) + (dy - dy2).powi(2)).sqrt();
                    edges.push((t.clone(), format!("{}.{d2}", c.id), w));
                }
            }
            let key = ((c.x / self.spacing).round() as i64, (c.y / self.spacing).round() as i64);
            if let Some(e) = pos.get(&(key.0 + 1, key.1)) {
                edges.push((format!("{}.e", c.id), format!("{}.w", e.id), 2.0 * q));
            }
            if let Some(n) = pos.get(&(key.0, key.1 + 1)) {
                edges.push((format!("{}.n", c.id), format!("{}.s", n.id), 2.0 * q));
            }
        }
        BuildingGraph::new(points, edges)
    }

    /// Survey fingerprints taken with the reference client: `per_cell`
    /// still samples one second apart in every cell.
    pub fn fingerprints(&self, per_cell: usize, seed: u64) -> Result<FingerprintSet> {
        self.fingerprints_with(per_cell, &Client::default(), seed)
    }

    /// Still samples of `client` in every cell, e.g. for a manual fit.
    pub fn fingerprints_with(&self, per_cell: usize, client: &Client, seed: u64) -> Result<FingerprintSet> {
        let mut r = rng(seed);
        let fps = self
            .cells
            .iter()
            .map(|c| {
                let samples = (0..per_cell)
                    .map(|t| self.reading(&mut r, c, client, t as f64, false))
                    .collect::<Result<Vec<_>>>()?;
                Fingerprint::new(c.id.clone(), samples)
            })
            .collect::<Result<Vec<_>>>()?;
        FingerprintSet::new(self.range, fps)
    }

    fn reading(&self, r: &mut impl Rng, cell: &CellSpec, client: &Client, t: f64, moving: bool) -> Result<Sample> {
        let fading = if moving { self.motion_fading } else { 0.0 };
        let mut obs = Vec::with_capacity(cell.stations.len());
        for (b, (mean, std)) in &cell.stations {
            if r.random::<f64>() < self.miss_prob {
                continue;
            }
            let spread = (std * client.noise_scale).hypot(fading);
            let v = gauss(r, *mean, spread);
            let v = match client.constant {
                Some(c) => c,
                None => client.mapping.forward(v),
            };
            let v = if client.round { v.round() } else { v };
            obs.push(Observation::new(b.clone(), self.range.clamp(v)));
        }
        Sample::new(t, obs)
    }
}

/// Measurement behavior of a client device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Client {
    /// Maps reference values onto this client's scale.
    pub mapping: LinearMapping,
    /// Multiplies the true per-reading spread; 0 gives noiseless readings.
    pub noise_scale: f64,
    /// Every reading is repeated this many samples before a fresh one.
    pub repeat: usize,
    /// Reports this value for every station instead of signal strength.
    pub constant: Option<f64>,
    pub round: bool,
}

impl Default for Client {
    fn default() -> Self {
        Self {
            mapping: LinearMapping::IDENTITY,
            noise_scale: 1.0,
            repeat: 1,
            constant: None,
            round: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Leg {
    Pause { seconds: f64 },
    Walk { to: CellId, speed: f64 },
}

/// A walk through the layout starting at the center of `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub start: CellId,
    pub legs: Vec<Leg>,
}

impl Script {
    /// Random tour of `legs` pause-then-walk pairs. Pauses last between the
    /// bounds of `pause`; walks go to a random cell at `speed` m/s.
    pub fn random(layout: &Layout, legs: usize, pause: (f64, f64), speed: f64, seed: u64) -> Self {
        let mut r = rng(seed);
        let ids: Vec<&CellId> = layout.cell_ids().collect();
        let start = ids.choose(&mut r).copied().cloned().expect("layout has cells");
        let mut out = Vec::with_capacity(2 * legs);
        for _ in 0..legs {
            out.push(Leg::Pause {
                seconds: r.random_range(pause.0..=pause.1).round(),
            });
            out.push(Leg::Walk {
                to: ids.choose(&mut r).copied().cloned().expect("layout has cells"),
                speed,
            });
        }
        Self { start, legs: out }
    }

    /// Seconds of pausing and of total duration.
    pub fn still_time(&self, layout: &Layout) -> Result<(f64, f64)> {
        let plan = plan(layout, self)?;
        let still: f64 = plan.iter().filter(|p| p.still).map(|p| p.t1 - p.t0).sum();
        Ok((still, plan.last().map_or(0.0, |p| p.t1)))
    }
}

struct Piece {
    t0: f64,
    t1: f64,
    from: (f64, f64),
    to: (f64, f64),
    still: bool,
}

fn plan(layout: &Layout, script: &Script) -> Result<Vec<Piece>> {
    let spec = |id: &CellId| {
        layout
            .cell(id)
            .map(|c| (c.x, c.y))
            .ok_or_else(|| Error::InvalidArgument(format!("script visits unknown cell {id}")))
    };
    let mut at = spec(&script.start)?;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(script.legs.len());
    for leg in &script.legs {
        match leg {
            Leg::Pause { seconds } => {
                if !(*seconds >= 0.0) {
                    return Err(Error::InvalidArgument("pause must not be negative".into()));
                }
                out.push(Piece {
                    t0: t,
                    t1: t + seconds,
                    from: at,
                    to: at,
                    still: true,
                });
                t += seconds;
            }
            Leg::Walk { to, speed } => {
                if !(*speed > 0.0) {
                    return Err(Error::InvalidArgument("walking speed must be positive".into()));
                }
                let dest = spec(to)?;
                let d = ((dest.0 - at.0).powi(2) + (dest.1 - at.1).powi(2)).sqrt();
                out.push(Piece {
                    t0: t,
                    t1: t + d / speed,
                    from: at,
                    to: dest,
                    still: false,
                });
                t += d / speed;
                at = dest;
            }
        }
    }
    Ok(out)
}

/// Synthetic world: environment, client and walk.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub layout: Layout,
    pub client: Client,
    pub script: Script,
    /// Seconds between samples.
    pub period: f64,
}

/// Samples the walk once per period. Ground truth is the cell nearest to
/// the carrier, motion marks follow the script's pauses and walks.
pub fn synth_trace(world: &SynthWorld, seed: u64) -> Result<Trace> {
    if !(world.period > 0.0) || world.client.repeat == 0 {
        return Err(Error::InvalidArgument("period and repeat count must be positive".into()));
    }
    let plan = plan(&world.layout, &world.script)?;
    let end = plan.last().map_or(0.0, |p| p.t1);
    let mut r = rng(seed);
    let mut samples = Vec::new();
    let mut truth: Vec<(f64, CellId)> = Vec::new();
    let mut marks: Vec<(f64, Motion)> = Vec::new();
    let mut piece = 0;
    let mut held: Option<Sample> = None;
    let n = (end / world.period).floor() as usize + 1;
    for k in 0..n {
        let t = k as f64 * world.period;
        while piece + 1 < plan.len() && t >= plan[piece].t1 {
            piece += 1;
        }
        let (x, y, still) = match plan.get(piece) {
            Some(p) => {
                let f = if p.t1 > p.t0 { ((t - p.t0) / (p.t1 - p.t0)).clamp(0.0, 1.0) } else { 1.0 };
                (p.from.0 + f * (p.to.0 - p.from.0), p.from.1 + f * (p.to.1 - p.from.1), p.still)
            }
            None => {
                let c = world.layout.cell(&world.script.start).expect("checked by plan");
                (c.x, c.y, true)
            }
        };
        let cell = world.layout.nearest(x, y);
        let motion = if still { Motion::Still } else { Motion::Moving };
        if truth.last().is_none_or(|(_, c)| c != &cell.id) {
            truth.push((t, cell.id.clone()));
        }
        if marks.last().is_none_or(|(_, m)| *m != motion) {
            marks.push((t, motion));
        }
        let fresh = k % world.client.repeat == 0;
        let s = match (&held, fresh) {
            (Some(h), false) => h.with_timestamp(t),
            _ => world.layout.reading(&mut r, cell, &world.client, t, !still)?,
        };
        held = Some(s.clone());
        samples.push(s);
    }
    Trace::new(world.layout.range, samples, truth, marks)
}

/// Random connected building with `cells` cells. Points of a cell sit at
/// random positions and are joined by their Euclidean distances; centers
/// link only to their own transit points, and random transit-to-transit
/// corridors of arbitrary positive length connect cells along a random
/// spanning tree plus `extra` further corridors.
pub fn random_building(cells: usize, extra: usize, seed: u64) -> Result<BuildingGraph> {
    if cells == 0 {
        return Err(Error::InvalidArgument("a building needs cells".into()));
    }
    let mut r = rng(seed);
    let mut points = Vec::new();
    let mut edges = Vec::new();
    let mut transits: Vec<Vec<String>> = Vec::with_capacity(cells);
    for i in 0..cells {
        let cell = cell_name(i);
        let n = r.random_range(1..=3);
        let mut pos: Vec<(String, f64, f64)> = vec![(format!("p{i}c"), r.random_range(0.0..5.0), r.random_range(0.0..5.0))];
        points.push(Point {
            id: pos[0].0.clone(),
            kind: PointKind::Center,
            cell: cell.clone(),
        });
        for k in 0..n {
            let id = format!("p{i}t{k}");
            points.push(Point {
                id: id.clone(),
                kind: PointKind::Transit,
                cell: cell.clone(),
            });
            pos.push((id, r.random_range(0.0..5.0), r.random_range(0.0..5.0)));
        }
        for a in 0..pos.len() {
            for b in a + 1..pos.len() {
                let w = ((pos[a].1 - pos[b].1).powi(2) + (pos[a].2 - pos[b].2).powi(2)).sqrt().max(0.01);
                edges.push((pos[a].0.clone(), pos[b].0.clone(), w));
            }
        }
        transits.push(pos[1..].iter().map(|p| p.0.clone()).collect());
    }
    let mut order: Vec<usize> = (0..cells).collect();
    order.shuffle(&mut r);
    let mut corridor = |r: &mut ChaCha8Rng, a: usize, b: usize| {
        let ta = transits[a].choose(r).expect("transit").clone();
        let tb = transits[b].choose(r).expect("transit").clone();
        edges.push((ta, tb, r.random_range(0.5..10.0)));
    };
    for k in 1..cells {
        let parent = order[r.random_range(0..k)];
        corridor(&mut r, order[k], parent);
    }
    if cells > 1 {
        for _ in 0..extra {
            let a = r.random_range(0..cells);
            let b = (a + r.random_range(1..cells)) % cells;
            corridor(&mut r, a, b);
        }
    }
    // parallel corridors between the same points keep the shortest
    let mut best: BTreeMap<(String, String), f64> = BTreeMap::new();
    for (a, b, w) in edges {
        let key = if a < b { (a, b) } else { (b, a) };
        let e = best.entry(key).or_insert(w);
        *e = e.min(w);
    }
    BuildingGraph::new(points, best.into_iter().map(|((a, b), w)| (a, b, w)).collect())
}
