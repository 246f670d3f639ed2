use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{content_lines, parse_number, read, write};
use crate::types::CellId;
use crate::zone::Zone;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Center,
    Transit,
}

impl PointKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointKind::Center => "center",
            PointKind::Transit => "transit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub id: String,
    pub kind: PointKind,
    pub cell: CellId,
}

/// Undirected building graph of cell center and transit points.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingGraph {
    points: Vec<Point>,
    index: BTreeMap<String, usize>,
    adj: Vec<Vec<(usize, f64)>>,
    centers: BTreeMap<CellId, usize>,
}

impl BuildingGraph {
    /// Validates the model: unique point ids, one center per cell, positive
    /// edge lengths, fully connected points within each cell, and a
    /// connected graph.
    pub fn new(points: Vec<Point>, edges: Vec<(String, String, f64)>) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut centers = BTreeMap::new();
        let mut cells: BTreeSet<&CellId> = BTreeSet::new();
        for (i, p) in points.iter().enumerate() {
            if index.insert(p.id.clone(), i).is_some() {
                return Err(Error::invariant(format!("duplicate point {:?}", p.id)));
            }
            cells.insert(&p.cell);
            if p.kind == PointKind::Center && centers.insert(p.cell.clone(), i).is_some() {
                return Err(Error::invariant(format!("cell {} has two center points", p.cell)));
            }
        }
        if let Some(c) = cells.iter().find(|c| !centers.contains_key(**c)) {
            return Err(Error::invariant(format!("cell {c} has no center point")));
        }
        if points.is_empty() {
            return Err(Error::invariant("building graph has no points"));
        }
        let mut adj = vec![Vec::new(); points.len()];
        let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in &edges {
            let find = |id: &String| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::invariant(format!("edge names unknown point {id:?}")))
            };
            let (i, j) = (find(a)?, find(b)?);
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::invariant(format!("edge {a}-{b} must have positive length, got {w}")));
            }
            if i == j {
                return Err(Error::invariant(format!("edge {a}-{b} is a loop")));
            }
            let key = (i.min(j), i.max(j));
            if weights.insert(key, *w).is_some() {
                return Err(Error::invariant(format!("duplicate edge {a}-{b}")));
            }
            adj[i].push((j, *w));
            adj[j].push((i, *w));
        }
        let mut by_cell: BTreeMap<&CellId, Vec<usize>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            by_cell.entry(&p.cell).or_default().push(i);
        }
        for (cell, members) in &by_cell {
            for (k, a) in members.iter().enumerate() {
                for b in &members[k + 1..] {
                    if !weights.contains_key(&(*a.min(b), *a.max(b))) {
                        return Err(Error::invariant(format!(
                            "points {} and {} of cell {cell} are not connected",
                            points[*a].id, points[*b].id
                        )));
                    }
                }
            }
        }
        let mut seen = vec![false; points.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for (j, _) in &adj[i] {
                if !seen[*j] {
                    seen[*j] = true;
                    stack.push(*j);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::invariant(format!("point {} is not connected", points[i].id)));
        }
        for row in &mut adj {
            row.sort_by(|a, b| a.0.cmp(&b.0));
        }
        Ok(Self {
            points,
            index,
            adj,
            centers,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, id: &str) -> Option<&Point> {
        self.index.get(id).map(|i| &self.points[*i])
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellId> {
        self.centers.keys()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(move |(i, row)| {
            row.iter()
                .filter(move |(j, _)| i < *j)
                .map(move |(j, w)| (self.points[i].id.as_str(), self.points[*j].id.as_str(), *w))
        })
    }

    /// Shortest walks from the center of `source` to every cell center. The
    /// centers of other cells end a walk and are never passed through.
    pub fn distances_from(&self, source: &CellId) -> Result<BTreeMap<CellId, f64>> {
        let start = *self
            .centers
            .get(source)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown cell {source}")))?;
        let mut dist = vec![f64::INFINITY; self.points.len()];
        let mut heap = BinaryHeap::new();
        dist[start] = 0.0;
        heap.push(Entry(0.0, start));
        while let Some(Entry(d, i)) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            if i != start && self.points[i].kind == PointKind::Center {
                continue;
            }
            for (j, w) in &self.adj[i] {
                let nd = d + w;
                if nd < dist[*j] {
                    dist[*j] = nd;
                    heap.push(Entry(nd, *j));
                }
            }
        }
        Ok(self
            .centers
            .iter()
            .map(|(c, i)| (c.clone(), dist[*i]))
            .collect())
    }

    /// `point <id> center|transit <cell>` lines followed by
    /// `edge <a> <b> <meters>` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut edges = Vec::new();
        for (n, line) in content_lines(text) {
            if line.starts_with('#') {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                ["point", id, kind, cell] => {
                    if !edges.is_empty() {
                        return Err(Error::parse(n, "points must precede edges"));
                    }
                    let kind = match *kind {
                        "center" => PointKind::Center,
                        "transit" => PointKind::Transit,
                        other => return Err(Error::parse(n, format!("unknown point kind {other:?}"))),
                    };
                    let cell = CellId::new(*cell).map_err(|e| Error::parse(n, e.to_string()))?;
                    points.push(Point {
                        id: id.to_string(),
                        kind,
                        cell,
                    });
                }
                ["edge", a, b, w] => {
                    edges.push((a.to_string(), b.to_string(), parse_number(n, "edge length", w)?));
                }
                _ => return Err(Error::parse(n, format!("expected a point or edge line, got {line:?}"))),
            }
        }
        Self::new(points, edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let _ = writeln!(out, "point {} {} {}", p.id, p.kind.as_str(), p.cell);
        }
        for (a, b, w) in self.edges() {
            let _ = writeln!(out, "edge {a} {b} {w}");
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &self.to_text())
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs walking distances between cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    cells: Vec<CellId>,
    index: BTreeMap<CellId, usize>,
    d: Vec<f64>,
}

impl DistanceTable {
    /// Runs one restricted Dijkstra per cell; every pair must be reachable.
    pub fn build(g: &BuildingGraph) -> Result<Self> {
        let cells: Vec<CellId> = g.cells().cloned().collect();
        let index: BTreeMap<CellId, usize> =
            cells.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let n = cells.len();
        let mut d = vec![0.0; n * n];
        for (i, c) in cells.iter().enumerate() {
            for (other, dist) in g.distances_from(c)? {
                if !dist.is_finite() {
                    return Err(Error::invariant(format!(
                        "cell {other} cannot be reached from {c} without crossing another cell's center"
                    )));
                }
                d[i * n + index[&other]] = dist;
            }
        }
        Ok(Self { cells, index, d })
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn contains(&self, c: &CellId) -> bool {
        self.index.contains_key(c)
    }

    fn idx(&self, c: &CellId) -> Result<usize> {
        self.index
            .get(c)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown cell {c}")))
    }

    pub fn distance(&self, a: &CellId, b: &CellId) -> Result<f64> {
        let (i, j) = (self.idx(a)?, self.idx(b)?);
        Ok(self.d[i * self.cells.len() + j])
    }

    /// Cells within walking distance `r` of `c`, boundary included.
    pub fn wds(&self, c: &CellId, r: f64) -> Result<Zone> {
        let i = self.idx(c)?;
        let n = self.cells.len();
        Zone::new(
            self.cells
                .iter()
                .enumerate()
                .filter(|(j, _)| *j == i || self.d[i * n + j] <= r)
                .map(|(_, c)| c.clone()),
        )
    }

    /// Smallest and largest distance from `c` to the cells of `zone`.
    pub fn zone_extent(&self, c: &CellId, zone: &Zone) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for z in zone.cells() {
            let d = self.distance(c, z)?;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        Ok((lo, hi))
    }
}
