//! Radio maps built from fingerprints.
//!
//! Four representations are supported: per-station means for nearest
//! neighbour search, per-station histograms for Bayesian inference, and the
//! two hyperbolic variants that replace absolute values by normalized log
//! ratios between station pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::{content_lines, parse_number, parse_range_header};
use crate::types::{BaseStationId, CellId, FingerprintSet, Sample, ValueRange};

/// Default width of the ratio histogram bins.
pub const DEFAULT_RATIO_STEP: f64 = 0.02;

/// Probability assigned to empty histogram bins at lookup time.
pub const LIKELIHOOD_FLOOR: f64 = 1e-6;

/// Normalized log ratio of two signal strengths, shifted onto a positive
/// scale: `log10(v / y) - log10(1 / v_max)`.
pub fn nlr(v: f64, y: f64, range: &ValueRange) -> Result<f64> {
    if !(v > 0.0 && y > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ratio needs positive values, got {v} and {y}"
        )));
    }
    Ok((v / y).log10() + (range.max() as f64).log10())
}

/// Upper end of the ratio domain, `nlr(v_max, 1)`.
pub fn nlr_max(range: &ValueRange) -> f64 {
    2.0 * (range.max() as f64).log10()
}

/// An ordered station pair `(a, b)` with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StationPair(BaseStationId, BaseStationId);

impl StationPair {
    /// Returns the pair in canonical order, or `None` for identical stations.
    pub fn new(a: BaseStationId, b: BaseStationId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self(a, b)),
            std::cmp::Ordering::Greater => Some(Self(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn first(&self) -> &BaseStationId {
        &self.0
    }

    pub fn second(&self) -> &BaseStationId {
        &self.1
    }
}

/// Ratios of every observed station pair `i < j` of one sample.
pub fn sample_ratios(sample: &Sample, range: &ValueRange) -> Result<BTreeMap<StationPair, f64>> {
    let obs = sample.observations();
    let mut out = BTreeMap::new();
    for (i, a) in obs.iter().enumerate() {
        for b in &obs[i + 1..] {
            let pair = StationPair(a.station.clone(), b.station.clone());
            out.insert(pair, nlr(a.rss, b.rss, range)?);
        }
    }
    Ok(out)
}

/// Per-station summary statistics of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl StationStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.iter().all(|v| *v == values[0]) {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
        };
        Some(Self {
            mean,
            std,
            count: values.len(),
        })
    }
}

/// Every rss value per cell and station, in sample order.
pub(crate) fn values_by_station(
    fps: &FingerprintSet,
) -> BTreeMap<CellId, BTreeMap<BaseStationId, Vec<f64>>> {
    fps.iter()
        .map(|(cell, fp)| {
            let mut per: BTreeMap<BaseStationId, Vec<f64>> = BTreeMap::new();
            for s in fp.samples() {
                for o in s.observations() {
                    per.entry(o.station.clone()).or_default().push(o.rss);
                }
            }
            (cell.clone(), per)
        })
        .collect()
}

/// Mean and spread of each station's rss per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicMap {
    pub range: ValueRange,
    cells: BTreeMap<CellId, BTreeMap<BaseStationId, StationStats>>,
}

impl DeterministicMap {
    pub fn build(fps: &FingerprintSet) -> Self {
        let cells = values_by_station(fps)
            .into_iter()
            .map(|(cell, per)| {
                let stats = per
                    .into_iter()
                    .filter_map(|(b, vs)| StationStats::from_values(&vs).map(|s| (b, s)))
                    .collect();
                (cell, stats)
            })
            .collect();
        Self {
            range: fps.range,
            cells,
        }
    }

    pub fn from_entries(
        range: ValueRange,
        cells: BTreeMap<CellId, BTreeMap<BaseStationId, StationStats>>,
    ) -> Result<Self> {
        if cells.is_empty() || cells.values().any(BTreeMap::is_empty) {
            return Err(Error::invariant("map cells must carry at least one station"));
        }
        Ok(Self { range, cells })
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellId, &BTreeMap<BaseStationId, StationStats>)> {
        self.cells.iter()
    }

    pub fn cell(&self, cell: &CellId) -> Option<&BTreeMap<BaseStationId, StationStats>> {
        self.cells.get(cell)
    }

    pub fn get(&self, cell: &CellId, station: &BaseStationId) -> Option<&StationStats> {
        self.cells.get(cell)?.get(station)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Keeps only the cells accepted by `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(&CellId) -> bool) -> Option<Self> {
        let cells: BTreeMap<_, _> = self
            .cells
            .iter()
            .filter(|(c, _)| keep(c))
            .map(|(c, s)| (c.clone(), s.clone()))
            .collect();
        (!cells.is_empty()).then_some(Self {
            range: self.range,
            cells,
        })
    }
}

/// A probability mass function over integer bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: BTreeMap<i32, f64>,
}

impl Pmf {
    pub fn from_counts(counts: &BTreeMap<i32, usize>) -> Option<Self> {
        let total: usize = counts.values().sum();
        if total == 0 {
            return None;
        }
        let probs = counts
            .iter()
            .filter(|(_, c)| **c > 0)
            .map(|(b, c)| (*b, *c as f64 / total as f64))
            .collect();
        Some(Self { probs })
    }

    /// Builds a pmf from explicit probabilities, which must sum to one.
    pub fn from_probs(probs: BTreeMap<i32, f64>) -> Result<Self> {
        if probs.values().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::invariant("pmf probabilities must be non-negative"));
        }
        let total: f64 = probs.values().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invariant(format!("pmf sums to {total}, not 1")));
        }
        Ok(Self {
            probs: probs.into_iter().filter(|(_, p)| *p > 0.0).collect(),
        })
    }

    pub fn prob(&self, bin: i32) -> f64 {
        self.probs.get(&bin).copied().unwrap_or(0.0)
    }

    /// Probability with the lookup floor applied.
    pub fn likelihood(&self, bin: i32, floor: f64) -> f64 {
        self.prob(bin).max(floor)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.probs.iter().map(|(b, p)| (*b, *p))
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }
}

fn counts_to_pmfs<K: Ord>(counts: BTreeMap<K, BTreeMap<i32, usize>>) -> BTreeMap<K, Pmf> {
    counts
        .into_iter()
        .filter_map(|(k, c)| Pmf::from_counts(&c).map(|p| (k, p)))
        .collect()
}

/// Histogram bin of an absolute rss value.
pub fn rss_bin(rss: f64) -> i32 {
    rss.round() as i32
}

/// Per-station pmfs over integer rss values per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramMap {
    pub range: ValueRange,
    cells: BTreeMap<CellId, BTreeMap<BaseStationId, Pmf>>,
}

impl HistogramMap {
    pub fn build(fps: &FingerprintSet) -> Self {
        let cells = values_by_station(fps)
            .into_iter()
            .map(|(cell, per)| {
                let counts = per
                    .into_iter()
                    .map(|(b, vs)| {
                        let mut c = BTreeMap::new();
                        for v in vs {
                            *c.entry(rss_bin(v)).or_insert(0) += 1;
                        }
                        (b, c)
                    })
                    .collect();
                (cell, counts_to_pmfs(counts))
            })
            .collect();
        Self {
            range: fps.range,
            cells,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellId, &BTreeMap<BaseStationId, Pmf>)> {
        self.cells.iter()
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = &CellId> {
        self.cells.keys()
    }

    pub fn get(&self, cell: &CellId, station: &BaseStationId) -> Option<&Pmf> {
        self.cells.get(cell)?.get(station)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// How hyperbolic vector entries are aggregated from a cell's samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RatioAggregation {
    /// Mean of the ratio over every combination of the two stations' observations.
    #[default]
    PairwiseMean,
    /// Ratio of the two stations' mean values.
    MeanRatio,
}

/// Mean normalized log ratio per station pair and cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioVectorMap {
    pub range: ValueRange,
    cells: BTreeMap<CellId, BTreeMap<StationPair, f64>>,
}

impl RatioVectorMap {
    pub fn build(fps: &FingerprintSet, aggregation: RatioAggregation) -> Result<Self> {
        let range = fps.range;
        let mut cells = BTreeMap::new();
        for (cell, per) in values_by_station(fps) {
            let stations: Vec<_> = per.iter().collect();
            let mut entries = BTreeMap::new();
            for (i, (a, va)) in stations.iter().enumerate() {
                for (b, vb) in &stations[i + 1..] {
                    let value = match aggregation {
                        RatioAggregation::PairwiseMean => {
                            let mut sum = 0.0;
                            for x in va.iter() {
                                for y in vb.iter() {
                                    sum += nlr(*x, *y, &range)?;
                                }
                            }
                            sum / (va.len() * vb.len()) as f64
                        }
                        RatioAggregation::MeanRatio => {
                            let ma = va.iter().sum::<f64>() / va.len() as f64;
                            let mb = vb.iter().sum::<f64>() / vb.len() as f64;
                            nlr(ma, mb, &range)?
                        }
                    };
                    entries.insert(StationPair((*a).clone(), (*b).clone()), value);
                }
            }
            cells.insert(cell, entries);
        }
        Ok(Self { range, cells })
    }

    pub fn from_entries(
        range: ValueRange,
        cells: BTreeMap<CellId, BTreeMap<StationPair, f64>>,
    ) -> Self {
        Self { range, cells }
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellId, &BTreeMap<StationPair, f64>)> {
        self.cells.iter()
    }

    pub fn get(&self, cell: &CellId, pair: &StationPair) -> Option<f64> {
        self.cells.get(cell)?.get(pair).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Per station pair pmfs over discretized ratio bins.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioHistogramMap {
    pub range: ValueRange,
    step: f64,
    cells: BTreeMap<CellId, BTreeMap<StationPair, Pmf>>,
}

impl RatioHistogramMap {
    /// Histograms are built from the ratios of stations seen together in a sample.
    pub fn build(fps: &FingerprintSet, step: f64) -> Result<Self> {
        check_step(step)?;
        let range = fps.range;
        let mut cells = BTreeMap::new();
        for (cell, fp) in fps.iter() {
            let mut counts: BTreeMap<StationPair, BTreeMap<i32, usize>> = BTreeMap::new();
            for s in fp.samples() {
                for (pair, r) in sample_ratios(s, &range)? {
                    *counts
                        .entry(pair)
                        .or_default()
                        .entry(ratio_bin(r, step, &range))
                        .or_insert(0) += 1;
                }
            }
            cells.insert(cell.clone(), counts_to_pmfs(counts));
        }
        Ok(Self { range, step, cells })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn bins(&self) -> i32 {
        ratio_bin_count(self.step, &self.range)
    }

    pub fn bin(&self, ratio: f64) -> i32 {
        ratio_bin(ratio, self.step, &self.range)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellId, &BTreeMap<StationPair, Pmf>)> {
        self.cells.iter()
    }

    pub fn get(&self, cell: &CellId, pair: &StationPair) -> Option<&Pmf> {
        self.cells.get(cell)?.get(pair)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "histogram step must be positive, got {step}"
        )));
    }
    Ok(())
}

/// Number of ratio bins covering `[0, nlr_max]`.
pub fn ratio_bin_count(step: f64, range: &ValueRange) -> i32 {
    ((nlr_max(range) / step - 1e-9).ceil() as i32).max(1)
}

/// `floor(ratio / step)`, clamped to the ratio domain.
pub fn ratio_bin(ratio: f64, step: f64, range: &ValueRange) -> i32 {
    let raw = (ratio / step).floor();
    if raw < 0.0 {
        0
    } else {
        (raw as i64).min(ratio_bin_count(step, range) as i64 - 1) as i32
    }
}

/// Any of the four map kinds, as stored in a map file.
#[derive(Debug, Clone, PartialEq)]
pub enum RadioMap {
    Deterministic(DeterministicMap),
    Histogram(HistogramMap),
    RatioVector(RatioVectorMap),
    RatioHistogram(RatioHistogramMap),
}

/// Map kind tags used in the `#map` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Deterministic,
    Histogram,
    RatioVector,
    RatioHistogram,
}

impl MapKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapKind::Deterministic => "deterministic",
            MapKind::Histogram => "histogram",
            MapKind::RatioVector => "ratio-vector",
            MapKind::RatioHistogram => "ratio-histogram",
        }
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "deterministic" => MapKind::Deterministic,
            "histogram" => MapKind::Histogram,
            "ratio-vector" => MapKind::RatioVector,
            "ratio-histogram" => MapKind::RatioHistogram,
            other => return Err(Error::InvalidArgument(format!("unknown map kind {other:?}"))),
        })
    }
}

impl RadioMap {
    pub fn build(
        kind: MapKind,
        fps: &FingerprintSet,
        aggregation: RatioAggregation,
        step: f64,
    ) -> Result<Self> {
        Ok(match kind {
            MapKind::Deterministic => RadioMap::Deterministic(DeterministicMap::build(fps)),
            MapKind::Histogram => RadioMap::Histogram(HistogramMap::build(fps)),
            MapKind::RatioVector => RadioMap::RatioVector(RatioVectorMap::build(fps, aggregation)?),
            MapKind::RatioHistogram => {
                RadioMap::RatioHistogram(RatioHistogramMap::build(fps, step)?)
            }
        })
    }

    pub fn kind(&self) -> MapKind {
        match self {
            RadioMap::Deterministic(_) => MapKind::Deterministic,
            RadioMap::Histogram(_) => MapKind::Histogram,
            RadioMap::RatioVector(_) => MapKind::RatioVector,
            RadioMap::RatioHistogram(_) => MapKind::RatioHistogram,
        }
    }

    pub fn range(&self) -> ValueRange {
        match self {
            RadioMap::Deterministic(m) => m.range,
            RadioMap::Histogram(m) => m.range,
            RadioMap::RatioVector(m) => m.range,
            RadioMap::RatioHistogram(m) => m.range,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let range = self.range();
        let _ = writeln!(out, "#map {}", self.kind().as_str());
        let _ = writeln!(out, "#range {} {}", range.min(), range.max());
        match self {
            RadioMap::Deterministic(m) => {
                for (cell, per) in &m.cells {
                    for (b, s) in per {
                        let _ = writeln!(out, "{cell} {b} {} {} {}", s.mean, s.std, s.count);
                    }
                }
            }
            RadioMap::Histogram(m) => {
                for (cell, per) in &m.cells {
                    for (b, pmf) in per {
                        let _ = write!(out, "{cell} {b}");
                        write_pmf(&mut out, pmf);
                    }
                }
            }
            RadioMap::RatioVector(m) => {
                for (cell, per) in &m.cells {
                    for (p, v) in per {
                        let _ = writeln!(out, "{cell} {} {} {v}", p.0, p.1);
                    }
                }
            }
            RadioMap::RatioHistogram(m) => {
                let _ = writeln!(out, "#step {}", m.step);
                for (cell, per) in &m.cells {
                    for (p, pmf) in per {
                        let _ = write!(out, "{cell} {} {}", p.0, p.1);
                        write_pmf(&mut out, pmf);
                    }
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut range = ValueRange::default();
        let mut step = DEFAULT_RATIO_STEP;
        let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
        for (line_no, line) in content_lines(text) {
            if let Some(rest) = line.strip_prefix("#map") {
                kind = Some(
                    rest.trim()
                        .parse::<MapKind>()
                        .map_err(|e| Error::parse(line_no, e.to_string()))?,
                );
            } else if line.starts_with("#range") {
                range = parse_range_header(line_no, line)?;
            } else if let Some(rest) = line.strip_prefix("#step") {
                step = parse_number(line_no, "step", rest.trim())?;
                check_step(step).map_err(|e| Error::parse(line_no, e.to_string()))?;
            } else if line.starts_with('#') {
                continue;
            } else {
                rows.push((line_no, line.split_whitespace().collect()));
            }
        }
        let kind = kind.ok_or_else(|| Error::parse(1, "missing `#map <kind>` header"))?;
        let id = |line_no: usize, s: &str| -> Result<BaseStationId> {
            BaseStationId::new(s).map_err(|e| Error::parse(line_no, e.to_string()))
        };
        let cell_id = |line_no: usize, s: &str| -> Result<CellId> {
            CellId::new(s).map_err(|e| Error::parse(line_no, e.to_string()))
        };
        let pair = |line_no: usize, a: &str, b: &str| -> Result<StationPair> {
            let (a, b) = (id(line_no, a)?, id(line_no, b)?);
            if a >= b {
                return Err(Error::parse(line_no, "station pair must be in ascending order"));
            }
            Ok(StationPair(a, b))
        };
        let arity = |line_no: usize, row: &[&str], n: usize| -> Result<()> {
            if row.len() != n {
                return Err(Error::parse(line_no, format!("expected {n} fields, got {}", row.len())));
            }
            Ok(())
        };
        Ok(match kind {
            MapKind::Deterministic => {
                let mut cells: BTreeMap<CellId, BTreeMap<BaseStationId, StationStats>> =
                    BTreeMap::new();
                for (n, row) in rows {
                    arity(n, &row, 5)?;
                    let count: usize = row[4]
                        .parse()
                        .map_err(|_| Error::parse(n, format!("bad count {:?}", row[4])))?;
                    let stats = StationStats {
                        mean: parse_number(n, "mean", row[2])?,
                        std: parse_number(n, "std", row[3])?,
                        count,
                    };
                    if stats.std < 0.0 || count == 0 {
                        return Err(Error::parse(n, "std must be >= 0 and count >= 1"));
                    }
                    cells
                        .entry(cell_id(n, row[0])?)
                        .or_default()
                        .insert(id(n, row[1])?, stats);
                }
                RadioMap::Deterministic(DeterministicMap::from_entries(range, cells)?)
            }
            MapKind::Histogram => {
                let mut cells: BTreeMap<CellId, BTreeMap<BaseStationId, Pmf>> = BTreeMap::new();
                for (n, row) in rows {
                    if row.len() < 3 {
                        return Err(Error::parse(n, "histogram row needs at least one bin"));
                    }
                    let pmf = parse_pmf(n, &row[2..])?;
                    cells
                        .entry(cell_id(n, row[0])?)
                        .or_default()
                        .insert(id(n, row[1])?, pmf);
                }
                RadioMap::Histogram(HistogramMap { range, cells })
            }
            MapKind::RatioVector => {
                let mut cells: BTreeMap<CellId, BTreeMap<StationPair, f64>> = BTreeMap::new();
                for (n, row) in rows {
                    arity(n, &row, 4)?;
                    cells
                        .entry(cell_id(n, row[0])?)
                        .or_default()
                        .insert(pair(n, row[1], row[2])?, parse_number(n, "ratio", row[3])?);
                }
                RadioMap::RatioVector(RatioVectorMap { range, cells })
            }
            MapKind::RatioHistogram => {
                let mut cells: BTreeMap<CellId, BTreeMap<StationPair, Pmf>> = BTreeMap::new();
                for (n, row) in rows {
                    if row.len() < 4 {
                        return Err(Error::parse(n, "histogram row needs at least one bin"));
                    }
                    let pmf = parse_pmf(n, &row[3..])?;
                    cells
                        .entry(cell_id(n, row[0])?)
                        .or_default()
                        .insert(pair(n, row[1], row[2])?, pmf);
                }
                RadioMap::RatioHistogram(RatioHistogramMap { range, step, cells })
            }
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&crate::io::read(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write(path.as_ref(), &self.to_text())
    }
}

fn write_pmf(out: &mut String, pmf: &Pmf) {
    for (b, p) in pmf.iter() {
        let _ = write!(out, " {b}:{p}");
    }
    out.push('\n');
}

fn parse_pmf(line_no: usize, tokens: &[&str]) -> Result<Pmf> {
    let mut probs = BTreeMap::new();
    for tok in tokens {
        let (b, p) = tok
            .split_once(':')
            .ok_or_else(|| Error::parse(line_no, format!("expected <bin>:<prob>, got {tok:?}")))?;
        let b: i32 = b
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad bin {b:?}")))?;
        probs.insert(b, parse_number(line_no, "probability", p)?);
    }
    Pmf::from_probs(probs).map_err(|e| Error::parse(line_no, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Fingerprint;

    fn set(cells: &[(&str, Vec<Vec<(&str, f64)>>)]) -> FingerprintSet {
        let fps = cells
            .iter()
            .map(|(c, samples)| {
                let samples = samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| Sample::from_pairs(i as f64, s).unwrap())
                    .collect();
                Fingerprint::new(CellId::new(*c).unwrap(), samples).unwrap()
            })
            .collect();
        FingerprintSet::new(ValueRange::default(), fps).unwrap()
    }

    fn b(s: &str) -> BaseStationId {
        BaseStationId::new(s).unwrap()
    }

    fn c(s: &str) -> CellId {
        CellId::new(s).unwrap()
    }

    #[test]
    fn nlr_values() {
        let r = ValueRange::default();
        assert!((nlr(37.0, 37.0, &r).unwrap() - 2.0).abs() < 1e-12);
        assert!((nlr(100.0, 50.0, &r).unwrap() - (2f64.log10() + 2.0)).abs() < 1e-12);
        assert!((nlr(81.8, 62.1, &r).unwrap() - 2.12).abs() < 0.005);
        assert!(nlr(0.0, 5.0, &r).is_err());
        assert!((nlr_max(&r) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_stats() {
        let m = DeterministicMap::build(&set(&[(
            "k",
            vec![vec![("a", 80.0), ("b", 5.0)], vec![("a", 82.0)], vec![("a", 84.0)]],
        )]));
        let a = m.get(&c("k"), &b("a")).unwrap();
        assert_eq!(a.mean, 82.0);
        assert!((a.std - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(a.count, 3);
        let bs = m.get(&c("k"), &b("b")).unwrap();
        assert_eq!((bs.std, bs.count), (0.0, 1));
    }

    #[test]
    fn equal_values_give_exact_zero_std() {
        let s = StationStats::from_values(&[0.1, 0.1, 0.1]).unwrap();
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn histogram_counts() {
        let m = HistogramMap::build(&set(&[(
            "k",
            vec![vec![("a", 10.0)], vec![("a", 10.0)], vec![("a", 20.0)]],
        )]));
        let pmf = m.get(&c("k"), &b("a")).unwrap();
        assert!((pmf.prob(10) - 2.0 / 3.0).abs() < 1e-12);
        assert!((pmf.prob(20) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(pmf.likelihood(11, LIKELIHOOD_FLOOR), LIKELIHOOD_FLOOR);
    }

    #[test]
    fn ratio_vector_single_combination() {
        let m = RatioVectorMap::build(
            &set(&[("k", vec![vec![("A", 100.0), ("B", 50.0)]])]),
            RatioAggregation::PairwiseMean,
        )
        .unwrap();
        let pair = StationPair::new(b("B"), b("A")).unwrap();
        assert!((m.get(&c("k"), &pair).unwrap() - 2.3010).abs() < 1e-4);
    }

    #[test]
    fn ratio_vector_crosses_all_observations() {
        // a: {10, 20}, b: {10}; entries are nlr(10,10) and nlr(20,10)
        let m = RatioVectorMap::build(
            &set(&[("k", vec![vec![("a", 10.0), ("b", 10.0)], vec![("a", 20.0)]])]),
            RatioAggregation::PairwiseMean,
        )
        .unwrap();
        let want = (2.0 + (2.0 + 2f64.log10())) / 2.0;
        let got = m.get(&c("k"), &StationPair::new(b("a"), b("b")).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn ratio_bins_cover_domain() {
        let r = ValueRange::default();
        assert_eq!(ratio_bin_count(0.02, &r), 200);
        assert_eq!(ratio_bin(4.0, 0.02, &r), 199);
        assert_eq!(ratio_bin(2.0, 0.02, &r), 100);
        assert_eq!(ratio_bin_count(10.0, &r), 1);
        assert_eq!(ratio_bin(3.9, 10.0, &r), 0);
    }

    #[test]
    fn map_files_round_trip() {
        let fps = set(&[
            ("k", vec![vec![("a", 80.0), ("b", 50.0)], vec![("a", 81.0), ("b", 52.0)]]),
            ("m", vec![vec![("a", 30.0), ("c", 40.0)]]),
        ]);
        for kind in [
            MapKind::Deterministic,
            MapKind::Histogram,
            MapKind::RatioVector,
            MapKind::RatioHistogram,
        ] {
            let map = RadioMap::build(kind, &fps, RatioAggregation::default(), 0.02).unwrap();
            let text = map.to_text();
            let back = RadioMap::parse(&text).unwrap();
            assert_eq!(back, map, "{}", kind.as_str());
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn map_parse_errors_name_lines() {
        let err = RadioMap::parse("#map histogram\n#range 1 100\nk a 10:0.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(RadioMap::parse("k a 1 2 3\n").is_err());
    }
}
