use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::locate::bayes_estimate;
use crate::radiomap::{DeterministicMap, HistogramMap, StationStats};
use crate::stats::normal_cdf;
use crate::types::{BaseStationId, CellId, Observation, Sample, Trace, ValueRange};

use super::still::{segment_stats, StillAnalyzer};

/// Per-station statistics of one group of measurements from a single place.
pub type SegmentStats = BTreeMap<BaseStationId, StationStats>;

/// Linear relation `c(i) = c1 * i + c2` from calibration-scale values `i` to
/// the values a client reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMapping {
    pub c1: f64,
    pub c2: f64,
}

impl Default for LinearMapping {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl fmt::Display for LinearMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.c1, self.c2)
    }
}

impl LinearMapping {
    pub const IDENTITY: LinearMapping = LinearMapping { c1: 1.0, c2: 0.0 };

    pub fn new(c1: f64, c2: f64) -> Self {
        Self { c1, c2 }
    }

    /// Whether the mapping preserves ordering, as any real client should.
    pub fn is_physical(&self) -> bool {
        self.c1 > 0.0
    }

    pub fn forward(&self, i: f64) -> f64 {
        self.c1 * i + self.c2
    }

    /// Calibration-scale value of a client reading, without rounding.
    pub fn inverse(&self, v: f64) -> f64 {
        (v - self.c2) / self.c1
    }

    /// Client statistics expressed on the calibration scale.
    pub fn inverse_stats(&self, s: &StationStats) -> StationStats {
        StationStats {
            mean: self.inverse(s.mean),
            std: s.std / self.c1.abs(),
            count: s.count,
        }
    }

    fn check(&self) -> Result<()> {
        if self.c1 == 0.0 || !self.c1.is_finite() || !self.c2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mapping ({}, {}) is not invertible",
                self.c1, self.c2
            )));
        }
        Ok(())
    }
}

/// Maps client readings onto the calibration scale, rounding and clamping to
/// the value range.
pub fn apply_mapping(m: &LinearMapping, sample: &Sample, range: &ValueRange) -> Result<Sample> {
    m.check()?;
    Ok(sample.map_rss(|v| range.clamp(m.inverse(v).round())))
}

/// Applies the mapping to every sample of a trace.
pub fn apply_mapping_trace(m: &LinearMapping, trace: &Trace) -> Result<Trace> {
    m.check()?;
    Ok(trace.map_samples(|s| s.map_rss(|v| trace.range.clamp(m.inverse(v).round()))))
}

/// Fitted mapping with the root of the (weighted) squared residual sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub mapping: LinearMapping,
    pub residual: f64,
}

/// One row pair of the stacked system: the client's (mean, std) against the
/// calibration (mean, std) with a weight.
#[derive(Debug, Clone, Copy)]
struct Row {
    obs: StationStats,
    cal: StationStats,
    w: f64,
}

/// Solves the weighted normal equations for rows `[mu_c, 1] -> mu_o` and
/// `[sigma_c, 0] -> sigma_o`.
fn solve(rows: &[Row]) -> Result<Fit> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        if !(r.w >= 0.0 && r.w.is_finite()) {
            return Err(Error::InvalidArgument(format!("weight {} is not >= 0", r.w)));
        }
        a11 += r.w * (r.cal.mean * r.cal.mean + r.cal.std * r.cal.std);
        a12 += r.w * r.cal.mean;
        a22 += r.w;
        b1 += r.w * (r.cal.mean * r.obs.mean + r.cal.std * r.obs.std);
        b2 += r.w * r.obs.mean;
    }
    let det = a11 * a22 - a12 * a12;
    let scale = (a11 * a22).abs().max(a12 * a12);
    if !(det.abs() > 1e-12 * scale) || scale == 0.0 {
        return Err(Error::Singular(
            "normal equations have no unique solution".into(),
        ));
    }
    let c1 = (a22 * b1 - a12 * b2) / det;
    let c2 = (a11 * b2 - a12 * b1) / det;
    let residual = rows
        .iter()
        .map(|r| {
            let em = r.obs.mean - (c1 * r.cal.mean + c2);
            let es = r.obs.std - c1 * r.cal.std;
            r.w * (em * em + es * es)
        })
        .sum::<f64>()
        .sqrt();
    Ok(Fit {
        mapping: LinearMapping { c1, c2 },
        residual,
    })
}

/// Least-squares fit from client statistics at known cells.
pub fn fit_manual(obs: &DeterministicMap, cal: &DeterministicMap) -> Result<Fit> {
    let mut rows = Vec::new();
    for (cell, stations) in obs.cells() {
        for (b, o) in stations {
            if let Some(c) = cal.get(cell, b) {
                rows.push(Row {
                    obs: *o,
                    cal: *c,
                    w: 1.0,
                });
            }
        }
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 shared (cell, station) pairs, found {}",
            rows.len()
        )));
    }
    solve(&rows)
}

/// Weighted least-squares fit comparing every observation set against every
/// calibrated cell. `weights[i][cell]` weighs set `i` against `cell`; missing
/// entries count as zero.
pub fn fit_weighted(
    obs_sets: &[SegmentStats],
    cal: &DeterministicMap,
    weights: &[BTreeMap<CellId, f64>],
) -> Result<Fit> {
    if obs_sets.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} observation sets but {} weight rows",
            obs_sets.len(),
            weights.len()
        )));
    }
    let mut rows = Vec::new();
    for (set, w) in obs_sets.iter().zip(weights) {
        for (cell, stations) in cal.cells() {
            let wij = w.get(cell).copied().unwrap_or(0.0);
            for (b, o) in set {
                if let Some(c) = stations.get(b) {
                    rows.push(Row {
                        obs: *o,
                        cal: *c,
                        w: wij,
                    });
                }
            }
        }
    }
    if rows.iter().all(|r| r.w == 0.0) {
        return Err(Error::Singular("all weights are zero".into()));
    }
    solve(&rows)
}

/// Probability mass a Gaussian (or a point mass when `std` is zero) puts on
/// each integer value of the range.
fn value_masses(s: &StationStats, range: &ValueRange) -> Vec<f64> {
    if s.std == 0.0 {
        let v = s.mean.round();
        return range.values().map(|x| if x as f64 == v { 1.0 } else { 0.0 }).collect();
    }
    range
        .values()
        .map(|v| {
            let v = v as f64;
            normal_cdf(v + 0.5, s.mean, s.std) - normal_cdf(v - 0.5, s.mean, s.std)
        })
        .collect()
}

/// Overlap of two stations' value distributions over the range.
pub fn station_overlap(o: &StationStats, c: &StationStats, range: &ValueRange) -> f64 {
    value_masses(o, range)
        .into_iter()
        .zip(value_masses(c, range))
        .map(|(a, b)| a.min(b))
        .sum()
}

/// Average per-station overlap between an observation set and a cell.
/// Stations the cell has no statistics for contribute zero.
pub fn overlap_weight(obs: &SegmentStats, cal: &SegmentStats, range: &ValueRange) -> f64 {
    if obs.is_empty() {
        return 0.0;
    }
    obs.iter()
        .map(|(b, o)| cal.get(b).map_or(0.0, |c| station_overlap(o, c, range)))
        .sum::<f64>()
        / obs.len() as f64
}

/// How the weights of the quasi-automatic fit are derived.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Weighting {
    /// Overlap of the Gaussian value distributions.
    #[default]
    Overlap,
    /// Posterior of Bayesian localization using the set's mean values.
    Bayes,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overlap" => Ok(Weighting::Overlap),
            "bayes" => Ok(Weighting::Bayes),
            other => Err(Error::InvalidArgument(format!("unknown weighting {other:?}"))),
        }
    }
}

/// Weights of every observation set against every cell, after expressing the
/// sets on the calibration scale with `current`.
pub fn compute_weights(
    obs_sets: &[SegmentStats],
    cal: &DeterministicMap,
    hist: &HistogramMap,
    weighting: Weighting,
    current: &LinearMapping,
) -> Result<Vec<BTreeMap<CellId, f64>>> {
    obs_sets
        .iter()
        .map(|set| {
            let normalized: SegmentStats = set
                .iter()
                .map(|(b, s)| (b.clone(), current.inverse_stats(s)))
                .collect();
            match weighting {
                Weighting::Overlap => Ok(cal
                    .cells()
                    .map(|(cell, stations)| {
                        (cell.clone(), overlap_weight(&normalized, stations, &cal.range))
                    })
                    .collect()),
                Weighting::Bayes => {
                    let obs = normalized
                        .iter()
                        .map(|(b, s)| Observation::new(b.clone(), cal.range.clamp(s.mean.round())))
                        .collect();
                    let sample = Sample::new(0.0, obs)?;
                    match bayes_estimate(hist, &sample, None) {
                        Ok(e) => Ok(e.per_cell_scores),
                        Err(Error::Unlocatable(_)) => Ok(BTreeMap::new()),
                        Err(e) => Err(e),
                    }
                }
            }
        })
        .collect()
}

/// Initial guess matching the pooled mean and spread of client and
/// calibration values.
pub fn moment_guess(obs_sets: &[SegmentStats], cal: &DeterministicMap) -> Result<LinearMapping> {
    let pooled = |stats: &mut dyn Iterator<Item = &StationStats>| -> Option<(f64, f64)> {
        let (mut n, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for s in stats {
            let c = s.count as f64;
            n += c;
            s1 += c * s.mean;
            s2 += c * (s.std * s.std + s.mean * s.mean);
        }
        (n > 0.0).then(|| {
            let m = s1 / n;
            (m, (s2 / n - m * m).max(0.0).sqrt())
        })
    };
    let o = pooled(&mut obs_sets.iter().flat_map(|s| s.values()));
    let c = pooled(&mut cal.cells().flat_map(|(_, s)| s.values()));
    match (o, c) {
        (Some((mo, so)), Some((mc, sc))) if sc > 0.0 && so > 0.0 => {
            let c1 = so / sc;
            Ok(LinearMapping::new(c1, mo - c1 * mc))
        }
        (Some(_), Some(_)) => Ok(LinearMapping::IDENTITY),
        _ => Err(Error::InsufficientData("no statistics to compare".into())),
    }
}

/// Stopping rule of the iterative fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iteration {
    pub max_rounds: usize,
    pub tolerance: f64,
}

impl Default for Iteration {
    fn default() -> Self {
        Self {
            max_rounds: 30,
            tolerance: 1e-6,
        }
    }
}

/// Quasi-automatic normalization from observation sets at unknown cells.
///
/// Weights are recomputed with the latest estimate until the mapping stops
/// changing; the first round starts from [`moment_guess`].
pub fn normalize_quasi(
    obs_sets: &[SegmentStats],
    cal: &DeterministicMap,
    hist: &HistogramMap,
    weighting: Weighting,
    iteration: Iteration,
) -> Result<Fit> {
    let mut current = moment_guess(obs_sets, cal)?;
    let mut fit = None;
    for _ in 0..iteration.max_rounds.max(1) {
        let weights = compute_weights(obs_sets, cal, hist, weighting, &current)?;
        let next = fit_weighted(obs_sets, cal, &weights)?;
        let delta = (next.mapping.c1 - current.c1).abs() + (next.mapping.c2 - current.c2).abs();
        current = next.mapping;
        fit = Some(next);
        if delta < iteration.tolerance || !current.is_physical() {
            break;
        }
    }
    Ok(fit.expect("at least one round"))
}

/// Options of [`normalize_automatic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoOptions {
    pub weighting: Weighting,
    pub iteration: Iteration,
    /// Minimum trace duration in seconds.
    pub min_duration: f64,
}

impl Default for AutoOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Bayes,
            iteration: Iteration::default(),
            min_duration: 300.0,
        }
    }
}

/// Automatic normalization from an unlabeled trace.
///
/// The still-period analyzer splits the trace into single-place groups,
/// which then feed the quasi-automatic fit. Segmentation is repeated on the
/// trace as normalized by the latest estimate, so that signal variations are
/// judged on the scale the analyzer was trained for. Without any still
/// segment the whole trace forms one group.
pub fn normalize_automatic(
    trace: &Trace,
    cal: &DeterministicMap,
    hist: &HistogramMap,
    analyzer: &StillAnalyzer,
    options: AutoOptions,
) -> Result<Fit> {
    if trace.duration() < options.min_duration {
        return Err(Error::InsufficientData(format!(
            "trace lasts {} s, at least {} s needed",
            trace.duration(),
            options.min_duration
        )));
    }
    let whole = vec![(
        trace.samples().first().map_or(0.0, |s| s.timestamp()),
        trace.samples().last().map_or(0.0, |s| s.timestamp()),
    )];
    let groups = |segments: &[(f64, f64)]| -> Vec<SegmentStats> {
        let sets = segment_stats(trace, segments, analyzer.min_observations);
        let sets: Vec<_> = sets.into_iter().filter(|s| !s.is_empty()).collect();
        if sets.is_empty() {
            segment_stats(trace, &whole, analyzer.min_observations)
        } else {
            sets
        }
    };
    let initial = groups(&whole);
    let mut current = moment_guess(&initial, cal)?;
    let mut fit = None;
    for _ in 0..options.iteration.max_rounds.max(1) {
        let scaled = trace.map_samples(|s| s.map_rss(|v| current.inverse(v)));
        let segments = analyzer.segments(&scaled)?;
        let sets = groups(&segments);
        let weights = compute_weights(&sets, cal, hist, options.weighting, &current)?;
        let next = fit_weighted(&sets, cal, &weights)?;
        let delta = (next.mapping.c1 - current.c1).abs() + (next.mapping.c2 - current.c2).abs();
        current = next.mapping;
        fit = Some(next);
        if delta < options.iteration.tolerance || !current.is_physical() {
            break;
        }
    }
    Ok(fit.expect("at least one round"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(mean: f64, std: f64) -> StationStats {
        StationStats { mean, std, count: 10 }
    }

    fn b(s: &str) -> BaseStationId {
        BaseStationId::new(s).unwrap()
    }

    fn c(s: &str) -> CellId {
        CellId::new(s).unwrap()
    }

    fn map(entries: &[(&str, &str, f64, f64)]) -> DeterministicMap {
        let mut cells: BTreeMap<CellId, SegmentStats> = BTreeMap::new();
        for (cell, station, m, s) in entries {
            cells.entry(c(cell)).or_default().insert(b(station), st(*m, *s));
        }
        DeterministicMap::from_entries(ValueRange::new(1, 255).unwrap(), cells).unwrap()
    }

    #[test]
    fn mapping_application() {
        let r = ValueRange::default();
        let s = Sample::from_pairs(0.0, &[("a", 43.0), ("b", 5.0)]).unwrap();
        assert_eq!(apply_mapping(&LinearMapping::IDENTITY, &s, &r).unwrap(), s);
        let m = LinearMapping::new(2.0, 3.0);
        let out = apply_mapping(&m, &s, &r).unwrap();
        assert_eq!(out.get(&b("a")), Some(20.0));
        assert_eq!(out.get(&b("b")), Some(1.0));
        assert!(apply_mapping(&LinearMapping::new(0.0, 1.0), &s, &r).is_err());
    }

    #[test]
    fn apply_inverts_forward_inside_range() {
        let r = ValueRange::default();
        for m in [LinearMapping::new(2.0, 3.0), LinearMapping::new(0.8, -5.0)] {
            for i in r.values() {
                let v = m.forward(i as f64);
                if r.contains(v) {
                    let s = Sample::from_pairs(0.0, &[("a", v)]).unwrap();
                    let back = apply_mapping(&m, &s, &r).unwrap();
                    assert_eq!(back.get(&b("a")), Some(i as f64));
                }
            }
        }
    }

    #[test]
    fn manual_fit_recovers_exact_parameters() {
        let cal = map(&[("x", "a", 40.0, 2.0), ("x", "b", 60.0, 3.0), ("y", "a", 20.0, 1.0)]);
        for (c1, c2) in [(2.0, 3.0), (1.0, 0.0), (0.8, -5.0)] {
            let m = LinearMapping::new(c1, c2);
            let obs = map(&[
                ("x", "a", m.forward(40.0), c1 * 2.0),
                ("x", "b", m.forward(60.0), c1 * 3.0),
                ("y", "a", m.forward(20.0), c1 * 1.0),
            ]);
            let fit = fit_manual(&obs, &cal).unwrap();
            assert!((fit.mapping.c1 - c1).abs() < 1e-9);
            assert!((fit.mapping.c2 - c2).abs() < 1e-9);
            assert!(fit.residual < 1e-9);
        }
    }

    #[test]
    fn manual_fit_singular_and_short() {
        let cal = map(&[("x", "a", 40.0, 0.0), ("y", "a", 40.0, 0.0)]);
        let obs = map(&[("x", "a", 50.0, 0.0), ("y", "a", 52.0, 0.0)]);
        assert!(matches!(fit_manual(&obs, &cal), Err(Error::Singular(_))));
        let one = map(&[("x", "a", 50.0, 1.0)]);
        assert!(matches!(fit_manual(&one, &cal), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn weighted_fit_with_true_cell_weights_is_exact() {
        let cal = map(&[("x", "a", 40.0, 2.0), ("x", "b", 60.0, 3.0), ("y", "a", 80.0, 5.0)]);
        let m = LinearMapping::new(2.0, 3.0);
        let set: SegmentStats = [
            (b("a"), st(m.forward(40.0), 4.0)),
            (b("b"), st(m.forward(60.0), 6.0)),
        ]
        .into();
        let w = vec![[(c("x"), 1.0), (c("y"), 0.0)].into()];
        let fit = fit_weighted(&[set.clone()], &cal, &w).unwrap();
        assert!((fit.mapping.c1 - 2.0).abs() < 1e-9 && (fit.mapping.c2 - 3.0).abs() < 1e-9);
        let zero = vec![BTreeMap::new()];
        assert!(matches!(fit_weighted(&[set], &cal, &zero), Err(Error::Singular(_))));
    }

    #[test]
    fn overlap_bounds() {
        let r = ValueRange::new(1, 255).unwrap();
        assert!((station_overlap(&st(50.0, 2.0), &st(50.0, 2.0), &r) - 1.0).abs() < 1e-3);
        assert!(station_overlap(&st(50.0, 1.0), &st(90.0, 1.0), &r) < 1e-9);
        assert_eq!(station_overlap(&st(50.2, 0.0), &st(49.8, 0.0), &r), 1.0);
        let obs: SegmentStats = [(b("a"), st(50.0, 2.0)), (b("z"), st(50.0, 2.0))].into();
        let cal: SegmentStats = [(b("a"), st(50.0, 2.0))].into();
        assert!((overlap_weight(&obs, &cal, &r) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn overlap_matches_numeric_integration() {
        let r = ValueRange::new(1, 255).unwrap();
        // per-value masses by Simpson integration of the Gaussian density
        let mass = |mu: f64, sd: f64, v: f64| {
            let n = 200;
            let h = 1.0 / n as f64;
            let f = |x: f64| crate::stats::normal_pdf(x, mu, sd);
            let mut s = f(v - 0.5) + f(v + 0.5);
            for i in 1..n {
                let x = v - 0.5 + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            s * h / 3.0
        };
        let want: f64 = (1..=255)
            .map(|v| mass(50.0, 2.0, v as f64).min(mass(52.0, 2.0, v as f64)))
            .sum();
        let got = station_overlap(&st(50.0, 2.0), &st(52.0, 2.0), &r);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}
