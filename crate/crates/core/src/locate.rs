//! Per-sample cell estimators.
//!
//! All estimators skip stations (or station pairs) a cell has no model for,
//! and exclude cells that share nothing with the sample. Ties go to the
//! lexicographically smallest cell.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::radiomap::{
    rss_bin, sample_ratios, DeterministicMap, HistogramMap, RadioMap, RatioHistogramMap,
    RatioVectorMap, LIKELIHOOD_FLOOR,
};
use crate::types::{CellId, Sample};

/// Result of locating one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    pub cell: CellId,
    /// Distance for deterministic estimators, posterior probability for
    /// probabilistic ones.
    pub score: f64,
    pub per_cell_scores: BTreeMap<CellId, f64>,
}

/// Prior over cells; `None` means uniform over the map's cells.
pub type Prior = BTreeMap<CellId, f64>;

fn argmin(scores: BTreeMap<CellId, f64>, what: &str) -> Result<CellEstimate> {
    let mut best: Option<(&CellId, f64)> = None;
    for (c, s) in &scores {
        if best.is_none_or(|(_, b)| *s < b) {
            best = Some((c, *s));
        }
    }
    let (cell, score) = best.ok_or_else(|| Error::Unlocatable(what.to_string()))?;
    Ok(CellEstimate {
        cell: cell.clone(),
        score,
        per_cell_scores: scores.clone(),
    })
}

/// Normalizes log scores to a posterior and picks the most probable cell.
fn posterior(log_scores: BTreeMap<CellId, f64>, what: &str) -> Result<CellEstimate> {
    let max = log_scores
        .values()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Unlocatable(what.to_string()));
    }
    let total: f64 = log_scores.values().map(|l| (l - max).exp()).sum();
    let probs: BTreeMap<CellId, f64> = log_scores
        .into_iter()
        .map(|(c, l)| (c, (l - max).exp() / total))
        .collect();
    let mut best: Option<(&CellId, f64)> = None;
    for (c, p) in &probs {
        if best.is_none_or(|(_, b)| *p > b) {
            best = Some((c, *p));
        }
    }
    let (cell, score) = best.expect("non-empty posterior");
    Ok(CellEstimate {
        cell: cell.clone(),
        score,
        per_cell_scores: probs.clone(),
    })
}

fn check_prior(prior: Option<&Prior>) -> Result<()> {
    if let Some(p) = prior {
        let total: f64 = p.values().sum();
        if p.values().any(|v| *v < 0.0) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "prior must be a pmf, sums to {total}"
            )));
        }
    }
    Ok(())
}

fn log_prior(prior: Option<&Prior>, cell: &CellId) -> f64 {
    match prior {
        None => 0.0,
        Some(p) => p.get(cell).copied().unwrap_or(0.0).ln(),
    }
}

/// Nearest neighbour in signal-strength space over common stations.
pub fn nn_estimate(map: &DeterministicMap, sample: &Sample) -> Result<CellEstimate> {
    let mut scores = BTreeMap::new();
    for (cell, stats) in map.cells() {
        let mut common = 0;
        let mut sum = 0.0;
        for o in sample.observations() {
            if let Some(s) = stats.get(&o.station) {
                common += 1;
                sum += (o.rss - s.mean).powi(2);
            }
        }
        if common > 0 {
            scores.insert(cell.clone(), sum.sqrt());
        }
    }
    argmin(scores, "no cell shares a station with the sample")
}

/// Bayesian inference over absolute signal strengths.
pub fn bayes_estimate(
    map: &HistogramMap,
    sample: &Sample,
    prior: Option<&Prior>,
) -> Result<CellEstimate> {
    bayes_estimate_with_floor(map, sample, prior, LIKELIHOOD_FLOOR)
}

pub fn bayes_estimate_with_floor(
    map: &HistogramMap,
    sample: &Sample,
    prior: Option<&Prior>,
    floor: f64,
) -> Result<CellEstimate> {
    check_prior(prior)?;
    let mut logs = BTreeMap::new();
    for (cell, pmfs) in map.cells() {
        let mut common = 0;
        let mut l = log_prior(prior, cell);
        for o in sample.observations() {
            if let Some(pmf) = pmfs.get(&o.station) {
                common += 1;
                l += pmf.likelihood(rss_bin(o.rss), floor).ln();
            }
        }
        if common > 0 {
            logs.insert(cell.clone(), l);
        }
    }
    posterior(logs, "no cell shares a station with the sample")
}

/// Nearest neighbour in ratio space over pairs known to both sample and cell.
pub fn hlf_nn_estimate(map: &RatioVectorMap, sample: &Sample) -> Result<CellEstimate> {
    if sample.len() < 2 {
        return Err(Error::Unlocatable(
            "ratio estimation needs at least two observed stations".into(),
        ));
    }
    let ratios = sample_ratios(sample, &map.range)?;
    let mut scores = BTreeMap::new();
    for (cell, entries) in map.cells() {
        let mut common = 0;
        let mut sum = 0.0;
        for (pair, r) in &ratios {
            if let Some(v) = entries.get(pair) {
                common += 1;
                sum += (r - v).powi(2);
            }
        }
        if common > 0 {
            scores.insert(cell.clone(), sum.sqrt());
        }
    }
    argmin(scores, "no cell shares a station pair with the sample")
}

/// Bayesian inference over pair ratios.
pub fn hlf_bayes_estimate(
    map: &RatioHistogramMap,
    sample: &Sample,
    prior: Option<&Prior>,
) -> Result<CellEstimate> {
    check_prior(prior)?;
    if sample.len() < 2 {
        return Err(Error::Unlocatable(
            "ratio estimation needs at least two observed stations".into(),
        ));
    }
    let ratios: Vec<_> = sample_ratios(sample, &map.range)?
        .into_iter()
        .map(|(p, r)| (p, map.bin(r)))
        .collect();
    let mut logs = BTreeMap::new();
    for (cell, pmfs) in map.cells() {
        let mut common = 0;
        let mut l = log_prior(prior, cell);
        for (pair, bin) in &ratios {
            if let Some(pmf) = pmfs.get(pair) {
                common += 1;
                l += pmf.likelihood(*bin, LIKELIHOOD_FLOOR).ln();
            }
        }
        if common > 0 {
            logs.insert(cell.clone(), l);
        }
    }
    posterior(logs, "no cell shares a station pair with the sample")
}

/// Keeps the `k` strongest observations, preferring smaller station ids on ties.
pub fn k_strongest_filter(sample: &Sample, k: usize) -> Result<Sample> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k >= sample.len() {
        return Ok(sample.clone());
    }
    let mut ranked: Vec<_> = sample.observations().iter().collect();
    // observations are already sorted by station id, so a stable sort keeps that order on ties
    ranked.sort_by(|a, b| b.rss.total_cmp(&a.rss));
    let keep: BTreeSet<_> = ranked[..k].iter().map(|o| o.station.clone()).collect();
    Ok(sample.retain(|o| keep.contains(&o.station)))
}

/// Estimator selector for command-line use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Nn,
    Bayes,
    HlfNn,
    HlfBayes,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Nn => "nn",
            Method::Bayes => "bayes",
            Method::HlfNn => "hlf-nn",
            Method::HlfBayes => "hlf-bayes",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "nn" => Method::Nn,
            "bayes" => Method::Bayes,
            "hlf-nn" => Method::HlfNn,
            "hlf-bayes" => Method::HlfBayes,
            other => return Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        })
    }
}

/// Runs `method` against a map of the matching kind with a uniform prior.
pub fn estimate(map: &RadioMap, method: Method, sample: &Sample) -> Result<CellEstimate> {
    match (map, method) {
        (RadioMap::Deterministic(m), Method::Nn) => nn_estimate(m, sample),
        (RadioMap::Histogram(m), Method::Bayes) => bayes_estimate(m, sample, None),
        (RadioMap::RatioVector(m), Method::HlfNn) => hlf_nn_estimate(m, sample),
        (RadioMap::RatioHistogram(m), Method::HlfBayes) => hlf_bayes_estimate(m, sample, None),
        (map, method) => Err(Error::InvalidArgument(format!(
            "method {} cannot use a {} map",
            method.as_str(),
            map.kind().as_str()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radiomap::{RatioAggregation, StationStats};
    use crate::types::{BaseStationId, Fingerprint, FingerprintSet, ValueRange};

    fn c(s: &str) -> CellId {
        CellId::new(s).unwrap()
    }

    fn det(cells: &[(&str, &[(&str, f64)])]) -> DeterministicMap {
        let cells = cells
            .iter()
            .map(|(cell, stations)| {
                let per = stations
                    .iter()
                    .map(|(b, m)| {
                        let s = StationStats { mean: *m, std: 1.0, count: 1 };
                        (BaseStationId::new(*b).unwrap(), s)
                    })
                    .collect();
                (c(cell), per)
            })
            .collect();
        DeterministicMap::from_entries(ValueRange::default(), cells).unwrap()
    }

    fn fps(cells: &[(&str, &[&[(&str, f64)]])]) -> FingerprintSet {
        let f = cells
            .iter()
            .map(|(cell, samples)| {
                let s = samples
                    .iter()
                    .map(|p| Sample::from_pairs(0.0, p).unwrap())
                    .collect();
                Fingerprint::new(c(cell), s).unwrap()
            })
            .collect();
        FingerprintSet::new(ValueRange::default(), f).unwrap()
    }

    #[test]
    fn nn_exact_match_and_tie() {
        let map = det(&[("x", &[("a", 50.0)]), ("y", &[("a", 60.0)])]);
        let s = Sample::from_pairs(0.0, &[("a", 50.0)]).unwrap();
        let e = nn_estimate(&map, &s).unwrap();
        assert_eq!((e.cell.as_str(), e.score), ("x", 0.0));
        let mid = Sample::from_pairs(0.0, &[("a", 55.0)]).unwrap();
        assert_eq!(nn_estimate(&map, &mid).unwrap().cell, c("x"));
    }

    #[test]
    fn nn_oracle_three_cells() {
        let map = det(&[
            ("p", &[("a", 10.0), ("b", 20.0)]),
            ("q", &[("a", 30.0), ("c", 5.0)]),
            ("r", &[("b", 25.0), ("c", 9.0)]),
        ]);
        let s = Sample::from_pairs(0.0, &[("a", 20.0), ("b", 22.0), ("c", 7.0)]).unwrap();
        let e = nn_estimate(&map, &s).unwrap();
        let want = [
            ("p", (100.0f64 + 4.0).sqrt()),
            ("q", (100.0f64 + 4.0).sqrt()),
            ("r", (9.0f64 + 4.0).sqrt()),
        ];
        for (cell, d) in want {
            assert!((e.per_cell_scores[&c(cell)] - d).abs() < 1e-12);
        }
        assert_eq!(e.cell, c("r"));
    }

    #[test]
    fn nn_unlocatable_without_common_station() {
        let map = det(&[("x", &[("a", 50.0)])]);
        let s = Sample::from_pairs(0.0, &[("z", 50.0)]).unwrap();
        assert!(matches!(nn_estimate(&map, &s), Err(Error::Unlocatable(_))));
    }

    #[test]
    fn bayes_hand_multiplied() {
        let map = HistogramMap::build(&fps(&[
            ("x", &[&[("a", 10.0), ("b", 20.0)], &[("a", 11.0), ("b", 20.0)]]),
            ("y", &[&[("a", 10.0), ("b", 21.0)], &[("a", 10.0), ("b", 21.0)]]),
            ("z", &[&[("a", 12.0)]]),
        ]));
        let s = Sample::from_pairs(0.0, &[("a", 10.0), ("b", 20.0)]).unwrap();
        let e = bayes_estimate(&map, &s, None).unwrap();
        let (lx, ly, lz) = (0.5 * 1.0, 1.0 * LIKELIHOOD_FLOOR, LIKELIHOOD_FLOOR);
        let t = lx + ly + lz;
        assert!((e.per_cell_scores[&c("x")] - lx / t).abs() < 1e-12);
        assert!((e.per_cell_scores[&c("y")] - ly / t).abs() < 1e-12);
        assert!((e.per_cell_scores[&c("z")] - lz / t).abs() < 1e-12);
        assert_eq!(e.cell, c("x"));
    }

    #[test]
    fn bayes_point_prior_wins() {
        let map = HistogramMap::build(&fps(&[
            ("x", &[&[("a", 10.0)]]),
            ("y", &[&[("a", 20.0)]]),
        ]));
        let s = Sample::from_pairs(0.0, &[("a", 20.0)]).unwrap();
        let prior: Prior = [(c("x"), 1.0), (c("y"), 0.0)].into();
        let e = bayes_estimate(&map, &s, Some(&prior)).unwrap();
        assert_eq!(e.cell, c("x"));
        assert!((e.score - 1.0).abs() < 1e-12);
        let bad: Prior = [(c("x"), 0.5)].into();
        assert!(bayes_estimate(&map, &s, Some(&bad)).is_err());
    }

    #[test]
    fn bayes_uniform_when_likelihoods_equal() {
        let map = HistogramMap::build(&fps(&[
            ("x", &[&[("a", 10.0)]]),
            ("y", &[&[("a", 10.0)]]),
        ]));
        let s = Sample::from_pairs(0.0, &[("a", 10.0)]).unwrap();
        let e = bayes_estimate(&map, &s, None).unwrap();
        assert!(e.per_cell_scores.values().all(|p| (p - 0.5).abs() < 1e-12));
        assert_eq!(e.cell, c("x"));
    }

    #[test]
    fn hlf_nn_single_pair_distance() {
        let pair = crate::radiomap::StationPair::new(
            BaseStationId::new("a").unwrap(),
            BaseStationId::new("b").unwrap(),
        )
        .unwrap();
        let map = RatioVectorMap::from_entries(
            ValueRange::default(),
            [(c("x"), [(pair, 2.12)].into())].into(),
        );
        let s = Sample::from_pairs(0.0, &[("a", 40.0), ("b", 40.0)]).unwrap();
        let e = hlf_nn_estimate(&map, &s).unwrap();
        assert!((e.score - 0.12).abs() < 1e-12);
        let one = Sample::from_pairs(0.0, &[("a", 40.0)]).unwrap();
        assert!(matches!(hlf_nn_estimate(&map, &one), Err(Error::Unlocatable(_))));
    }

    #[test]
    fn hlf_nn_ignores_common_gain() {
        let f = fps(&[
            ("x", &[&[("a", 80.0), ("b", 40.0), ("c", 20.0)]]),
            ("y", &[&[("a", 30.0), ("b", 60.0), ("c", 50.0)]]),
        ]);
        let map = RatioVectorMap::build(&f, RatioAggregation::PairwiseMean).unwrap();
        let s = Sample::from_pairs(0.0, &[("a", 80.0), ("b", 40.0), ("c", 20.0)]).unwrap();
        let e = hlf_nn_estimate(&map, &s).unwrap();
        let scaled = hlf_nn_estimate(&map, &s.map_rss(|v| v * 1.5)).unwrap();
        assert_eq!(e.cell, c("x"));
        assert!(e.score < 1e-12);
        assert_eq!(scaled.cell, e.cell);
    }

    #[test]
    fn hlf_bayes_hand_computed() {
        let f = fps(&[
            ("x", &[&[("a", 50.0), ("b", 50.0)], &[("a", 100.0), ("b", 50.0)]]),
            ("y", &[&[("a", 100.0), ("b", 50.0)]]),
        ]);
        let map = RatioHistogramMap::build(&f, 0.02).unwrap();
        let s = Sample::from_pairs(0.0, &[("a", 20.0), ("b", 20.0)]).unwrap();
        let e = hlf_bayes_estimate(&map, &s, None).unwrap();
        let (lx, ly) = (0.5, LIKELIHOOD_FLOOR);
        assert!((e.per_cell_scores[&c("x")] - lx / (lx + ly)).abs() < 1e-9);
        assert_eq!(e.cell, c("x"));
    }

    #[test]
    fn k_strongest() {
        let s = Sample::from_pairs(
            3.0,
            &[("a", 10.0), ("b", 50.0), ("c", 30.0), ("d", 30.0), ("e", 40.0)],
        )
        .unwrap();
        let f = k_strongest_filter(&s, 3).unwrap();
        let ids: Vec<_> = f.stations().map(|b| b.as_str()).collect();
        assert_eq!(ids, ["b", "c", "e"]);
        assert_eq!(f.timestamp(), 3.0);
        assert_eq!(k_strongest_filter(&s, 9).unwrap(), s);
        assert_eq!(k_strongest_filter(&f, 3).unwrap(), f);
        assert!(k_strongest_filter(&s, 0).is_err());
    }

    #[test]
    fn method_must_match_map() {
        let map = RadioMap::Deterministic(det(&[("x", &[("a", 1.0)])]));
        let s = Sample::from_pairs(0.0, &[("a", 1.0)]).unwrap();
        assert!(estimate(&map, Method::Nn, &s).is_ok());
        assert!(estimate(&map, Method::Bayes, &s).is_err());
    }
}
