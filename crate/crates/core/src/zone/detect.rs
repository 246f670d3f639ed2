use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::radiomap::{DeterministicMap, StationStats};
use crate::types::{BaseStationId, CellId, Sample};

/// Default overlap fraction for the common-base-stations detector.
pub const CBS_THRESHOLD: f64 = 0.70;
/// Default Spearman threshold for the ranking detector.
pub const RANK_THRESHOLD: f64 = 0.9;
/// Cells sharing fewer stations with the sample never match.
pub const MIN_COMMON: usize = 3;

/// A non-empty set of cells.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Zone(BTreeSet<CellId>);

impl Zone {
    pub fn new(cells: impl IntoIterator<Item = CellId>) -> Result<Self> {
        let cells: BTreeSet<CellId> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(Error::InvalidArgument("a zone needs at least one cell".into()));
        }
        Ok(Self(cells))
    }

    pub fn cells(&self) -> &BTreeSet<CellId> {
        &self.0
    }

    pub fn contains(&self, cell: &CellId) -> bool {
        self.0.contains(cell)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// In iff the sample sees at least `threshold` of the zone's stations.
pub fn cbs_detect(zone_stations: &BTreeSet<BaseStationId>, sample: &Sample, threshold: f64) -> bool {
    if zone_stations.is_empty() {
        return false;
    }
    let common = sample.stations().filter(|b| zone_stations.contains(*b)).count();
    common as f64 / zone_stations.len() as f64 >= threshold
}

/// Ranks starting at 1; tied values share the average of their ranks.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            out[*k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank-order correlation. Without ties this is the classical
/// `1 - 6 sum d^2 / (n (n^2 - 1))`; with ties it is the Pearson correlation
/// of the average ranks. `None` below two values or when a side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 || n != b.len() {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let distinct = |r: &[f64]| r.iter().all(|x| x.fract() == 0.0) && {
        let s: BTreeSet<u64> = r.iter().map(|x| *x as u64).collect();
        s.len() == n
    };
    if distinct(&ra) && distinct(&rb) {
        let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
        let n = n as f64;
        return Some(1.0 - 6.0 * d2 / (n * (n * n - 1.0)));
    }
    let m = (n as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - m) * (y - m);
        saa += (x - m).powi(2);
        sbb += (y - m).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Per-station mean over a group of samples; the timestamp is the last one's.
pub fn aggregate(samples: &[Sample]) -> Result<Sample> {
    let last = samples
        .last()
        .ok_or_else(|| Error::InsufficientData("nothing to aggregate".into()))?;
    let mut sums: BTreeMap<&BaseStationId, (f64, usize)> = BTreeMap::new();
    for s in samples {
        for o in s.observations() {
            let e = sums.entry(&o.station).or_insert((0.0, 0));
            e.0 += o.rss;
            e.1 += 1;
        }
    }
    let pairs: Vec<(&str, f64)> = sums
        .into_iter()
        .map(|(b, (s, n))| (b.as_str(), s / n as f64))
        .collect();
    Sample::from_pairs(last.timestamp(), &pairs)
}

fn common<'a>(
    cell: &'a BTreeMap<BaseStationId, StationStats>,
    sample: &'a Sample,
) -> Vec<(f64, &'a StationStats)> {
    sample
        .observations()
        .iter()
        .filter_map(|o| cell.get(&o.station).map(|st| (o.rss, st)))
        .collect()
}

/// Spearman coefficient between the sample and one cell's station means;
/// `None` with fewer than three common stations.
pub fn rank_score(cell: &BTreeMap<BaseStationId, StationStats>, sample: &Sample) -> Option<f64> {
    let c = common(cell, sample);
    if c.len() < MIN_COMMON {
        return None;
    }
    let (a, b): (Vec<f64>, Vec<f64>) = c.iter().map(|(v, st)| (*v, st.mean)).unzip();
    spearman(&a, &b)
}

/// In iff some zone cell's ranking correlates at least `threshold`.
pub fn ranking_detect(zone_map: &DeterministicMap, sample: &Sample, threshold: f64) -> bool {
    zone_map
        .cells()
        .any(|(_, cell)| rank_score(cell, sample).is_some_and(|r| r >= threshold))
}

/// Manhattan distance over common stations and the sum of the cell's
/// deviations; `None` with fewer than three common stations.
pub fn manhattan_score(
    cell: &BTreeMap<BaseStationId, StationStats>,
    sample: &Sample,
) -> Option<(f64, f64)> {
    let c = common(cell, sample);
    if c.len() < MIN_COMMON {
        return None;
    }
    let dist = c.iter().map(|(v, st)| (v - st.mean).abs()).sum();
    let threshold = cell.values().map(|st| st.std).sum();
    Some((dist, threshold))
}

/// In iff some zone cell lies strictly within its distance threshold.
pub fn manhattan_detect(zone_map: &DeterministicMap, sample: &Sample) -> bool {
    zone_map
        .cells()
        .any(|(_, cell)| manhattan_score(cell, sample).is_some_and(|(d, t)| d < t))
}

/// Sliding group of the newest `m` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregator {
    m: usize,
    buf: VecDeque<Sample>,
}

impl Aggregator {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("aggregation needs at least one sample".into()));
        }
        Ok(Self {
            m,
            buf: VecDeque::with_capacity(m),
        })
    }

    pub fn push(&mut self, s: &Sample) -> Result<Sample> {
        if self.m == 1 {
            return Ok(s.clone());
        }
        if self.buf.len() == self.m {
            self.buf.pop_front();
        }
        self.buf.push_back(s.clone());
        aggregate(self.buf.make_contiguous())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(xs: &[&str]) -> BTreeSet<BaseStationId> {
        xs.iter().map(|x| BaseStationId::new(*x).unwrap()).collect()
    }

    fn sample(pairs: &[(&str, f64)]) -> Sample {
        Sample::from_pairs(0.0, pairs).unwrap()
    }

    fn cell_map(cells: &[(&str, &[(&str, f64, f64)])]) -> DeterministicMap {
        let entries = cells
            .iter()
            .map(|(c, st)| {
                let per = st
                    .iter()
                    .map(|(b, m, s)| {
                        (
                            BaseStationId::new(*b).unwrap(),
                            StationStats {
                                mean: *m,
                                std: *s,
                                count: 10,
                            },
                        )
                    })
                    .collect();
                (CellId::new(*c).unwrap(), per)
            })
            .collect();
        DeterministicMap::from_entries(Default::default(), entries).unwrap()
    }

    #[test]
    fn cbs_examples() {
        let zone = ids(&["a", "b", "c", "d"]);
        assert!(cbs_detect(&zone, &sample(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]), CBS_THRESHOLD));
        assert!(!cbs_detect(&zone, &sample(&[("x", 1.0)]), CBS_THRESHOLD));
        let all: Vec<_> = ["a", "b", "c", "d", "e"].iter().map(|b| (*b, 1.0)).collect();
        assert!(cbs_detect(&zone, &sample(&all), CBS_THRESHOLD));
        assert!(!cbs_detect(&BTreeSet::new(), &sample(&all), CBS_THRESHOLD));
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&a, &a), Some(1.0));
        assert_eq!(spearman(&a, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        let s = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(s >= RANK_THRESHOLD, "{s}");
        assert!((s - 0.9).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &a[..3]), None);
    }

    #[test]
    fn average_ranks_for_ties() {
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 3.0]), vec![3.5, 1.0, 3.5, 2.0]);
        // Pearson of (1, 2.5, 2.5, 4) against (1, 2, 3, 4)
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let want = 4.5 / (4.5f64 * 5.0).sqrt();
        assert!((r - want).abs() < 1e-12);
    }

    #[test]
    fn ranking_needs_three_common_stations() {
        let m = cell_map(&[("c1", &[("a", 60.0, 1.0), ("b", 50.0, 1.0), ("c", 40.0, 1.0)])]);
        assert!(ranking_detect(&m, &sample(&[("a", 70.0), ("b", 55.0), ("c", 20.0)]), RANK_THRESHOLD));
        assert!(!ranking_detect(&m, &sample(&[("a", 20.0), ("b", 55.0), ("c", 70.0)]), RANK_THRESHOLD));
        assert!(!ranking_detect(&m, &sample(&[("a", 70.0), ("b", 55.0)]), RANK_THRESHOLD));
    }

    #[test]
    fn manhattan_examples() {
        let m = cell_map(&[("c1", &[("a", 50.0, 2.0), ("b", 40.0, 3.0), ("c", 30.0, 4.0)])]);
        // deviations 2, 3, 0 over all three stations: 5 < 9
        let s = sample(&[("a", 52.0), ("b", 37.0), ("c", 30.0)]);
        assert_eq!(manhattan_score(m.cell(&CellId::new("c1").unwrap()).unwrap(), &s), Some((5.0, 9.0)));
        assert!(manhattan_detect(&m, &s));
        assert!(!manhattan_detect(&m, &sample(&[("a", 60.0), ("b", 30.0), ("c", 30.0)])));
        // exactly at the threshold is out
        assert!(!manhattan_detect(&m, &sample(&[("a", 59.0), ("b", 40.0), ("c", 30.0)])));
    }

    #[test]
    fn aggregation_averages_per_station() {
        let s = [
            Sample::from_pairs(0.0, &[("a", 10.0), ("b", 4.0)]).unwrap(),
            Sample::from_pairs(1.0, &[("a", 20.0)]).unwrap(),
        ];
        let g = aggregate(&s).unwrap();
        assert_eq!(g.timestamp(), 1.0);
        assert_eq!(g.get(&BaseStationId::new("a").unwrap()), Some(15.0));
        assert_eq!(g.get(&BaseStationId::new("b").unwrap()), Some(4.0));
    }

    fn brute_manhattan(m: &DeterministicMap, s: &Sample) -> bool {
        for (_, cell) in m.cells() {
            let mut n = 0;
            let mut d = 0.0;
            for (b, st) in cell {
                if let Some(v) = s.get(b) {
                    n += 1;
                    d += (v - st.mean).abs();
                }
            }
            let t: f64 = cell.values().map(|st| st.std).sum();
            if n >= 3 && d < t {
                return true;
            }
        }
        false
    }

    proptest! {
        #[test]
        fn manhattan_matches_brute_force(
            means in prop::collection::vec((30.0f64..70.0, 0.0f64..4.0), 12),
            obs in prop::collection::vec(prop::option::of(30.0f64..70.0), 6),
        ) {
            let names = ["a", "b", "c", "d", "e", "f"];
            let c1: Vec<_> = (0..6).map(|i| (names[i], means[i].0, means[i].1)).collect();
            let c2: Vec<_> = (0..6).map(|i| (names[i], means[i + 6].0, means[i + 6].1)).collect();
            let m = cell_map(&[("c1", &c1), ("c2", &c2[..4])]);
            let pairs: Vec<_> = names.iter().zip(&obs).filter_map(|(n, v)| v.map(|v| (*n, v))).collect();
            prop_assume!(!pairs.is_empty());
            let s = sample(&pairs);
            prop_assert_eq!(manhattan_detect(&m, &s), brute_manhattan(&m, &s));
        }

        #[test]
        fn cbs_is_monotone(extra in 0usize..4, base in prop::collection::btree_set(0usize..8, 1..8)) {
            let zone: BTreeSet<BaseStationId> = (0..4).map(|i| BaseStationId::new(format!("z{i}")).unwrap()).collect();
            let mut pairs: Vec<(String, f64)> = base.iter().map(|i| (format!("z{i}"), 1.0)).collect();
            let before = cbs_detect(&zone, &Sample::from_pairs(0.0, &pairs).unwrap(), CBS_THRESHOLD);
            if !base.contains(&extra) {
                pairs.push((format!("z{extra}"), 1.0));
            }
            let after = cbs_detect(&zone, &Sample::from_pairs(0.0, &pairs).unwrap(), CBS_THRESHOLD);
            prop_assert!(!before || after);
        }
    }
}
