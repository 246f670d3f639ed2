use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::radiomap::{rss_bin, LIKELIHOOD_FLOOR};
use crate::types::{BaseStationId, FingerprintSet, Sample, ValueRange};

use super::detect::Zone;

/// Probability of keeping the current hypothesis between two samples.
pub const DEFAULT_P_SUSTAIN: f64 = 0.99;
/// Largest station roster shipped to a terminal.
pub const MAX_STATIONS: usize = 12;

/// Two-hypothesis emission model: row `i` of `in_zone` is P(v | station i,
/// in zone) over the value range, `out_zone` the same outside the zone. A
/// station never observed under a hypothesis has an all-zero row.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesZoneModel {
    pub range: ValueRange,
    pub p_sustain: f64,
    pub stations: Vec<BaseStationId>,
    pub in_zone: Vec<Vec<f64>>,
    pub out_zone: Vec<Vec<f64>>,
}

fn histogram_rows(
    fps: &FingerprintSet,
    stations: &[BaseStationId],
    keep: impl Fn(&crate::types::CellId) -> bool,
) -> Vec<Vec<f64>> {
    let range = fps.range;
    let mut counts = vec![vec![0usize; range.len()]; stations.len()];
    let index: BTreeMap<&BaseStationId, usize> =
        stations.iter().enumerate().map(|(i, b)| (b, i)).collect();
    for (cell, fp) in fps.iter() {
        if !keep(cell) {
            continue;
        }
        for s in fp.samples() {
            for o in s.observations() {
                if let Some(i) = index.get(&o.station) {
                    let v = rss_bin(range.clamp(o.rss)) - range.min();
                    counts[*i][v as usize] += 1;
                }
            }
        }
    }
    counts
        .into_iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.into_iter()
                .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect()
}

impl BayesZoneModel {
    /// Histogram model from the fingerprints inside and outside `zone`; the
    /// roster keeps the `max_stations` stations seen most often in the zone.
    pub fn build(zone: &Zone, fps: &FingerprintSet, max_stations: usize, p_sustain: f64) -> Result<Self> {
        check_sustain(p_sustain)?;
        if fps.cells().all(|c| zone.contains(c)) {
            return Err(Error::InvalidArgument("zone covers every cell, nothing is outside".into()));
        }
        let mut seen: BTreeMap<&BaseStationId, usize> = BTreeMap::new();
        for (cell, fp) in fps.iter() {
            if zone.contains(cell) {
                for s in fp.samples() {
                    for b in s.stations() {
                        *seen.entry(b).or_insert(0) += 1;
                    }
                }
            }
        }
        if seen.is_empty() {
            return Err(Error::InsufficientData("no fingerprints inside the zone".into()));
        }
        let mut ranked: Vec<(&BaseStationId, usize)> = seen.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut stations: Vec<BaseStationId> =
            ranked.into_iter().take(max_stations.max(1)).map(|(b, _)| b.clone()).collect();
        stations.sort();
        Ok(Self {
            range: fps.range,
            p_sustain,
            in_zone: histogram_rows(fps, &stations, |c| zone.contains(c)),
            out_zone: histogram_rows(fps, &stations, |c| !zone.contains(c)),
            stations,
        })
    }

    pub fn station_index(&self, b: &BaseStationId) -> Option<usize> {
        self.stations.binary_search(b).ok()
    }

    /// P(v | H0) and P(v | H1) for one observation with the lookup floor
    /// applied; `None` for stations outside the roster.
    pub fn likelihoods(&self, b: &BaseStationId, rss: f64) -> Option<(f64, f64)> {
        let i = self.station_index(b)?;
        let v = (rss_bin(self.range.clamp(rss)) - self.range.min()) as usize;
        Some((
            self.in_zone[i][v].max(LIKELIHOOD_FLOOR),
            self.out_zone[i][v].max(LIKELIHOOD_FLOOR),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        check_sustain(self.p_sustain)?;
        let n = self.range.len();
        if self.in_zone.len() != self.stations.len() || self.out_zone.len() != self.stations.len() {
            return Err(Error::invariant("zone model needs one row per station and hypothesis"));
        }
        if self.stations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invariant("zone model stations must be sorted and distinct"));
        }
        for row in self.in_zone.iter().chain(&self.out_zone) {
            let total: f64 = row.iter().sum();
            if row.len() != n || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invariant("zone model row has bad length or probabilities"));
            }
            if total != 0.0 && (total - 1.0).abs() > 1e-6 {
                return Err(Error::invariant(format!("zone model row sums to {total}")));
            }
        }
        Ok(())
    }
}

fn check_sustain(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sustain probability must lie in (0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Applies `A = [[Ps, Pch], [Pch, Ps]]` to the belief.
pub fn markov_step(belief: [f64; 2], p_sustain: f64) -> [f64; 2] {
    let p_ch = 1.0 - p_sustain;
    [
        p_sustain * belief[0] + p_ch * belief[1],
        p_ch * belief[0] + p_sustain * belief[1],
    ]
}

/// Bayes update of the belief with P(o | H0) and P(o | H1).
pub fn bayes_update(belief: [f64; 2], l0: f64, l1: f64) -> [f64; 2] {
    let a = l0 * belief[0];
    let b = l1 * belief[1];
    let total = a + b;
    if !(total > 0.0) {
        return belief;
    }
    [a / total, b / total]
}

/// Terminal-side Bayes zone detector.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesZoneDetector {
    pub model: BayesZoneModel,
    belief: [f64; 2],
}

impl BayesZoneDetector {
    pub fn new(model: BayesZoneModel) -> Self {
        Self {
            model,
            belief: [0.5, 0.5],
        }
    }

    /// P(H0) and P(H1).
    pub fn belief(&self) -> [f64; 2] {
        self.belief
    }

    pub fn inside(&self) -> bool {
        self.belief[0] >= self.belief[1]
    }

    /// One Markov step, then a Bayes update per roster observation.
    pub fn step(&mut self, sample: &Sample) -> bool {
        self.belief = markov_step(self.belief, self.model.p_sustain);
        for o in sample.observations() {
            if let Some((l0, l1)) = self.model.likelihoods(&o.station, o.rss) {
                self.belief = bayes_update(self.belief, l0, l1);
            }
        }
        self.inside()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CellId, Fingerprint};
    use proptest::prelude::*;

    fn fps(cells: &[(&str, &[&[(&str, f64)]])]) -> FingerprintSet {
        let fps = cells
            .iter()
            .map(|(c, rows)| {
                let samples = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| Sample::from_pairs(i as f64, r).unwrap())
                    .collect();
                Fingerprint::new(CellId::new(*c).unwrap(), samples).unwrap()
            })
            .collect();
        FingerprintSet::new(ValueRange::default(), fps).unwrap()
    }

    fn zone(cells: &[&str]) -> Zone {
        Zone::new(cells.iter().map(|c| CellId::new(*c).unwrap())).unwrap()
    }

    #[test]
    fn markov_and_bayes_arithmetic() {
        assert_eq!(markov_step([1.0, 0.0], 0.99), [0.99, 1.0 - 0.99]);
        let b = bayes_update([0.5, 0.5], 0.2, 0.1);
        assert!((b[0] - 2.0 / 3.0).abs() < 1e-12 && (b[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(bayes_update([0.5, 0.5], 0.3, 0.3), [0.5, 0.5]);
    }

    #[test]
    fn model_equals_counting() {
        let f = fps(&[
            ("in", &[&[("a", 50.0), ("b", 20.0)], &[("a", 52.0)], &[("a", 50.0)]]),
            ("out", &[&[("a", 10.0)], &[("a", 12.0), ("c", 5.0)]]),
        ]);
        let m = BayesZoneModel::build(&zone(&["in"]), &f, MAX_STATIONS, 0.99).unwrap();
        m.validate().unwrap();
        assert_eq!(m.stations.iter().map(|b| b.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        let a = &m.in_zone[0];
        assert_eq!((a[50 - 1], a[52 - 1]), (2.0 / 3.0, 1.0 / 3.0));
        assert_eq!(m.out_zone[0][10 - 1], 0.5);
        // b is never seen outside: all-zero row, the floor applies
        assert!(m.out_zone[1].iter().all(|p| *p == 0.0));
        let b = BaseStationId::new("b").unwrap();
        assert_eq!(m.likelihoods(&b, 20.0), Some((1.0, LIKELIHOOD_FLOOR)));
        assert_eq!(m.likelihoods(&BaseStationId::new("c").unwrap(), 5.0), None);
    }

    #[test]
    fn roster_keeps_most_frequent() {
        let f = fps(&[
            ("in", &[&[("a", 50.0), ("b", 20.0)], &[("a", 52.0), ("c", 3.0)], &[("a", 50.0), ("c", 4.0)]]),
            ("out", &[&[("a", 10.0)]]),
        ]);
        let m = BayesZoneModel::build(&zone(&["in"]), &f, 2, 0.99).unwrap();
        assert_eq!(m.stations.iter().map(|b| b.as_str()).collect::<Vec<_>>(), ["a", "c"]);
    }

    #[test]
    fn zone_with_everything_is_rejected() {
        let f = fps(&[("x", &[&[("a", 50.0)]])]);
        assert!(BayesZoneModel::build(&zone(&["x"]), &f, MAX_STATIONS, 0.99).is_err());
    }

    #[test]
    fn separated_supports_drive_the_verdict() {
        let f = fps(&[
            ("in", &[&[("a", 50.0)], &[("a", 51.0)]]),
            ("out", &[&[("a", 10.0)], &[("a", 11.0)]]),
        ]);
        let m = BayesZoneModel::build(&zone(&["in"]), &f, MAX_STATIONS, 0.99).unwrap();
        let mut d = BayesZoneDetector::new(m);
        assert!(d.step(&Sample::from_pairs(0.0, &[("a", 50.0)]).unwrap()));
        assert!(d.belief()[0] > 0.999);
        assert!(!d.step(&Sample::from_pairs(1.0, &[("a", 10.0)]).unwrap()));
    }

    proptest! {
        #[test]
        fn belief_stays_normalized(obs in prop::collection::vec((0usize..3, 1.0f64..100.0), 1..60)) {
            let f = fps(&[
                ("in", &[&[("a", 50.0), ("b", 30.0)], &[("a", 48.0), ("c", 70.0)]]),
                ("out", &[&[("a", 20.0), ("b", 31.0)], &[("c", 10.0)]]),
            ]);
            let m = BayesZoneModel::build(&zone(&["in"]), &f, MAX_STATIONS, 0.99).unwrap();
            let mut d = BayesZoneDetector::new(m);
            for (i, (b, v)) in obs.iter().enumerate() {
                d.step(&Sample::from_pairs(i as f64, &[(["a", "b", "c"][*b], *v)]).unwrap());
                let p = d.belief();
                prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn equal_likelihoods_never_flip(start in 0.0f64..1.0, steps in 1usize..50) {
            let mut b = [start, 1.0 - start];
            let before = b[0] >= b[1];
            for _ in 0..steps {
                b = bayes_update(markov_step(b, 0.99), 0.4, 0.4);
                prop_assert_eq!(b[0] >= b[1], before);
            }
        }

        #[test]
        fn no_change_probability_is_identity(p in 0.0f64..1.0) {
            // P_ch = 0 is outside the allowed model range but the step itself is defined
            prop_assert_eq!(markov_step([p, 1.0 - p], 1.0), [p, 1.0 - p]);
        }
    }
}
