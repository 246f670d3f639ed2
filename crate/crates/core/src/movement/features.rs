use std::collections::{BTreeMap, VecDeque};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::stats::sample_variance;
use crate::types::{BaseStationId, Sample};

/// Default sliding-window length in samples.
pub const DEFAULT_WINDOW: usize = 10;

/// Fraction of window entries a station must appear in to contribute.
pub const ELIGIBILITY: f64 = 0.8;

/// Sliding window over the most recent samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    capacity: usize,
    samples: VecDeque<Sample>,
}

impl FeatureWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 2 {
            return Err(Error::InvalidArgument(format!(
                "feature window needs at least 2 entries, got {capacity}"
            )));
        }
        Ok(Self {
            capacity,
            samples: VecDeque::with_capacity(capacity),
        })
    }

    pub fn from_samples(capacity: usize, samples: &[Sample]) -> Result<Self> {
        let mut w = Self::new(capacity)?;
        for s in samples {
            w.push(s.clone());
        }
        Ok(w)
    }

    pub fn push(&mut self, sample: Sample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    /// Minimum number of entries a station must appear in.
    pub fn min_presence(&self) -> usize {
        (ELIGIBILITY * self.capacity as f64 - 1e-9).ceil() as usize
    }

    /// Per-station rss series of eligible stations, most frequent first
    /// (ties by station id).
    pub fn eligible_series(&self) -> Vec<(BaseStationId, Vec<f64>)> {
        let mut series: BTreeMap<&BaseStationId, Vec<f64>> = BTreeMap::new();
        for s in &self.samples {
            for o in s.observations() {
                series.entry(&o.station).or_default().push(o.rss);
            }
        }
        let need = self.min_presence();
        let mut out: Vec<_> = series
            .into_iter()
            .filter(|(_, v)| v.len() >= need)
            .map(|(b, v)| (b.clone(), v))
            .collect();
        out.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// Average per-station sample variance over the `k` most frequently seen
/// eligible stations; `None` uses every eligible station.
pub fn variance_feature(window: &FeatureWindow, k: Option<usize>) -> Result<f64> {
    let series = window.eligible_series();
    if series.is_empty() {
        return Err(Error::InsufficientData(
            "no station is eligible in the feature window".into(),
        ));
    }
    let k = k.unwrap_or(usize::MAX).max(1).min(series.len());
    Ok(series[..k]
        .iter()
        .map(|(_, v)| sample_variance(v))
        .sum::<f64>()
        / k as f64)
}

fn euclid(a: &Sample, b: &Sample) -> Option<f64> {
    let mut common = 0;
    let mut sum = 0.0;
    for o in a.observations() {
        if let Some(v) = b.get(&o.station) {
            common += 1;
            sum += (o.rss - v).powi(2);
        }
    }
    (common > 0).then(|| sum.sqrt())
}

/// Euclidean distance between the first and last window entries.
pub fn euclid_gap_feature(window: &FeatureWindow) -> Result<f64> {
    let (Some(first), Some(last)) = (window.samples.front(), window.samples.back()) else {
        return Err(Error::InsufficientData("empty feature window".into()));
    };
    if window.len() < 2 {
        return Err(Error::InsufficientData("gap feature needs two entries".into()));
    }
    euclid(first, last)
        .ok_or_else(|| Error::InsufficientData("first and last entries share no station".into()))
}

/// Mean Euclidean distance between consecutive window entries; pairs without
/// a common station are skipped.
pub fn euclid_avg_feature(window: &FeatureWindow) -> Result<f64> {
    let dists: Vec<f64> = window
        .samples
        .iter()
        .zip(window.samples.iter().skip(1))
        .filter_map(|(a, b)| euclid(a, b))
        .collect();
    if dists.is_empty() {
        return Err(Error::InsufficientData(
            "no consecutive entries share a station".into(),
        ));
    }
    Ok(dists.iter().sum::<f64>() / dists.len() as f64)
}

/// Count-weighted mean of the per-station sample variances over all
/// stations with at least two readings; `None` if there is none.
pub fn weighted_variance<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Option<f64> {
    let mut series: BTreeMap<&BaseStationId, Vec<f64>> = BTreeMap::new();
    for s in samples {
        for o in s.observations() {
            series.entry(&o.station).or_default().push(o.rss);
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for v in series.values().filter(|v| v.len() >= 2) {
        num += v.len() as f64 * sample_variance(v);
        den += v.len() as f64;
    }
    (den > 0.0).then(|| num / den)
}

/// Which window feature drives the detector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FeatureKind {
    #[default]
    Variance,
    Gap,
    Average,
    /// Count-weighted variance over every station, used by the still analyzer.
    WeightedVariance,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Variance => "variance",
            FeatureKind::Gap => "gap",
            FeatureKind::Average => "average",
            FeatureKind::WeightedVariance => "weighted-variance",
        }
    }

    pub fn compute(&self, window: &FeatureWindow, k: Option<usize>) -> Result<f64> {
        match self {
            FeatureKind::Variance => variance_feature(window, k),
            FeatureKind::Gap => euclid_gap_feature(window),
            FeatureKind::Average => euclid_avg_feature(window),
            FeatureKind::WeightedVariance => weighted_variance(window.samples.iter())
                .ok_or_else(|| Error::InsufficientData("no station seen twice in window".into())),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "variance" => FeatureKind::Variance,
            "gap" => FeatureKind::Gap,
            "average" => FeatureKind::Average,
            "weighted-variance" => FeatureKind::WeightedVariance,
            other => return Err(Error::InvalidArgument(format!("unknown feature {other:?}"))),
        })
    }
}

/// Feature value after each sample; `None` until the window is full or when
/// the feature cannot be computed.
pub fn feature_series(
    samples: &[Sample],
    window: usize,
    kind: FeatureKind,
    k: Option<usize>,
) -> Result<Vec<Option<f64>>> {
    let mut w = FeatureWindow::new(window)?;
    Ok(samples
        .iter()
        .map(|s| {
            w.push(s.clone());
            if w.is_full() {
                kind.compute(&w, k).ok()
            } else {
                None
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(rows: &[&[(&str, f64)]]) -> FeatureWindow {
        let samples: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Sample::from_pairs(i as f64, r).unwrap())
            .collect();
        FeatureWindow::from_samples(rows.len(), &samples).unwrap()
    }

    #[test]
    fn constant_window_has_zero_variance() {
        let rows: Vec<&[(&str, f64)]> = vec![&[("a", 50.0), ("b", 40.0)]; 10];
        assert_eq!(variance_feature(&window(&rows), None).unwrap(), 0.0);
    }

    #[test]
    fn averages_station_variances() {
        // a: 0,4 -> var 8 ; b: 1,3 -> var 2 ; mean 5
        let w = window(&[&[("a", 10.0), ("b", 11.0)], &[("a", 14.0), ("b", 13.0)]]);
        assert!((variance_feature(&w, Some(2)).unwrap() - 5.0).abs() < 1e-12);
        // k=1 keeps the smaller id among equally frequent stations
        assert!((variance_feature(&w, Some(1)).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn eligibility_needs_eight_of_ten() {
        let mut rows: Vec<Vec<(&str, f64)>> = (0..10).map(|i| vec![("a", i as f64)]).collect();
        for r in rows.iter_mut().take(7) {
            r.push(("b", 3.0));
        }
        let refs: Vec<&[(&str, f64)]> = rows.iter().map(|r| r.as_slice()).collect();
        let w = window(&refs);
        assert_eq!(w.min_presence(), 8);
        let ids: Vec<_> = w.eligible_series().into_iter().map(|(b, _)| b).collect();
        assert_eq!(ids.len(), 1);
        assert_eq!(ids[0].as_str(), "a");
    }

    #[test]
    fn no_eligible_station_is_an_error() {
        let w = window(&[&[("a", 1.0)], &[("b", 1.0)]]);
        assert!(variance_feature(&w, None).is_err());
    }

    #[test]
    fn euclidean_features() {
        let w = window(&[&[("a", 5.0)], &[("a", 5.0)]]);
        assert_eq!(euclid_gap_feature(&w).unwrap(), 0.0);
        let w = window(&[&[("a", 5.0), ("x", 1.0)], &[("a", 1.0)], &[("a", 8.0), ("y", 2.0)]]);
        assert_eq!(euclid_gap_feature(&w).unwrap(), 3.0);
        assert_eq!(euclid_avg_feature(&w).unwrap(), 5.5);
        let w = window(&[&[("a", 5.0)], &[("b", 1.0)]]);
        assert!(euclid_gap_feature(&w).is_err());
        assert!(euclid_avg_feature(&w).is_err());
    }

    #[test]
    fn window_slides() {
        let mut w = FeatureWindow::new(3).unwrap();
        for i in 0..5 {
            w.push(Sample::from_pairs(i as f64, &[("a", i as f64)]).unwrap());
        }
        let ts: Vec<_> = w.samples().map(|s| s.timestamp()).collect();
        assert_eq!(ts, [2.0, 3.0, 4.0]);
    }
}
