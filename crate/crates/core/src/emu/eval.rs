use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::locate::{estimate, Method};
use crate::movement::{detect_samples, MovementModel, Transitions};
use crate::radiomap::{rss_bin, HistogramMap, RadioMap, LIKELIHOOD_FLOOR};
use crate::types::{CellId, Fingerprint, FingerprintSet, Motion, Sample, Trace};

use super::metrics::{rates, ConfusionCounts};

/// Share of correct frames in percent, `None` without frames.
pub fn accuracy(c: &ConfusionCounts) -> Option<f64> {
    (c.total() > 0).then(|| 100.0 * (c.tp + c.tn) as f64 / c.total() as f64)
}

/// Per-sample cell estimates of a labeled trace: `(truth, estimate)`.
pub fn locate_trace(map: &RadioMap, method: Method, trace: &Trace) -> Result<Vec<(CellId, CellId)>> {
    let truth = trace.truth_per_sample()?;
    trace
        .samples()
        .iter()
        .zip(truth)
        .map(|(s, t)| Ok((t, estimate(map, method, s)?.cell)))
        .collect()
}

/// Located frames as confusion counts where a hit counts as a true positive
/// and a miss as a false negative.
pub fn locate_counts(map: &RadioMap, method: Method, trace: &Trace) -> Result<ConfusionCounts> {
    Ok(ConfusionCounts::from_frames(
        locate_trace(map, method, trace)?.into_iter().map(|(t, e)| (true, t == e)),
    ))
}

/// Percentage of samples located in their true cell.
pub fn locate_accuracy(map: &RadioMap, method: Method, trace: &Trace) -> Result<f64> {
    let frames = locate_trace(map, method, trace)?;
    if frames.is_empty() {
        return Err(Error::InsufficientData("trace has no samples".into()));
    }
    Ok(100.0 * frames.iter().filter(|(t, e)| t == e).count() as f64 / frames.len() as f64)
}

/// Mean probability the histogram map assigns to each observation at its
/// true cell, with the lookup floor for stations or values it never saw.
pub fn average_likelihood(map: &HistogramMap, trace: &Trace) -> Result<Option<f64>> {
    let truth = trace.truth_per_sample()?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (s, cell) in trace.samples().iter().zip(&truth) {
        for o in s.observations() {
            sum += map
                .get(cell, &o.station)
                .map_or(LIKELIHOOD_FLOOR, |p| p.likelihood(rss_bin(o.rss), LIKELIHOOD_FLOOR));
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Groups the samples of labeled traces into fingerprints by true cell.
pub fn trace_fingerprints(traces: &[&Trace]) -> Result<FingerprintSet> {
    let range = traces
        .first()
        .ok_or_else(|| Error::InsufficientData("no traces to build fingerprints from".into()))?
        .range;
    let mut cells: BTreeMap<CellId, Vec<Sample>> = BTreeMap::new();
    for t in traces {
        if t.range != range {
            return Err(Error::invariant("traces use different value ranges"));
        }
        for (s, c) in t.samples().iter().zip(t.truth_per_sample()?) {
            cells.entry(c).or_default().push(s.clone());
        }
    }
    let fps = cells
        .into_iter()
        .map(|(c, s)| Fingerprint::new(c, s))
        .collect::<Result<Vec<_>>>()?;
    FingerprintSet::new(range, fps)
}

/// Frames of a movement detector with moving as the positive class. Frames
/// before the detector's first verdict are skipped.
pub fn movement_counts(model: &MovementModel, transitions: Transitions, trace: &Trace) -> Result<ConfusionCounts> {
    let marks = trace.motion_per_sample()?;
    let steps = detect_samples(model, transitions, trace.samples())?;
    Ok(ConfusionCounts::from_frames(steps.iter().zip(marks).filter_map(|(s, m)| {
        s.verdict.map(|v| (m == Motion::Moving, v == Motion::Moving))
    })))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub label: String,
    pub counts: ConfusionCounts,
    pub tp: Option<f64>,
    pub fp: Option<f64>,
}

/// One `(fp%, tp%)` point per transition setting over all traces.
pub fn roc_points(model: &MovementModel, settings: &[(String, Transitions)], traces: &[Trace]) -> Result<Vec<RocPoint>> {
    settings
        .iter()
        .map(|(label, tr)| {
            let mut counts = ConfusionCounts::default();
            for t in traces {
                counts += movement_counts(model, *tr, t)?;
            }
            let (tp, fp) = rates(&counts);
            Ok(RocPoint {
                label: label.clone(),
                counts,
                tp,
                fp,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossvalReport {
    pub folds: Vec<ConfusionCounts>,
}

impl CrossvalReport {
    /// Counts over all folds; metrics computed from them are frame-weighted
    /// means of the per-fold values.
    pub fn aggregate(&self) -> ConfusionCounts {
        self.folds.iter().fold(ConfusionCounts::default(), |a, c| a.merge(c))
    }
}

/// Leave-one-fold-out evaluation: `train` sees every other fold, `eval`
/// scores the held-out items.
pub fn crossval<D, M>(
    folds: &[Vec<D>],
    train: impl Fn(&[&D]) -> Result<M>,
    eval: impl Fn(&M, &D) -> Result<ConfusionCounts>,
) -> Result<CrossvalReport> {
    if folds.len() < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least two folds".into()));
    }
    if let Some(i) = folds.iter().position(Vec::is_empty) {
        return Err(Error::InsufficientData(format!("fold {i} has no data")));
    }
    let mut out = Vec::with_capacity(folds.len());
    for k in 0..folds.len() {
        let rest: Vec<&D> = folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .flat_map(|(_, f)| f.iter())
            .collect();
        let model = train(&rest)?;
        let mut c = ConfusionCounts::default();
        for d in &folds[k] {
            c += eval(&model, d)?;
        }
        out.push(c);
    }
    Ok(CrossvalReport { folds: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emu::metrics::sensitivity;

    #[test]
    fn identical_folds_agree() {
        let folds = vec![vec![1u64, 2, 3]; 3];
        let r = crossval(
            &folds,
            |rest| Ok(rest.iter().map(|v| **v).sum::<u64>()),
            |m, d| Ok(ConfusionCounts::new(*d, 0, 0, *m % 2)),
        )
        .unwrap();
        assert!(r.folds.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn aggregate_matches_manual_recount() {
        let folds = vec![vec![(3u64, 1u64)], vec![(1, 3), (2, 2)]];
        let r = crossval(&folds, |_| Ok(()), |_, (hit, miss)| Ok(ConfusionCounts::new(*hit, 0, 0, *miss))).unwrap();
        assert_eq!(sensitivity(&r.folds[0]), Some(75.0));
        assert_eq!(sensitivity(&r.folds[1]), Some(37.5));
        // frame-weighted: (75 * 4 + 37.5 * 8) / 12
        assert!((sensitivity(&r.aggregate()).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn folds_must_be_usable() {
        let one = vec![vec![1]];
        assert!(crossval(&one, |_| Ok(()), |_, _| Ok(ConfusionCounts::default())).is_err());
        let empty: Vec<Vec<i32>> = vec![vec![1], vec![]];
        assert!(crossval(&empty, |_| Ok(()), |_, _| Ok(ConfusionCounts::default())).is_err());
    }

    #[test]
    fn accuracy_counts_both_classes() {
        assert_eq!(accuracy(&ConfusionCounts::new(3, 1, 4, 2)), Some(70.0));
        assert_eq!(accuracy(&ConfusionCounts::default()), None);
    }
}
