//! End-to-end runs over synthetic worlds.

use fingerloc::adapt::{autocorrelation, LinearMapping};
use fingerloc::emu::synth::rng;
use fingerloc::emu::{
    crossval, locate_accuracy, locate_counts, sensitivity, synth_trace, trace_fingerprints, Client, Layout, Leg,
    Propagation, Script, SynthWorld,
};
use fingerloc::locate::Method;
use fingerloc::proximity::{buddy_service, DistanceTable};
use fingerloc::radiomap::{DeterministicMap, HistogramMap, RadioMap, RatioAggregation, RatioHistogramMap, RatioVectorMap};
use fingerloc::zone::{zone_protocol_run, DetectorKind, DetectorParams, ZonePolicy};
use fingerloc::{CellId, Motion, Trace};
use proptest::prelude::*;
use rand::seq::IndexedRandom;

fn world() -> Layout {
    Layout::grid(6, 4, 5.0, 10, Propagation::default(), 11).unwrap()
}

fn walk(layout: &Layout, client: Client, pauses: (f64, f64), seed: u64) -> Trace {
    let w = SynthWorld {
        layout: layout.clone(),
        client,
        script: Script::random(layout, 5, pauses, 1.0, seed),
        period: 1.0,
    };
    synth_trace(&w, seed + 1).unwrap()
}

#[test]
fn every_estimator_beats_chance_on_still_walks() {
    let layout = world();
    let fps = layout.fingerprints(40, 3).unwrap();
    let trace = walk(&layout, Client::default(), (30.0, 60.0), 7);
    let chance = 100.0 / layout.cells.len() as f64;
    let maps = [
        (Method::Nn, RadioMap::Deterministic(DeterministicMap::build(&fps))),
        (Method::Bayes, RadioMap::Histogram(HistogramMap::build(&fps))),
        (
            Method::HlfNn,
            RadioMap::RatioVector(RatioVectorMap::build(&fps, RatioAggregation::default()).unwrap()),
        ),
        (Method::HlfBayes, RadioMap::RatioHistogram(RatioHistogramMap::build(&fps, 0.02).unwrap())),
    ];
    for (method, map) in &maps {
        let acc = locate_accuracy(map, *method, &trace).unwrap();
        assert!(acc > 5.0 * chance, "{method:?}: {acc}");
    }
}

#[test]
fn ratio_estimators_ignore_client_gain() {
    // a multiplicative client leaves hyperbolic estimates unchanged,
    // while the plain estimator loses most of its accuracy
    let layout = world();
    let fps = layout.fingerprints(40, 3).unwrap();
    let gain = Client {
        mapping: LinearMapping::new(0.6, 0.0),
        round: false,
        ..Client::default()
    };
    let plain = Client { round: false, ..Client::default() };
    let a = walk(&layout, plain, (30.0, 60.0), 21);
    let b = walk(&layout, gain, (30.0, 60.0), 21);
    let hlf = RadioMap::RatioVector(RatioVectorMap::build(&fps, RatioAggregation::default()).unwrap());
    let nn = RadioMap::Deterministic(DeterministicMap::build(&fps));
    assert_eq!(
        locate_accuracy(&hlf, Method::HlfNn, &a).unwrap(),
        locate_accuracy(&hlf, Method::HlfNn, &b).unwrap()
    );
    assert!(locate_accuracy(&nn, Method::Nn, &b).unwrap() + 20.0 < locate_accuracy(&nn, Method::Nn, &a).unwrap());
}

#[test]
fn caching_clients_have_higher_lag_one_autocorrelation() {
    let layout = world();
    let series = |repeat| {
        let t = walk(&layout, Client { repeat, ..Client::default() }, (200.0, 200.0), 5);
        let station = t.samples()[0].observations()[0].station.clone();
        let v: Vec<f64> = t.samples().iter().filter_map(|s| s.get(&station)).collect();
        autocorrelation(&v[..150], 1).unwrap()
    };
    assert!(series(5) > series(1) + 0.3);
}

#[test]
fn crossval_by_trace_separates_easy_and_hard_folds() {
    let layout = world();
    let easy: Vec<Trace> = (0..2).map(|k| walk(&layout, Client::default(), (40.0, 60.0), 30 + k)).collect();
    let hard: Vec<Trace> = (0..2)
        .map(|k| {
            let noisy = Client {
                noise_scale: 4.0,
                ..Client::default()
            };
            walk(&layout, noisy, (0.0, 2.0), 40 + k)
        })
        .collect();
    let fps = layout.fingerprints(40, 3).unwrap();
    let map = RadioMap::Histogram(HistogramMap::build(&fps));
    let report = crossval(&[easy, hard], |_| Ok(map.clone()), |m, t| locate_counts(m, Method::Bayes, t)).unwrap();
    let (e, h) = (sensitivity(&report.folds[0]).unwrap(), sensitivity(&report.folds[1]).unwrap());
    assert!(e > h + 10.0, "easy {e} hard {h}");
}

#[test]
fn fingerprints_from_traces_cover_visited_cells() {
    let layout = world();
    let t = walk(&layout, Client::default(), (10.0, 20.0), 9);
    let fps = trace_fingerprints(&[&t]).unwrap();
    let visited: std::collections::BTreeSet<CellId> = t.truth_per_sample().unwrap().into_iter().collect();
    assert_eq!(fps.cells().cloned().collect::<std::collections::BTreeSet<_>>(), visited);
    assert_eq!(fps.sample_count(), t.len());
}

/// Two walkers with equal timelines.
fn pair(layout: &Layout, seed: u64, pause: f64) -> [Trace; 2] {
    let mut r = rng(seed);
    let ids: Vec<&CellId> = layout.cell_ids().collect();
    let scripts: Vec<Script> = (0..2)
        .map(|_| {
            let mut legs = Vec::new();
            for _ in 0..3 {
                legs.push(Leg::Pause { seconds: pause });
                legs.push(Leg::Walk {
                    to: (*ids.choose(&mut r).unwrap()).clone(),
                    speed: 1.0,
                });
            }
            Script {
                start: (*ids.choose(&mut r).unwrap()).clone(),
                legs,
            }
        })
        .collect();
    let end = scripts
        .iter()
        .map(|s| s.still_time(layout).unwrap().1)
        .fold(0.0, f64::max);
    let traces: Vec<Trace> = scripts
        .into_iter()
        .enumerate()
        .map(|(k, mut s)| {
            let total = s.still_time(layout).unwrap().1;
            s.legs.push(Leg::Pause {
                seconds: end - total + 1.0,
            });
            let w = SynthWorld {
                layout: layout.clone(),
                client: Client::default(),
                script: s,
                period: 1.0,
            };
            let t = synth_trace(&w, seed + k as u64).unwrap();
            let n = end.floor() as usize;
            Trace::new(
                t.range,
                t.samples()[..n].to_vec(),
                t.ground_truth().iter().filter(|g| g.0 < n as f64).cloned().collect(),
                t.motion_marks().iter().filter(|m| m.0 < n as f64).cloned().collect(),
            )
            .unwrap()
        })
        .collect();
    [traces[0].clone(), traces[1].clone()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn buddy_lists_respect_the_tolerance_band(seed in 0u64..1000, pause in 0.0f64..30.0, b in 1.0f64..6.0) {
        let layout = world();
        let table = DistanceTable::build(&layout.graph().unwrap()).unwrap();
        let traces = pair(&layout, seed, pause.round());
        let truth = [traces[0].truth_per_sample().unwrap(), traces[1].truth_per_sample().unwrap()];
        let p = 12.0;
        let log = buddy_service(&table, &traces, p, b, |i, f, _| Ok(truth[i][f].clone())).unwrap();
        for (f, on) in log.listed[0].iter().enumerate() {
            let d = table.distance(&truth[0][f], &truth[1][f]).unwrap();
            prop_assert!(!(d < p - b) || *on, "frame {} at {} m not listed", f, d);
            prop_assert!(!(d > p + b) || !*on, "frame {} at {} m listed", f, d);
        }
        prop_assert!(log.messages.total() <= log.baseline());
    }

    #[test]
    fn zone_tracking_never_exceeds_periodic_updates(seed in 0u64..1000, kind in 0usize..4) {
        let layout = world();
        let fps = layout.fingerprints(20, seed).unwrap();
        let table = DistanceTable::build(&layout.graph().unwrap()).unwrap();
        let policy = ZonePolicy::Wds { table: &table, radius: 10.0 };
        let t = walk(&layout, Client::default(), (0.0, 30.0), seed);
        let log = zone_protocol_run(&fps, &t, &policy, DetectorKind::ALL[kind], &DetectorParams::default()).unwrap();
        prop_assert!(log.updates() <= log.baseline());
        prop_assert_eq!(log.baseline() as usize, t.len());
        prop_assert_eq!(log.correctly_saved() + log.wrongly_saved() + log.updates(), log.baseline());
    }
}

#[test]
fn still_walkers_are_marked_still() {
    let layout = world();
    let t = walk(&layout, Client::default(), (50.0, 50.0), 2);
    let marks = t.motion_per_sample().unwrap();
    assert_eq!(marks[0], Motion::Still);
    assert!(marks.iter().any(|m| *m == Motion::Moving));
}
