use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use fingerloc::adapt::{
    apply_mapping_trace, fit_manual, normalize_automatic, normalize_quasi, train_caching, train_not_ss, AutoOptions,
    Iteration, LinearMapping, QualityModel, SegmentStats, StillAnalyzer, Weighting,
};
use fingerloc::emu::synth::rng;
use fingerloc::emu::{
    correlation_coefficient, crossval as run_crossval, locate_counts, movement_counts, random_building, roc_points,
    sensitivity, specificity, synth_trace as make_trace, trace_fingerprints, Client, ConfusionCounts, Layout, Metric,
    Leg, Propagation, Script, SynthWorld,
};
use fingerloc::io::{load_fingerprints, load_trace, write_fingerprints, write_trace};
use fingerloc::locate::{estimate, k_strongest_filter, Method};
use fingerloc::movement::{detect_samples, train_model, FeatureKind, MovementModel, Preset, TrainConfig};
use fingerloc::proximity::{buddy_service, BuddyChange, BuildingGraph, DistanceTable};
use fingerloc::radiomap::{DeterministicMap, HistogramMap, MapKind, RadioMap, RatioAggregation, DEFAULT_RATIO_STEP};
use fingerloc::zone::codec::encode;
use fingerloc::zone::{detect_zone, zone_protocol_run, BayesZoneModel, DetectorKind, DetectorParams, Zone, ZonePolicy};
use fingerloc::{CellId, Error, FingerprintSet, Result, Trace};

use crate::{CrossvalArgs, DetectorArgs, FitArgs, LocateArgs, MoveTrainArgs, ProxArgs, SynthTraceArgs, WorldArgs, ZoneDetectArgs, ZoneEmulateArgs};

/// Text for stdout or `--out`; `None` when the command wrote its own output.
type Output = Result<Option<String>>;

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn layout(w: &WorldArgs) -> Result<Layout> {
    Layout::grid(w.cols, w.rows, w.spacing, w.stations, Propagation::default(), w.world_seed)
}

fn load_traces(paths: &[PathBuf]) -> Result<Vec<Trace>> {
    paths.iter().map(load_trace).collect()
}

fn cells(names: &[String]) -> Result<Vec<CellId>> {
    names.iter().map(|n| n.parse()).collect()
}

fn counts_columns(c: &ConfusionCounts) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        c.tp,
        c.fp,
        c.tn,
        c.fn_,
        Metric(sensitivity(c)),
        Metric(specificity(c)),
        Metric(correlation_coefficient(c))
    )
}

const COUNTS_HEADER: &str = "tp,fp,tn,fn,sn,sp,cc";

pub fn synth_fingerprints(world: &WorldArgs, per_cell: usize, seed: u64) -> Output {
    Ok(Some(write_fingerprints(&layout(world)?.fingerprints(per_cell, seed)?)))
}

pub fn synth_trace(a: &SynthTraceArgs) -> Output {
    if !(a.pause_min >= 0.0 && a.pause_max >= a.pause_min) {
        return Err(usage("pause bounds must satisfy 0 <= min <= max"));
    }
    if a.repeat == 0 || !(a.period > 0.0) || !(a.speed > 0.0) {
        return Err(usage("repeat, period and speed must be positive"));
    }
    let layout = layout(&a.world)?;
    let mut script = Script::random(&layout, a.legs, (a.pause_min, a.pause_max), a.speed, a.seed);
    if let Some(d) = a.duration {
        if !(d > 0.0) {
            return Err(usage("--duration must be positive"));
        }
        let (_, total) = script.still_time(&layout)?;
        if total < d {
            script.legs.push(Leg::Pause { seconds: d - total });
        }
    }
    let world = SynthWorld {
        layout,
        client: Client {
            mapping: LinearMapping::new(a.c1, a.c2),
            noise_scale: a.noise,
            repeat: a.repeat,
            constant: a.constant,
            round: true,
        },
        script,
        period: a.period,
    };
    let trace = make_trace(&world, a.seed.wrapping_add(1))?;
    let trace = match a.duration {
        Some(d) => cut(&trace, d)?,
        None => trace,
    };
    Ok(Some(write_trace(&trace)))
}

/// Drops samples and annotations after `until` seconds.
fn cut(t: &Trace, until: f64) -> Result<Trace> {
    let keep = |ts: f64| ts < until;
    Trace::new(
        t.range,
        t.samples().iter().filter(|s| keep(s.timestamp())).cloned().collect(),
        t.ground_truth().iter().filter(|g| keep(g.0)).cloned().collect(),
        t.motion_marks().iter().filter(|m| keep(m.0)).cloned().collect(),
    )
}

pub fn synth_graph(world: &WorldArgs) -> Output {
    Ok(Some(layout(world)?.graph()?.to_text()))
}

pub fn synth_building(cells: usize, extra: usize, seed: u64) -> Output {
    Ok(Some(random_building(cells, extra, seed)?.to_text()))
}

fn aggregation(s: &str) -> Result<RatioAggregation> {
    match s {
        "pairwise" => Ok(RatioAggregation::PairwiseMean),
        "mean" => Ok(RatioAggregation::MeanRatio),
        other => Err(usage(format!("unknown aggregation {other:?}"))),
    }
}

pub fn map_build(fps: &Path, kind: &str, agg: &str, step: f64) -> Output {
    let kind: MapKind = kind.parse()?;
    let map = RadioMap::build(kind, &load_fingerprints(fps)?, aggregation(agg)?, step)?;
    Ok(Some(map.to_text()))
}

fn map_for(method: Method, fps: &FingerprintSet) -> Result<RadioMap> {
    let kind = match method {
        Method::Nn => MapKind::Deterministic,
        Method::Bayes => MapKind::Histogram,
        Method::HlfNn => MapKind::RatioVector,
        Method::HlfBayes => MapKind::RatioHistogram,
    };
    RadioMap::build(kind, fps, RatioAggregation::default(), DEFAULT_RATIO_STEP)
}

pub fn locate(a: &LocateArgs) -> Output {
    let method: Method = a.method.parse()?;
    let map = match (&a.map, &a.fps) {
        (Some(m), _) => RadioMap::load(m)?,
        (None, Some(f)) => map_for(method, &load_fingerprints(f)?)?,
        (None, None) => return Err(usage("give --map or --fps")),
    };
    let trace = load_trace(&a.trace)?;
    let mut out = String::from("timestamp,true_cell,estimated_cell,score\n");
    for s in trace.samples() {
        let s = match a.k {
            Some(k) => k_strongest_filter(s, k)?,
            None => s.clone(),
        };
        let truth = trace.cell_at(s.timestamp()).map(|c| c.to_string()).unwrap_or_default();
        match estimate(&map, method, &s) {
            Ok(e) => writeln!(out, "{},{truth},{},{}", s.timestamp(), e.cell, e.score),
            Err(Error::Unlocatable(_)) => writeln!(out, "{},{truth},,", s.timestamp()),
            Err(e) => return Err(e),
        }
        .expect("writing to a string");
    }
    Ok(Some(out))
}

fn place_sets(fps: &FingerprintSet) -> Vec<SegmentStats> {
    DeterministicMap::build(fps).cells().map(|(_, s)| s.clone()).collect()
}

pub fn adapt_fit(a: &FitArgs) -> Output {
    let cal_fps = load_fingerprints(&a.cal)?;
    let cal = DeterministicMap::build(&cal_fps);
    let hist = HistogramMap::build(&cal_fps);
    let weighting: Weighting = a.weighting.parse()?;
    let fit = match a.mode.as_str() {
        "manual" => {
            let obs = a.obs.as_ref().ok_or_else(|| usage("manual mode needs --obs"))?;
            fit_manual(&DeterministicMap::build(&load_fingerprints(obs)?), &cal)?
        }
        "quasi" => {
            let obs = a.obs.as_ref().ok_or_else(|| usage("quasi mode needs --obs"))?;
            normalize_quasi(&place_sets(&load_fingerprints(obs)?), &cal, &hist, weighting, Iteration::default())?
        }
        "auto" => {
            let (Some(trace), Some(analyzer)) = (&a.trace, &a.analyzer) else {
                return Err(usage("auto mode needs --trace and --analyzer"));
            };
            let analyzer = StillAnalyzer::from_model(&MovementModel::load(analyzer)?, Preset::CommFriendly.transitions())?;
            let mut options = AutoOptions {
                weighting,
                ..AutoOptions::default()
            };
            if a.allow_short {
                options.min_duration = 0.0;
            }
            normalize_automatic(&load_trace(trace)?, &cal, &hist, &analyzer, options)?
        }
        other => return Err(usage(format!("unknown mode {other:?}"))),
    };
    Ok(Some(format!("c1,c2,residual\n{},{},{}\n", fit.mapping.c1, fit.mapping.c2, fit.residual)))
}

pub fn adapt_normalize(trace: &Path, c1: f64, c2: f64) -> Output {
    let m = LinearMapping::new(c1, c2);
    if !m.is_physical() {
        return Err(usage("c1 must be positive"));
    }
    Ok(Some(write_trace(&apply_mapping_trace(&m, &load_trace(trace)?)?)))
}

pub fn adapt_train_analyzer(traces: &[PathBuf]) -> Output {
    let a = StillAnalyzer::train(&load_traces(traces)?, Preset::CommFriendly.transitions())?;
    Ok(Some(a.to_model().to_text()))
}

pub fn adapt_train_quality(fresh: &[PathBuf], cached: &[PathBuf], dynamic: &[PathBuf], constant: &[PathBuf]) -> Output {
    let pair = |good: &[PathBuf], bad: &[PathBuf]| -> Result<Option<(Vec<Trace>, Vec<Trace>)>> {
        match (good.is_empty(), bad.is_empty()) {
            (true, true) => Ok(None),
            (false, false) => Ok(Some((load_traces(good)?, load_traces(bad)?))),
            _ => Err(usage("each classifier needs traces of both classes")),
        }
    };
    let model = QualityModel {
        caching: pair(fresh, cached)?.map(|(g, b)| train_caching(&g, &b)).transpose()?,
        not_ss: pair(dynamic, constant)?.map(|(g, b)| train_not_ss(&g, &b)).transpose()?,
    };
    if model.caching.is_none() && model.not_ss.is_none() {
        return Err(usage("give --fresh/--cached and/or --dynamic/--constant"));
    }
    Ok(Some(model.to_text()))
}

pub fn adapt_classify(trace: &Path, model: &Path) -> Output {
    let v = QualityModel::load(model)?.classify(&load_trace(trace)?)?;
    let p = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let flag = |x: Option<bool>| x.map(|v| v.to_string()).unwrap_or_default();
    Ok(Some(format!(
        "p_caching,p_not_ss,caching,not_ss\n{},{},{},{}\n",
        p(v.caching_or_low_freq),
        p(v.not_signal_strength),
        flag(v.is_caching()),
        flag(v.is_not_ss())
    )))
}

fn detector(a: &DetectorArgs) -> Result<(DetectorKind, DetectorParams)> {
    if a.aggregate == 0 || a.max_stations == 0 {
        return Err(usage("--aggregate and --max-stations must be at least 1"));
    }
    Ok((
        a.detector.parse()?,
        DetectorParams {
            cbs_threshold: a.cbs_threshold,
            rank_threshold: a.rank_threshold,
            aggregate: a.aggregate,
            max_stations: a.max_stations,
            p_sustain: a.p_sustain,
        },
    ))
}

pub fn zone_emulate(a: &ZoneEmulateArgs) -> Output {
    let (kind, params) = detector(&a.detector)?;
    let table = DistanceTable::build(&BuildingGraph::load(&a.graph)?)?;
    let policy = ZonePolicy::Wds {
        table: &table,
        radius: a.radius,
    };
    let log = zone_protocol_run(&load_fingerprints(&a.fps)?, &load_trace(&a.trace)?, &policy, kind, &params)?;
    let counts = ConfusionCounts::from_frames(log.frames.iter().map(|f| (f.truth_in, f.detected_in)));
    Ok(Some(format!(
        "detector,frames,{COUNTS_HEADER},updates,baseline,correctly_saved,wrongly_saved\n{kind},{},{},{},{},{},{}\n",
        log.frames.len(),
        counts_columns(&counts),
        log.updates(),
        log.baseline(),
        log.correctly_saved(),
        log.wrongly_saved()
    )))
}

pub fn zone_detect(a: &ZoneDetectArgs) -> Output {
    let (kind, params) = detector(&a.detector)?;
    let zone = Zone::new(cells(&a.zone)?)?;
    let frames = detect_zone(kind, &zone, &load_fingerprints(&a.fps)?, &load_trace(&a.trace)?, &params)?;
    let n = frames.len();
    let counts = ConfusionCounts::from_frames(frames);
    Ok(Some(format!("detector,frames,{COUNTS_HEADER}\n{kind},{n},{}\n", counts_columns(&counts))))
}

pub fn zone_encode(fps: &Path, zone: &[String], max_stations: usize, p_sustain: f64, out: Option<&Path>) -> Output {
    let Some(out) = out else {
        return Err(usage("zone encode writes binary and needs --out"));
    };
    let zone = Zone::new(cells(zone)?)?;
    let model = BayesZoneModel::build(&zone, &load_fingerprints(fps)?, max_stations, p_sustain)?;
    let bytes = encode(&model)?;
    std::fs::write(out, &bytes).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    println!("stations,values,bytes\n{},{},{}", model.stations.len(), model.range.len(), bytes.len());
    Ok(None)
}

pub fn prox_emulate(a: &ProxArgs) -> Output {
    let table = DistanceTable::build(&BuildingGraph::load(&a.graph)?)?;
    let traces = load_traces(&a.traces)?;
    let located = match &a.map {
        Some(path) => {
            let method: Method = a.method.parse()?;
            let map = RadioMap::load(path)?;
            traces
                .iter()
                .map(|t| t.samples().iter().map(|s| Ok(estimate(&map, method, s)?.cell)).collect())
                .collect::<Result<Vec<Vec<CellId>>>>()?
        }
        None => traces.iter().map(|t| t.truth_per_sample()).collect::<Result<_>>()?,
    };
    let log = buddy_service(&table, &traces, a.p, a.b, |i, f, _| Ok(located[i][f].clone()))?;
    let mut out = String::from("timestamp,target_a,target_b,change,distance\n");
    for e in &log.events {
        let change = match e.change {
            BuddyChange::Added => "added",
            BuddyChange::Removed => "removed",
        };
        writeln!(out, "{},{},{},{change},{}", e.timestamp, e.pair.0, e.pair.1, e.distance).expect("writing to a string");
    }
    let m = &log.messages;
    write!(
        out,
        "\nupdates,polls,configs,total,baseline\n{},{},{},{},{}\n",
        m.updates,
        m.polls,
        m.configs,
        m.total(),
        log.baseline()
    )
    .expect("writing to a string");
    Ok(Some(out))
}

pub fn move_train(a: &MoveTrainArgs) -> Output {
    let feature: FeatureKind = a.feature.parse()?;
    let config = TrainConfig {
        feature,
        window: a.window,
        k: a.k,
        history: a.history,
        ..TrainConfig::default()
    };
    Ok(Some(train_model(&load_traces(&a.traces)?, &config)?.to_text()))
}

pub fn move_detect(trace: &Path, model: &Path, preset: &str) -> Output {
    let preset: Preset = preset.parse()?;
    let steps = detect_samples(&MovementModel::load(model)?, preset.transitions(), load_trace(trace)?.samples())?;
    let mut out = String::from("timestamp,verdict,mode\n");
    for s in steps {
        let verdict = s.verdict.map(|v| v.as_str()).unwrap_or("");
        writeln!(out, "{},{verdict},{}", s.timestamp, s.mode.as_str()).expect("writing to a string");
    }
    Ok(Some(out))
}

pub fn move_roc(model: &Path, traces: &[PathBuf]) -> Output {
    let settings: Vec<(String, _)> = [Preset::CommFriendly, Preset::PositionFriendly]
        .iter()
        .map(|p| (p.as_str().to_string(), p.transitions()))
        .collect();
    let points = roc_points(&MovementModel::load(model)?, &settings, &load_traces(traces)?)?;
    let mut out = format!("preset,{COUNTS_HEADER},tp_rate,fp_rate\n");
    for p in points {
        writeln!(out, "{},{},{},{}", p.label, counts_columns(&p.counts), Metric(p.tp), Metric(p.fp))
            .expect("writing to a string");
    }
    Ok(Some(out))
}

pub fn crossval(a: &CrossvalArgs) -> Output {
    if a.folds < 2 || a.folds > a.traces.len() {
        return Err(usage(format!(
            "need 2 <= folds <= traces, got {} folds for {} traces",
            a.folds,
            a.traces.len()
        )));
    }
    let mut traces = load_traces(&a.traces)?;
    traces.shuffle(&mut rng(a.seed));
    let mut folds: Vec<Vec<Trace>> = vec![Vec::new(); a.folds];
    for (i, t) in traces.into_iter().enumerate() {
        folds[i % a.folds].push(t);
    }
    let report = match a.task.as_str() {
        "locate" => {
            let method: Method = a.method.parse()?;
            run_crossval(
                &folds,
                |train| map_for(method, &trace_fingerprints(train)?),
                |map, t| locate_counts(map, method, t),
            )?
        }
        "move" => {
            let preset: Preset = a.preset.parse()?;
            run_crossval(
                &folds,
                |train| train_model(&train.iter().map(|t| (*t).clone()).collect::<Vec<_>>(), &TrainConfig::default()),
                |model, t| movement_counts(model, preset.transitions(), t),
            )?
        }
        other => return Err(usage(format!("unknown task {other:?}"))),
    };
    let mut out = format!("fold,traces,{COUNTS_HEADER}\n");
    let sizes: BTreeMap<usize, usize> = folds.iter().map(Vec::len).enumerate().collect();
    for (k, c) in report.folds.iter().enumerate() {
        writeln!(out, "{k},{},{}", sizes[&k], counts_columns(c)).expect("writing to a string");
    }
    writeln!(out, "all,{},{}", folds.iter().map(Vec::len).sum::<usize>(), counts_columns(&report.aggregate()))
        .expect("writing to a string");
    Ok(Some(out))
}
