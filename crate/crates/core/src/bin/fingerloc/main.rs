//! `fingerloc`: replays recorded or synthetic traces through the engine and
//! prints CSV.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or invariant errors.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "fingerloc", version, about = "Location fingerprinting engine and trace emulator")]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic fingerprints, traces and building graphs.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Build radio maps from fingerprints.
    #[command(subcommand)]
    Map(MapCmd),
    /// Locate every sample of a trace.
    Locate(LocateArgs),
    /// Client hardware handling: normalization and quality classifiers.
    #[command(subcommand)]
    Adapt(AdaptCmd),
    /// Zone-based reporting.
    #[command(subcommand)]
    Zone(ZoneCmd),
    /// Walking-distance proximity detection.
    #[command(subcommand)]
    Prox(ProxCmd),
    /// Movement detection.
    #[command(subcommand)]
    Move(MoveCmd),
    /// Leave-one-fold-out evaluation over trace files.
    Crossval(CrossvalArgs),
}

/// Grid world shared by the synth commands. The same values and seed always
/// give the same world.
#[derive(Args, Debug, Clone)]
pub struct WorldArgs {
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
    #[arg(long, default_value_t = 5)]
    pub rows: usize,
    /// Distance between neighboring cell centers in meters.
    #[arg(long, default_value_t = 4.0)]
    pub spacing: f64,
    #[arg(long, default_value_t = 12)]
    pub stations: usize,
    /// Seed of the world layout.
    #[arg(long, default_value_t = 1)]
    pub world_seed: u64,
}

#[derive(Subcommand, Debug)]
enum SynthCmd {
    /// Fingerprint file with `--per-cell` samples per cell.
    Fingerprints {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, default_value_t = 60)]
        per_cell: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Labeled trace of a random walk.
    Trace(SynthTraceArgs),
    /// Building graph of the grid world.
    Graph {
        #[command(flatten)]
        world: WorldArgs,
    },
    /// Random connected building graph.
    Building {
        #[arg(long, default_value_t = 8)]
        cells: usize,
        /// Extra links beyond the spanning tree.
        #[arg(long, default_value_t = 2)]
        extra: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
pub struct SynthTraceArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    /// Number of pause-and-walk legs.
    #[arg(long, default_value_t = 6)]
    pub legs: usize,
    #[arg(long, default_value_t = 10.0)]
    pub pause_min: f64,
    #[arg(long, default_value_t = 60.0)]
    pub pause_max: f64,
    /// Walking speed in m/s.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Seconds between samples.
    #[arg(long, default_value_t = 1.0)]
    pub period: f64,
    /// Client mapping `reported = c1 * value + c2`.
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub c2: f64,
    /// Scale of the per-reading noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Samples each reading is held for.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Report this value for every station.
    #[arg(long)]
    pub constant: Option<f64>,
    /// Pad with a final pause or cut so the trace covers exactly this many
    /// seconds, which aligns traces of different targets.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
enum MapCmd {
    /// Radio map file of one kind
    Build {
        #[arg(long)]
        fps: PathBuf,
        /// deterministic, histogram, ratio-vector or ratio-histogram.
        #[arg(long, default_value = "deterministic")]
        kind: String,
        /// Ratio vector aggregation: pairwise or mean.
        #[arg(long, default_value = "pairwise")]
        aggregation: String,
        /// Bin width of ratio histograms.
        #[arg(long, default_value_t = fingerloc::radiomap::DEFAULT_RATIO_STEP)]
        step: f64,
    },
}

#[derive(Args, Debug)]
pub struct LocateArgs {
    /// Radio map file.
    #[arg(long, conflicts_with = "fps", required_unless_present = "fps")]
    pub map: Option<PathBuf>,
    /// Fingerprints to build the method's map from.
    #[arg(long)]
    pub fps: Option<PathBuf>,
    #[arg(long)]
    pub trace: PathBuf,
    /// nn, bayes, hlf-nn or hlf-bayes.
    #[arg(long, default_value = "nn")]
    pub method: String,
    /// Keep only the k strongest stations of every sample.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum AdaptCmd {
    /// Fit a linear client mapping.
    Fit(FitArgs),
    /// Apply a client mapping to a trace.
    Normalize {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        c1: f64,
        #[arg(long, allow_negative_numbers = true)]
        c2: f64,
    },
    /// Train the still-period analyzer from motion-labeled traces.
    TrainAnalyzer {
        /// Comma-separated trace files.
        #[arg(long, value_delimiter = ',', required = true)]
        traces: Vec<PathBuf>,
    },
    /// Train the quality classifiers from traces of known clients.
    TrainQuality {
        #[arg(long, value_delimiter = ',')]
        fresh: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        cached: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        dynamic: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        constant: Vec<PathBuf>,
    },
    /// Classify the client behind a trace.
    Classify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// manual, quasi or auto.
    #[arg(long)]
    pub mode: String,
    /// Calibration fingerprints.
    #[arg(long)]
    pub cal: PathBuf,
    /// Client fingerprints (manual: at known cells; quasi: one block per unknown place).
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// Client trace for automatic mode.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Still-period analyzer model for automatic mode.
    #[arg(long)]
    pub analyzer: Option<PathBuf>,
    /// overlap or bayes.
    #[arg(long, default_value = "bayes")]
    pub weighting: String,
    /// Accept automatic-mode traces shorter than five minutes.
    #[arg(long)]
    pub allow_short: bool,
}

#[derive(Subcommand, Debug)]
enum ZoneCmd {
    /// Continuous tracking with walking-distance zones: accuracy and messages.
    Emulate(ZoneEmulateArgs),
    /// Frame accuracy of one detector for a fixed zone.
    Detect(ZoneDetectArgs),
    /// Write the compact Bayes model of a zone (requires --out).
    Encode {
        #[arg(long)]
        fps: PathBuf,
        /// Comma-separated cells of the zone.
        #[arg(long, value_delimiter = ',', required = true)]
        zone: Vec<String>,
        #[arg(long, default_value_t = fingerloc::zone::MAX_STATIONS)]
        max_stations: usize,
        #[arg(long, default_value_t = fingerloc::zone::DEFAULT_P_SUSTAIN)]
        p_sustain: f64,
    },
}

#[derive(Args, Debug)]
pub struct DetectorArgs {
    /// cbs, rank, manhattan or bayes.
    #[arg(long, default_value = "bayes")]
    pub detector: String,
    #[arg(long, default_value_t = fingerloc::zone::CBS_THRESHOLD)]
    pub cbs_threshold: f64,
    #[arg(long, default_value_t = fingerloc::zone::RANK_THRESHOLD)]
    pub rank_threshold: f64,
    /// Samples averaged per decision by the rank and Manhattan detectors.
    #[arg(long, default_value_t = 1)]
    pub aggregate: usize,
    #[arg(long, default_value_t = fingerloc::zone::MAX_STATIONS)]
    pub max_stations: usize,
    #[arg(long, default_value_t = fingerloc::zone::DEFAULT_P_SUSTAIN)]
    pub p_sustain: f64,
}

#[derive(Args, Debug)]
pub struct ZoneEmulateArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub fps: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    /// Walking-distance radius of the zones in meters.
    #[arg(long, default_value_t = fingerloc::zone::TRACKING_RADIUS)]
    pub radius: f64,
}

#[derive(Args, Debug)]
pub struct ZoneDetectArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub fps: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub zone: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum ProxCmd {
    /// Buddy-list service over aligned target traces.
    Emulate(ProxArgs),
}

#[derive(Args, Debug)]
pub struct ProxArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Comma-separated trace files, one per target.
    #[arg(long, value_delimiter = ',', required = true)]
    pub traces: Vec<PathBuf>,
    /// Buddy distance in meters.
    #[arg(long)]
    pub p: f64,
    /// Borderline tolerance in meters.
    #[arg(long)]
    pub b: f64,
    /// Locate targets with this radio map instead of their ground truth.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long, default_value = "bayes")]
    pub method: String,
}

#[derive(Subcommand, Debug)]
enum MoveCmd {
    /// Train emission densities from motion-labeled traces.
    Train(MoveTrainArgs),
    /// Per-sample verdicts and scan modes.
    Detect {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "comm-friendly")]
        preset: String,
    },
    /// True and false positive rates of both presets.
    Roc {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        traces: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct MoveTrainArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub traces: Vec<PathBuf>,
    /// variance, weighted-variance, euclid-gap or euclid-avg.
    #[arg(long, default_value = "variance")]
    pub feature: String,
    #[arg(long, default_value_t = fingerloc::movement::DEFAULT_WINDOW)]
    pub window: usize,
    /// Stations used by the variance feature.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = fingerloc::movement::DEFAULT_HISTORY)]
    pub history: usize,
}

#[derive(Args, Debug)]
pub struct CrossvalArgs {
    /// locate or move.
    #[arg(long)]
    pub task: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub folds: usize,
    /// Locate method for the locate task.
    #[arg(long, default_value = "nn")]
    pub method: String,
    /// Preset for the move task.
    #[arg(long, default_value = "comm-friendly")]
    pub preset: String,
    /// Shuffles the assignment of traces to folds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(c) => match c {
            SynthCmd::Fingerprints { world, per_cell, seed } => run::synth_fingerprints(&world, per_cell, seed),
            SynthCmd::Trace(a) => run::synth_trace(&a),
            SynthCmd::Graph { world } => run::synth_graph(&world),
            SynthCmd::Building { cells, extra, seed } => run::synth_building(cells, extra, seed),
        },
        Command::Map(MapCmd::Build { fps, kind, aggregation, step }) => run::map_build(&fps, &kind, &aggregation, step),
        Command::Locate(a) => run::locate(&a),
        Command::Adapt(c) => match c {
            AdaptCmd::Fit(a) => run::adapt_fit(&a),
            AdaptCmd::Normalize { trace, c1, c2 } => run::adapt_normalize(&trace, c1, c2),
            AdaptCmd::TrainAnalyzer { traces } => run::adapt_train_analyzer(&traces),
            AdaptCmd::TrainQuality { fresh, cached, dynamic, constant } => {
                run::adapt_train_quality(&fresh, &cached, &dynamic, &constant)
            }
            AdaptCmd::Classify { trace, model } => run::adapt_classify(&trace, &model),
        },
        Command::Zone(c) => match c {
            ZoneCmd::Emulate(a) => run::zone_emulate(&a),
            ZoneCmd::Detect(a) => run::zone_detect(&a),
            ZoneCmd::Encode { fps, zone, max_stations, p_sustain } => {
                run::zone_encode(&fps, &zone, max_stations, p_sustain, cli.out.as_deref())
            }
        },
        Command::Prox(ProxCmd::Emulate(a)) => run::prox_emulate(&a),
        Command::Move(c) => match c {
            MoveCmd::Train(a) => run::move_train(&a),
            MoveCmd::Detect { trace, model, preset } => run::move_detect(&trace, &model, &preset),
            MoveCmd::Roc { model, traces } => run::move_roc(&model, &traces),
        },
        Command::Crossval(a) => run::crossval(&a),
    };
    let written = result.and_then(|text| match (&cli.out, text) {
        (_, None) => Ok(()),
        (Some(path), Some(text)) => std::fs::write(path, text).map_err(|source| fingerloc::Error::Io {
            path: path.clone(),
            source,
        }),
        (None, Some(text)) => {
            print!("{text}");
            Ok(())
        }
    });
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fingerloc: {e}");
            ExitCode::from(match e {
                fingerloc::Error::InvalidArgument(_) => 1,
                _ => 2,
            })
        }
    }
}
