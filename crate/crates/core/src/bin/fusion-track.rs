use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fusion_track::config::{load_config, RunConfig};
use fusion_track::error::{Error, Result};
use fusion_track::evaluation::{write_bins_csv, PrecisionConfig, ResidualRecord};
use fusion_track::geometry::{EgoState, TrackMap};
use fusion_track::io::{read_json, read_jsonl, write_json_pretty, write_jsonl_file, write_scenario};
use fusion_track::pipeline::{DetectionFrame, TrackedObjectList};
use fusion_track::replay::replay;
use fusion_track::runner::{evaluate, run_sweep, write_sweep_csv, EvaluationInput, SweepSpec, TRANSIENT_BIN};
use fusion_track::simulator::{generate, overtake_scenario, OvalSpec, OvertakeParams, ScenarioSpec, TruthFrame};

#[derive(Parser)]
#[command(name = "fusion-track", version, about = "Multi-sensor late fusion and object tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground truth, ego and detection logs for a scenario.
    Simulate {
        /// Scenario spec (JSON). Without it the default two-car overtake is used.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Seed for the default overtake.
        #[arg(long, conflicts_with = "spec")]
        seed: Option<u64>,
        /// Duration of the default overtake (s).
        #[arg(long, conflicts_with = "spec")]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay ego and detection logs through the tracker.
    Track {
        /// Run config (JSON). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Track boundary CSV. Defaults to the built-in oval.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        ego: PathBuf,
        /// Detection log; repeat for every sensor.
        #[arg(long = "det", required = true)]
        det: Vec<PathBuf>,
        /// Tracked object lists, one per cycle.
        #[arg(long)]
        out: PathBuf,
        /// Residual records of every applied update.
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Compute residual, precision, delay and transient metrics.
    Evaluate {
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        residuals: PathBuf,
        /// Detection logs for delay statistics.
        #[arg(long = "det")]
        det: Vec<PathBuf>,
        /// Ego log for moved-distance statistics.
        #[arg(long)]
        ego: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Flat CSV of residual statistics per observation-age bin.
        #[arg(long)]
        bins_csv: Option<PathBuf>,
        #[arg(long, default_value_t = TRANSIENT_BIN)]
        bin_width: f64,
        /// Minimum lifetime of a true-positive track (s).
        #[arg(long, default_value_t = PrecisionConfig::default().t_min)]
        t_min: f64,
        /// Maximum mean distance of a true-positive track to its agent (m).
        #[arg(long, default_value_t = PrecisionConfig::default().d_tp)]
        d_tp: f64,
    },
    /// Run the full chain for every value of one parameter.
    Sweep {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn simulate(spec: Option<PathBuf>, seed: Option<u64>, duration: Option<f64>, out: &Path) -> Result<()> {
    let spec: ScenarioSpec = match spec {
        Some(path) => read_json(&path)?,
        None => {
            let mut p = OvertakeParams::default();
            if let Some(s) = seed {
                p.seed = s;
            }
            if let Some(d) = duration {
                p.duration = d;
            }
            overtake_scenario(&p)?
        }
    };
    let sim = generate(&spec)?;
    write_scenario(&sim, out)?;
    let frames: usize = sim.frames.values().map(Vec::len).sum();
    eprintln!("wrote {} truth frames and {frames} detection frames to {}", sim.truth.len(), out.display());
    Ok(())
}

fn track(
    config: Option<PathBuf>,
    map: Option<PathBuf>,
    ego: &Path,
    det: &[PathBuf],
    out: &Path,
    residuals: Option<PathBuf>,
) -> Result<()> {
    let cfg = match config {
        Some(path) => load_config(&path)?,
        None => RunConfig::default(),
    };
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    let map = match map {
        Some(path) => TrackMap::load(&path)?,
        None => OvalSpec::default().build_map()?,
    };
    let ego: Vec<EgoState> = read_jsonl(ego)?;
    let mut frames: Vec<DetectionFrame> = Vec::new();
    for path in det {
        frames.extend(read_jsonl::<DetectionFrame>(path)?);
    }
    let result = replay(&cfg, map, &ego, &frames)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    write_jsonl_file(out, &result.outputs)?;
    if let Some(path) = residuals {
        write_jsonl_file(&path, &result.residuals)?;
    }
    let s = result.stats;
    eprintln!(
        "{} cycles, {} frames processed, {} updates, {} tracks created",
        s.cycles, s.frames_processed, s.updates_applied, s.tracks_created
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate_cmd(
    truth: Option<PathBuf>,
    tracks: &Path,
    residuals: &Path,
    det: &[PathBuf],
    ego: Option<PathBuf>,
    out: &Path,
    bins_csv: Option<PathBuf>,
    bin_width: f64,
    precision: PrecisionConfig,
) -> Result<()> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::config("bin-width", "must be > 0"));
    }
    let truth: Option<Vec<TruthFrame>> = truth.map(|p| read_jsonl(&p)).transpose()?;
    let outputs: Vec<TrackedObjectList> = read_jsonl(tracks)?;
    let records: Vec<ResidualRecord> = read_jsonl(residuals)?;
    let mut frames: Vec<DetectionFrame> = Vec::new();
    for path in det {
        frames.extend(read_jsonl::<DetectionFrame>(path)?);
    }
    let ego: Vec<EgoState> = ego.map(|p| read_jsonl(&p)).transpose()?.unwrap_or_default();
    let metrics = evaluate(&EvaluationInput {
        outputs: &outputs,
        residuals: &records,
        truth: truth.as_deref(),
        frames: &frames,
        ego: &ego,
        precision,
        bin_width,
    });
    for n in &metrics.notices {
        eprintln!("notice: {n}");
    }
    write_json_pretty(out, &metrics)?;
    if let Some(path) = bins_csv {
        write_bins_csv(&metrics.transient, create(&path)?)?;
    }
    Ok(())
}

fn sweep(spec: &Path, out: &Path) -> Result<()> {
    let spec: SweepSpec = read_json(spec)?;
    let rows = run_sweep(&spec)?;
    for r in rows.iter().filter(|r| r.status != "ok") {
        eprintln!("warning: {} = {} failed: {}", r.parameter, r.value, r.error);
    }
    write_sweep_csv(&rows, create(out)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { spec, seed, duration, out } => simulate(spec, seed, duration, &out),
        Command::Track { config, map, ego, det, out, residuals } => track(config, map, &ego, &det, &out, residuals),
        Command::Evaluate { truth, tracks, residuals, det, ego, out, bins_csv, bin_width, t_min, d_tp } => evaluate_cmd(
            truth,
            &tracks,
            &residuals,
            &det,
            ego,
            &out,
            bins_csv,
            bin_width,
            PrecisionConfig { t_min, d_tp },
        ),
        Command::Sweep { sweep: spec, out } => sweep(&spec, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
