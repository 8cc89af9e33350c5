use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing::Level;

use vru_sim::aeb::{classify_outcome, simulate_run, AebPolicy, DEFAULT_DT};
use vru_sim::harness::{exit_code, load_config, run_and_report, Overrides, RunConfig};
use vru_sim::ingest::{events_for_target, match_detections, parse_detection_log, parse_ground_truth, MatchOptions};
use vru_sim::placement::{evaluate_sites, greedy_select, PlacementContext, ScenarioSuite};
use vru_sim::scenario::{build_scenario_with, ScenarioKind, ScenarioParams};
use vru_sim::sensing::{
    confirm_stream, default_vut_sensor, DetectionModel, Fusion, Mount, SensorLayout, VRU_TARGET_ID,
};
use vru_sim::Error;

#[derive(Parser)]
#[command(name = "vru-sim", version, about = "VRU emergency-braking scenarios with roadside sensors")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario x speed x sensor-subset sweep and write reports.
    Sweep(SweepArgs),
    /// Run a single scenario and write its per-frame trace.
    Simulate(SimulateArgs),
    /// Score an external detection log against ground truth.
    Score(ScoreArgs),
    /// Pick roadside sites under a budget.
    Placement(PlacementArgs),
    /// Print the default sensor layout.
    Layout {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// Config file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Only run these subsets (repeatable or comma-separated).
    #[arg(long = "subset", value_delimiter = ',')]
    subsets: Vec<String>,
    /// Only run these VUT speeds in km/h.
    #[arg(long = "speed", value_delimiter = ',')]
    speeds: Vec<u32>,
    #[arg(short, long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: ScenarioKind,
    /// VUT speed in km/h.
    #[arg(long)]
    speed: u32,
    /// vut-only, any-sensor, or comma-separated sensor ids.
    #[arg(long, default_value = "any-sensor")]
    subset: String,
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Scene rotation in degrees.
    #[arg(long, default_value_t = 0.0)]
    yaw: f64,
    #[arg(long)]
    no_sensing: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace file; printed to stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Accept IoU equal to the threshold.
    #[arg(long)]
    inclusive: bool,
    /// Consecutive frames needed for confirmation.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 10.0)]
    frame_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    latency: f64,
    /// Per-frame TP/FP/FN counts as CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlacementArgs {
    /// Candidate sites, in the sensor layout format.
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    budget: usize,
    /// Scenarios in the suite (default: all).
    #[arg(long = "scenario", value_delimiter = ',')]
    scenarios: Vec<ScenarioKind>,
    #[arg(long = "speed", value_delimiter = ',')]
    speeds: Vec<u32>,
    /// Always include the default VUT camera.
    #[arg(long)]
    with_vut: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, default_value = "placement-out")]
    output: PathBuf,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = if quiet {
        Level::ERROR
    } else {
        match verbose {
            0 => Level::WARN,
            1 => Level::INFO,
            2 => Level::DEBUG,
            _ => Level::TRACE,
        }
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}

fn code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Validation(_) | Error::Parse { .. } => exit_code::CONFIG_ERROR,
        Error::Io { .. } | Error::Contract(_) => exit_code::RUNTIME_ERROR,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    let result = match cli.command {
        Command::Sweep(args) => sweep(args),
        Command::Simulate(args) => simulate(args),
        Command::Score(args) => score(args),
        Command::Placement(args) => placement(args),
        Command::Layout { output } => layout(output.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code_for(&e) as u8)
        }
    }
}

/// Writes to stdout; a closed reader (e.g. `| head`) ends the process quietly.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(exit_code::SUCCESS);
        }
        eprintln!("error: writing to stdout: {e}");
    }
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(&format!("{}\n", format_args!($($arg)*))) };
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            emit(text);
            Ok(())
        }
    }
}

fn sweep(args: SweepArgs) -> Result<i32, Error> {
    let mut config = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        seed: args.seed,
        output_dir: args.output,
        workers: args.workers,
        subsets: (!args.subsets.is_empty()).then_some(args.subsets),
        speeds_kmh: (!args.speeds.is_empty()).then_some(args.speeds),
    })?;
    let dir = config.output_dir.clone();
    let (result, manifest) = run_and_report(&config, &dir)?;
    for (kind, subset, runs, avoided) in result.avoidance_by_subset() {
        outln!("{:<7} {subset:<12} avoided {avoided}/{runs}", kind.to_string());
    }
    outln!("{} cells, reports in {}", result.cells.len(), dir.display());
    if manifest.is_partial() {
        eprintln!("some report files could not be written; see manifest.csv");
        return Ok(exit_code::PARTIAL_OUTPUT);
    }
    Ok(exit_code::SUCCESS)
}

fn parse_fusion(text: &str) -> Fusion {
    match text {
        "any-sensor" => Fusion::AnySensor,
        "vut-only" => Fusion::VutOnly,
        ids => Fusion::subset(ids.split(',').map(str::trim)),
    }
}

fn simulate(args: SimulateArgs) -> Result<i32, Error> {
    let layout = match &args.layout {
        Some(p) => SensorLayout::load(p)?,
        None => SensorLayout::default_layout(),
    };
    let mut spec = build_scenario_with(args.scenario, args.speed, &ScenarioParams::default())?;
    if args.yaw != 0.0 {
        spec = spec.rotated(args.yaw.to_radians());
    }
    let model = if args.no_sensing {
        DetectionModel::disabled()
    } else {
        DetectionModel {
            seed: args.seed,
            ..DetectionModel::default()
        }
    };
    let trace = simulate_run(
        &spec,
        &layout.sensors,
        &model,
        &AebPolicy::default(),
        &parse_fusion(&args.subset),
        DEFAULT_DT,
    )?;
    write_or_print(args.output.as_deref(), &trace.to_text())?;
    let outcome = classify_outcome(&trace);
    eprintln!(
        "{} {} km/h {}: {} (collision speed {:.2} m/s)",
        spec.kind,
        spec.vut_speed_kmh,
        trace.fusion,
        if outcome.avoided { "avoided" } else { "collision" },
        outcome.collision_speed
    );
    Ok(exit_code::SUCCESS)
}

fn score(args: ScoreArgs) -> Result<i32, Error> {
    let dets = parse_detection_log(&args.detections)?;
    let gts = parse_ground_truth(&args.ground_truth)?;
    let options = MatchOptions {
        iou_threshold: args.iou,
        strict: !args.inclusive,
        frame_rate_hz: args.frame_rate,
        latency_s: args.latency,
        ..MatchOptions::default()
    };
    let result = match_detections(&dets, &gts, &options);
    let (tp, fp, fn_) = result.totals();
    outln!("tp={tp} fp={fp} fn={fn_}");
    let events = events_for_target(&result.events, VRU_TARGET_ID);
    let mut sensors: Vec<&str> = events.iter().map(|e| e.sensor_id.as_str()).collect();
    sensors.dedup();
    for id in sensors {
        let stream: Vec<_> = events.iter().filter(|e| e.sensor_id == id).cloned().collect();
        let first = confirm_stream(&stream, args.k)?.first().map(|c| c.time);
        match first {
            Some(t) => outln!("{id}: confirmed at {t:.3} s"),
            None => outln!("{id}: never confirmed"),
        }
    }
    if let Some(p) = &args.output {
        let mut csv = String::from("frame,sensor_id,tp,fp,fn\n");
        for c in &result.counts {
            csv.push_str(&format!("{},{},{},{},{}\n", c.frame, c.sensor_id, c.tp, c.fp, c.fn_));
        }
        write_or_print(Some(p), &csv)?;
    }
    Ok(exit_code::SUCCESS)
}

fn placement(args: PlacementArgs) -> Result<i32, Error> {
    let candidates = SensorLayout::load(&args.candidates)?;
    let sites: Vec<_> = candidates.sensors.iter().filter(|s| s.mount == Mount::Rsu).cloned().collect();
    if sites.len() != candidates.sensors.len() {
        tracing::warn!("ignoring VUT-mounted entries in the candidate list");
    }
    let kinds = if args.scenarios.is_empty() {
        ScenarioKind::ALL.to_vec()
    } else {
        args.scenarios.clone()
    };
    let policy = AebPolicy::default();
    let speeds = (!args.speeds.is_empty()).then_some(args.speeds.as_slice());
    let suite = ScenarioSuite::sweep(&kinds, speeds, &ScenarioParams::default(), &policy, DEFAULT_DT)?;
    let ctx = PlacementContext {
        suite,
        policy,
        model: DetectionModel {
            seed: args.seed,
            ..DetectionModel::default()
        },
        dt: DEFAULT_DT,
        base: if args.with_vut { vec![default_vut_sensor()] } else { Vec::new() },
    };
    let singles = evaluate_sites(&sites, &ctx)?;
    for s in &singles {
        outln!(
            "{:<8} avoidance {:.3} accuracy {:.3}",
            s.id,
            s.score.avoidance_rate(),
            s.score.accuracy()
        );
    }
    let result = greedy_select(&sites, args.budget, &ctx)?;
    std::fs::create_dir_all(&args.output).map_err(|e| Error::Io {
        path: args.output.clone(),
        source: e,
    })?;
    write_or_print(Some(&args.output.join("placement.csv")), &result.to_csv())?;
    let layout = result.layout(&ctx, &sites)?;
    write_or_print(Some(&args.output.join("selected_layout.toml")), &layout.to_toml_string())?;
    outln!(
        "selected {} -> avoidance {:.3}, accuracy {:.3}",
        result.selected.join(","),
        result.avoidance_rate(),
        result.accuracy()
    );
    Ok(exit_code::SUCCESS)
}

fn layout(output: Option<&Path>) -> Result<i32, Error> {
    write_or_print(output, &SensorLayout::default_layout().to_toml_string())?;
    Ok(exit_code::SUCCESS)
}
