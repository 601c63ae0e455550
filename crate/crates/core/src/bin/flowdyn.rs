use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowdyn::config::{Preset, RunConfig};
use flowdyn::eval::{
    ablation, evaluate_map, export_svg, format_ablation, resolution_sweep, write_report_files, EvalReport, Method,
    SvgOptions,
};
use flowdyn::scene_graph::{read_pose_events, Bounds2, LayeredGraph};
use flowdyn::simulator::{generate, load_detections, save_detections, Detection, FlowScenario};
use flowdyn::snapshot::Snapshot;
use flowdyn::swgmm::FitMethod;
use flowdyn::system::{DynamicsSystem, Observation};
use flowdyn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "flowdyn",
    version,
    about = "Maps of pedestrian dynamics bound to scene-graph nodes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a detection stream from a scenario.
    Simulate(SimulateArgs),
    /// Replay detections and pose events into a snapshot.
    Fit(FitArgs),
    /// Score a snapshot against held-out detections.
    Eval(EvalArgs),
    /// Evaluate every method across the configured resolutions.
    Sweep(ExperimentArgs),
    /// Compare BIC and mean-shift order selection at one resolution.
    Ablate(AblateArgs),
    /// Draw a snapshot as an SVG flow-arrow map.
    Export(ExportArgs),
}

#[derive(Args, Default)]
struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario: multimodal or unimodal.
    #[arg(long)]
    preset: Option<Preset>,
}

/// Overrides for run-config fields.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Run config TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Resolutions in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<f64>>,
    /// Reservoir capacity M.
    #[arg(long)]
    capacity: Option<usize>,
    /// Direction bins B.
    #[arg(long)]
    bins: Option<usize>,
    /// Largest mixture order tried.
    #[arg(long)]
    k_max: Option<usize>,
    /// Angular replicas on each side of the circle.
    #[arg(long)]
    winding: Option<u32>,
    /// Seconds between scheduled model updates.
    #[arg(long)]
    update_interval: Option<f64>,
    /// Pose-graph stabilization window, seconds.
    #[arg(long)]
    tau: Option<f64>,
    /// Buffered samples a cell needs before it is fitted.
    #[arg(long)]
    min_fit_samples: Option<usize>,
}

impl ConfigArgs {
    fn load(&self, scenario: &ScenarioArgs) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &scenario.scenario {
            cfg.scenario = Some(s.to_string_lossy().into_owned());
            cfg.preset = None;
            cfg.base_dir = PathBuf::new();
        }
        if let Some(p) = scenario.preset {
            cfg.preset = Some(p);
            cfg.scenario = None;
        }
        if let Some(r) = &self.resolutions {
            cfg.resolutions = r.clone();
        }
        let s = &mut cfg.system;
        if let Some(v) = self.capacity {
            s.map.reservoir_capacity = v;
        }
        if let Some(v) = self.bins {
            s.map.bins = v;
        }
        if let Some(v) = self.k_max {
            s.fit.k_max = v;
        }
        if let Some(v) = self.winding {
            s.fit.winding = v;
        }
        if let Some(v) = self.update_interval {
            s.update_interval = v;
        }
        if let Some(v) = self.tau {
            s.stabilization_window = v;
        }
        if let Some(v) = self.min_fit_samples {
            s.min_fit_samples = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Stream seed.
    #[arg(long)]
    seed: u64,
    /// Override the scenario duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Output detection file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Detection stream to replay.
    #[arg(long)]
    detections: PathBuf,
    /// Pose-event stream applied on top of the navigation grid.
    #[arg(long)]
    pose_events: Option<PathBuf>,
    /// Start from an empty graph instead of a navigation grid.
    #[arg(long)]
    no_grid: bool,
    /// Resolution in meters; defaults to the first configured one.
    #[arg(long)]
    resolution: Option<f64>,
    /// Order selection: bic or meanshift.
    #[arg(long)]
    method: Option<FitMethod>,
    /// Fitting seed.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output snapshot.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    snapshot: PathBuf,
    /// Held-out detections.
    #[arg(long)]
    test: PathBuf,
    /// Training detections; enables the fine reference map row.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Training detections; generated from the scenario when absent.
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    /// Held-out detections; generated from the scenario when absent.
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    /// Methods, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "swgmm,histogram,meanshift")]
    methods: Vec<Method>,
    /// Output directory; defaults to the configured one.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    resolution: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    snapshot: PathBuf,
    /// Output SVG.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 40.0)]
    pixels_per_meter: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let head: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error[usage]: {}", head.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Ablate(a) => ablate(a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            ExitCode::FAILURE
        }
    }
}

fn scenario_of(args: &ScenarioArgs) -> Result<FlowScenario> {
    match (&args.scenario, args.preset) {
        (Some(p), _) => FlowScenario::load(p),
        (None, Some(p)) => Ok(p.scenario()),
        (None, None) => Err(Error::invalid("give --scenario or --preset")),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut sc = scenario_of(&a.scenario)?.with_seed(a.seed);
    if let Some(d) = a.duration {
        sc.duration = d;
    }
    let dets = generate(&sc)?;
    save_detections(&a.out, &dets)?;
    log::info!("wrote {} detections to {}", dets.len(), a.out.display());
    Ok(())
}

/// Detection bounding box grown outward to multiples of `delta`, so grid
/// nodes sit at hash-cell centers.
fn snapped_bounds(dets: &[Detection], delta: f64) -> Option<Bounds2> {
    let first = dets.first()?;
    let (mut x0, mut y0, mut x1, mut y1) = (first.position.x, first.position.y, first.position.x, first.position.y);
    for d in dets {
        x0 = x0.min(d.position.x);
        y0 = y0.min(d.position.y);
        x1 = x1.max(d.position.x);
        y1 = y1.max(d.position.y);
    }
    let lo = |v: f64| (v / delta).floor() * delta;
    let hi = |v: f64| ((v / delta).floor() + 1.0) * delta;
    Bounds2::new(lo(x0), lo(y0), hi(x1), hi(y1)).ok()
}

fn fit(a: FitArgs) -> Result<()> {
    let mut cfg = a.config.load(&a.scenario)?;
    cfg.seeds.fitting = a.seed;
    if let Some(m) = a.method {
        cfg.system.method = m;
    }
    let delta = a.resolution.unwrap_or(cfg.resolutions[0]);
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid(format!("resolution must be > 0, got {delta}")));
    }
    cfg.resolutions = vec![delta];
    cfg.system.map.resolution = delta;

    let dets = load_detections(&a.detections)?;
    let events = match &a.pose_events {
        Some(p) => read_pose_events(p)?,
        None => Vec::new(),
    };
    let explicit_scenario = cfg.scenario.is_some() || cfg.preset.is_some();
    let graph = if a.no_grid {
        LayeredGraph::new()
    } else if explicit_scenario {
        LayeredGraph::build_nav_layer(&cfg.scenario()?.bounds, delta)?
    } else {
        match snapped_bounds(&dets, delta) {
            Some(b) => LayeredGraph::build_nav_layer(&b, delta)?,
            None => LayeredGraph::new(),
        }
    };

    let mut sys = DynamicsSystem::new(graph, cfg.system_config(), cfg.seeds.fitting)?;
    let obs: Vec<(f64, Observation)> = dets
        .iter()
        .map(|d| {
            (
                d.time,
                Observation {
                    position: d.position,
                    sample: d.sample(),
                },
            )
        })
        .collect();
    let stats = sys.replay(&obs, &events)?;
    if stats.failures > 0 {
        log::warn!("{} cell fits failed", stats.failures);
    }
    log::info!(
        "{} ticks, {} transfers, {} refits, {} cells",
        stats.ticks,
        stats.transfers,
        stats.refits,
        sys.map.cell_count()
    );
    Snapshot::capture(&sys, &cfg, stats.end_time).save(&a.out)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn eval(a: EvalArgs) -> Result<()> {
    let snap = Snapshot::load(&a.snapshot)?;
    let (_, map) = snap.restore()?;
    let test = load_detections(&a.test)?;
    let train = a.train.as_deref().map(load_detections).transpose()?;
    let report = evaluate_map(
        &map,
        &test,
        snap.config.system.map.bins,
        snap.method,
        snap.config.system.fit.k_max,
        train.as_deref(),
    )?;
    write_outputs(&a.out, &[report])
}

fn write_outputs(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    write_report_files(dir, reports)?;
    write_json(&dir.join("report.json"), &reports)
}

/// Train and test streams from files, or generated from the scenario seeds.
fn streams(
    cfg: &RunConfig,
    train: &Option<PathBuf>,
    test: &Option<PathBuf>,
) -> Result<(FlowScenario, Vec<Detection>, Vec<Detection>)> {
    let sc = cfg.scenario()?;
    match (train, test) {
        (Some(tr), Some(te)) => Ok((sc, load_detections(tr)?, load_detections(te)?)),
        _ => {
            let train = generate(&sc.with_seed(cfg.seeds.simulation))?;
            let test = generate(&sc.with_seed(cfg.seeds.test))?;
            Ok((sc, train, test))
        }
    }
}

fn sweep(a: ExperimentArgs) -> Result<()> {
    let cfg = a.config.load(&a.scenario)?;
    let (sc, train, test) = streams(&cfg, &a.train, &a.test)?;
    let reports = resolution_sweep(&train, &test, &cfg.resolutions, &a.methods, &cfg.experiment(sc.bounds))?;
    let out = a.out.unwrap_or_else(|| cfg.output_dir());
    write_outputs(&out, &reports)?;
    print!("{}", flowdyn::eval::format_reports(&reports));
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let cfg = a.config.load(&a.scenario)?;
    let (sc, train, test) = streams(&cfg, &a.train, &a.test)?;
    let rep = ablation(&train, &test, a.resolution, &cfg.experiment(sc.bounds))?;
    let out = a.out.unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let text = format_ablation(&rep);
    let path = out.join("ablation.txt");
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    write_json(&out.join("ablation.json"), &rep)?;
    // wall times vary run to run, so they live apart from the deterministic report
    let mut timings = String::from("method,fit_seconds\n");
    for (name, ts) in [("bic", &rep.bic_fit_seconds), ("meanshift", &rep.meanshift_fit_seconds)] {
        for t in ts {
            timings.push_str(&format!("{name},{t:.9}\n"));
        }
    }
    let path = out.join("fit_timings.csv");
    std::fs::write(&path, timings).map_err(|e| Error::io(&path, e))?;
    print!("{text}");
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let snap = Snapshot::load(&a.snapshot)?;
    let (graph, map) = snap.restore()?;
    let opts = SvgOptions {
        pixels_per_meter: a.pixels_per_meter,
        ..SvgOptions::default()
    };
    export_svg(&map, &graph, &a.out, &opts)
}
