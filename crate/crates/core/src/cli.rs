//! Command-line front end. `main` only parses arguments and maps the result
//! of [`run`] to an exit code.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::agent::{load_policy, AgentError};
use crate::config::RunConfig;
use crate::experiment::{csv_row, metrics_csv, ExperimentError, PhaseMetrics, TestBench, Trainer, CSV_HEADER};
use crate::nn::gradcheck::{self, GradCheckOptions};
use crate::sim::{render_depth, write_pgm, CorridorSpec, QuadState, Vec3, World};

pub const VERSION: &str = env!("DQNAV_VERSION");

#[derive(Debug, Parser)]
#[command(name = "dqnav", version = VERSION, about = "Quadcopter DQN navigation trainer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a world, writing checkpoints, metrics and a run manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint greedily on a world.
    Eval(EvalArgs),
    /// Render one depth frame as a 16-bit PGM.
    Render(RenderArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write the default corridor world as JSON.
    GenWorld(GenWorldArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config JSON; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub world: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub flights: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Config used for the network shape, camera and flight settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the metrics row to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub y: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub z: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub yaw: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Config supplying the camera model.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Test hook: perturb the analytic gradient so the check must fail.
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct GenWorldArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or unreadable / invalid inputs.
    #[error("{0}")]
    Input(String),
    /// The command ran but its check or training failed.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Agent(AgentError::Divergence { .. }) => CliError::Failure(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p).map_err(input),
        None => Ok(RunConfig::default()),
    }
}

fn load_world(path: &Path) -> Result<World, CliError> {
    World::load(path).map_err(input)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Render(a) => render(a, out),
        Command::Gradcheck(a) => check_gradients(a, out),
        Command::GenWorld(a) => write_file(&a.out, CorridorSpec::default().build().to_json().as_bytes()),
    }
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let world = load_world(&a.world)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", a.out.display())))?;

    let mut manifest = cfg.clone();
    manifest.version = Some(VERSION.to_string());
    write_file(&a.out.join("manifest.json"), manifest.to_json().as_bytes())?;

    let seed = cfg.seed;
    let csv_path = a.out.join("metrics.csv");
    let mut rows: Vec<(usize, PhaseMetrics)> = Vec::new();
    write_file(&csv_path, metrics_csv(&rows, seed).as_bytes())?;
    let mut trainer = Trainer::new(cfg, world).map_err(input)?;
    trainer.run(|report| -> Result<(), CliError> {
        let flights = report.metrics.flights_trained;
        let ckpt = a.out.join(format!("ckpt_f{flights}.dqnav"));
        report.agent.save_checkpoint(&ckpt).map_err(|e| CliError::Input(format!("{}: {e}", ckpt.display())))?;
        rows.push((report.phase, report.metrics));
        write_file(&csv_path, metrics_csv(&rows, seed).as_bytes())?;
        writeln!(out, "{}", csv_row(report.phase, &report.metrics, seed)).map_err(input)?;
        Ok(())
    })
}

/// Flights trained, read from a `ckpt_f{n}` file name; 0 when absent.
fn flights_from_name(path: &Path) -> usize {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("ckpt_f"))
        .and_then(|n| n.parse().ok())
        .unwrap_or(0)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.flights == 0 {
        return Err(CliError::Input("--flights must be > 0".into()));
    }
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.seed = a.seed;
    let world = load_world(&a.world)?;
    let arch = cfg.architecture().map_err(input)?;
    let policy = load_policy(&a.ckpt, &arch).map_err(|e| CliError::Input(format!("{}: {e}", a.ckpt.display())))?;
    let bench = TestBench::from_config(&cfg, world);
    let metrics = bench.test_phase(&policy, flights_from_name(&a.ckpt), a.flights)?;
    let row = csv_row(1, &metrics, a.seed);
    writeln!(out, "{CSV_HEADER}\n{row}").map_err(input)?;
    if let Some(path) = a.csv {
        write_file(&path, metrics_csv(&[(1, metrics)], a.seed).as_bytes())?;
    }
    Ok(())
}

fn render(a: RenderArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let world = load_world(&a.world)?;
    let state = QuadState::new(Vec3::new(a.x, a.y, a.z), a.yaw);
    let img = render_depth(&world, &state, &cfg.camera);
    let mut buf = Vec::new();
    write_pgm(&mut buf, &img).map_err(input)?;
    write_file(&a.out, &buf)?;
    writeln!(out, "wrote {}x{} depth frame to {}", img.width, img.height, a.out.display()).map_err(input)
}

fn check_gradients(a: GradcheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let opts = GradCheckOptions { seed: a.seed, corrupt: a.corrupt_gradient, ..GradCheckOptions::default() };
    let report = gradcheck::run(&opts, RunConfig::default().actions.len()).map_err(input)?;
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(input);
    w(out, format!("{:<10} {:<16} {:>7} {:>7} {:>12}", "case", "tensor", "checked", "skipped", "max_rel_err"))?;
    for e in &report.entries {
        w(out, format!("{:<10} {:<16} {:>7} {:>7} {:>12.3e}", e.case, e.tensor, e.checked, e.skipped, e.max_rel_error))?;
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    w(out, format!("{verdict}: max relative error {:.3e} (tolerance {:e})", report.max_rel_error(), report.tolerance))?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failure(format!("gradient check failed: max relative error {:.3e}", report.max_rel_error())))
    }
}

/// Runs the process: parse, dispatch, report.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
