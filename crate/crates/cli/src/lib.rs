//! The `fpvgl` command line.
//!
//! Every subcommand runs headless. Failures print one JSON line on stderr,
//! `{"error":{"kind":...,"message":...}}`, and exit nonzero: 2 for bad
//! arguments, 1 for anything that went wrong while running.

pub mod bridge;
mod commands;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fpvgl_core::analysis::{AltitudeMode, OriginMode};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Session root used when `--out` is not given.
pub const ROOT_ENV: &str = "FPVGL_ROOT";
pub const DEFAULT_ROOT: &str = "sessions";

#[derive(Debug, Parser)]
#[command(
    name = "fpvgl",
    version,
    about = "FPV quadcopter ground-station toolkit",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Seed for every stochastic element.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fly a task in the simulator, logging a session and optionally
    /// serving MAVLink to relays and a live pilot.
    Sim(SimArgs),
    /// Relay MAVLink frames from a source to TCP clients with timestamps.
    Relay(RelayArgs),
    /// Log a relay's telemetry into a session folder.
    Log(LogArgs),
    /// Compute maneuver statistics for a session.
    Analyze(AnalyzeArgs),
    /// Turn a session into a learning dataset.
    Export(ExportArgs),
    /// Translate relay traffic for the browser console over WebSocket.
    Bridge(BridgeArgs),
    /// Write a task's default scenario file.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PilotKind {
    Scripted,
    Live,
}

fn task_number(s: &str) -> Result<u8, String> {
    match s.parse::<u8>() {
        Ok(n @ 1..=4) => Ok(n),
        _ => Err(format!("task must be 1, 2, 3 or 4, got {s:?}")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, value_parser = task_number)]
    pub task: u8,
    #[arg(long, value_enum, default_value_t = PilotKind::Scripted)]
    pub pilot: PilotKind,
    /// Horizontal GPS noise, metres per axis.
    #[arg(long = "gps-noise", value_parser = non_negative, default_value_t = 0.0)]
    pub gps_noise: f64,
    /// Serve the MAVLink stream here; peers may send RC_CHANNELS back to
    /// fly a live pilot.
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    /// Scenario file instead of the task's default course.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Session root (default: $FPVGL_ROOT, else ./sessions).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Do not log a session.
    #[arg(long)]
    pub no_log: bool,
    #[arg(long = "log-rate", value_parser = positive, default_value_t = 10.0)]
    pub log_rate: f64,
    /// Pace the loop in real time (implied by --listen and --pilot live).
    #[arg(long)]
    pub realtime: bool,
    /// Stop after this many simulated seconds.
    #[arg(long, value_parser = positive, default_value_t = 600.0)]
    pub duration: f64,
}

#[derive(Debug, Args)]
pub struct RelayArgs {
    /// `host:port` of a simulator (or any TCP MAVLink endpoint), a serial
    /// device or file path, or `-` for stdin.
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub listen: SocketAddr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    Physical,
    Sim,
}

#[derive(Debug, Args)]
pub struct LogArgs {
    /// Relay address.
    #[arg(long)]
    pub from: String,
    /// Session root (default: $FPVGL_ROOT, else ./sessions).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = positive, default_value_t = 10.0)]
    pub rate: f64,
    /// What the relay is connected to.
    #[arg(long, value_enum, default_value_t = SourceKind::Sim)]
    pub source: SourceKind,
    /// Simulator tick rate used to pick synthetic frames.
    #[arg(long = "tick-rate", value_parser = positive, default_value_t = 50.0)]
    pub tick_rate: f64,
    /// Stop after this many seconds instead of waiting for the relay to
    /// close or an interrupt.
    #[arg(long, value_parser = positive)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, value_parser = task_number)]
    pub task: u8,
    /// Latitude of the point that defines +X, degrees.
    #[arg(long = "ref-lat", allow_negative_numbers = true)]
    pub ref_lat: f64,
    /// Longitude of the point that defines +X, degrees.
    #[arg(long = "ref-lon", allow_negative_numbers = true)]
    pub ref_lon: f64,
    #[arg(long = "alt-mode", value_enum, default_value_t = AltMode::Relative)]
    pub alt_mode: AltMode,
    #[arg(long = "origin", value_enum, default_value_t = OriginArg::PreArmMean)]
    pub origin: OriginArg,
    /// Platform label for the table row (default from the session source).
    #[arg(long)]
    pub platform: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AltMode {
    Relative,
    Gps,
}

impl From<AltMode> for AltitudeMode {
    fn from(m: AltMode) -> Self {
        match m {
            AltMode::Relative => AltitudeMode::Relative,
            AltMode::Gps => AltitudeMode::Gps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OriginArg {
    PreArmMean,
    FirstFix,
}

impl From<OriginArg> for OriginMode {
    fn from(m: OriginArg) -> Self {
        match m {
            OriginArg::PreArmMean => OriginMode::PreArmMean,
            OriginArg::FirstFix => OriginMode::FirstFix,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "roll=1,pitch=2,throttle=3,yaw=4")]
    pub channels: String,
}

#[derive(Debug, Args)]
pub struct BridgeArgs {
    /// Relay address to subscribe to.
    #[arg(long)]
    pub relay: String,
    /// WebSocket listen address for consoles.
    #[arg(long)]
    pub listen: SocketAddr,
    /// Simulator `--listen` address that receives stick input.
    #[arg(long)]
    pub sim: Option<String>,
    /// Camera frames per second sent to consoles.
    #[arg(long = "frame-rate", value_parser = positive, default_value_t = 5.0)]
    pub frame_rate: f64,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_parser = task_number)]
    pub task: u8,
    #[arg(long)]
    pub out: PathBuf,
}

/// Raised by Ctrl-C; long-running subcommands poll it.
pub fn interrupted() -> Arc<AtomicBool> {
    static FLAG: std::sync::OnceLock<Arc<AtomicBool>> = std::sync::OnceLock::new();
    FLAG.get_or_init(|| {
        let flag = Arc::new(AtomicBool::new(false));
        let f = flag.clone();
        if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::SeqCst)) {
            log::warn!("cannot install interrupt handler: {e}");
        }
        flag
    })
    .clone()
}

fn default_root(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os(ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind, "message": self.message } }).to_string()
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let kind = if e.is::<Usage>() { "usage" } else { "runtime" };
        let code = if kind == "usage" { EXIT_USAGE } else { EXIT_FAILURE };
        let message = format!("{e:#}").replace('\n', " ");
        Failure { code, kind, message }
    }
}

/// An argument problem found after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    let result = match cli.command {
        Command::Sim(a) => commands::sim(a, seed),
        Command::Relay(a) => commands::relay(a),
        Command::Log(a) => commands::log(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Export(a) => commands::export(a),
        Command::Bridge(a) => commands::bridge(a),
        Command::Scenario(a) => commands::scenario(a),
    };
    result.map_err(Failure::from)
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::error::ErrorKind;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    EXIT_USAGE
                }
                _ => {
                    let message = e.render().to_string();
                    let first = message.lines().next().unwrap_or("invalid arguments");
                    let first = first.trim_start_matches("error: ").to_string();
                    eprintln!(
                        "{}",
                        Failure {
                            code: EXIT_USAGE,
                            kind: "usage",
                            message: first
                        }
                        .to_json_line()
                    );
                    EXIT_USAGE
                }
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_millis()
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.to_json_line());
            f.code
        }
    }
}
