//! Command-line front-end: scenario ingestion, deterministic CSV emission and
//! the machine-checkable exit-code verdict.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | self-powered (or no verdict needed) |
//! | 1 | usage or parse error |
//! | 2 | self-powered condition failed |
//! | 3 | simulation diverged |
//! | 4 | OUQ constraint set infeasible |

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use selfpowered_core::Error as CoreError;

mod commands;
pub mod output;
pub mod scenario;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_SELF_POWERED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "selfpowered", version, about = "Self-powered flight analysis for buoyant solar-electric multirotors")]
pub struct Cli {
    /// Seed for randomized searches.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form solar-powered cruise speed, optionally with a reference table.
    SolarSpeed(SolarSpeedArgs),
    /// Closed-loop simulation of a scenario file.
    Simulate(SimulateArgs),
    /// Sweep force-loop kp and kd over a grid.
    GainMap(GainMapArgs),
    /// Lower and upper bounds on the self-powered failure probability.
    OuqBounds(OuqArgs),
    /// I-V and P-V curve of a single-diode PV cell.
    PvCurve(PvCurveArgs),
    /// Largest self-powered acceleration as a function of speed.
    AccelFrontier(FrontierArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Cuboid,
    Ellipsoid,
}

#[derive(Debug, Args)]
pub struct SolarSpeedArgs {
    #[arg(long, value_enum)]
    pub shape: ShapeArg,
    /// Length, m.
    #[arg(long = "L")]
    pub length: Option<f64>,
    /// Ellipsoid height, m.
    #[arg(long = "D")]
    pub height_d: Option<f64>,
    /// Cuboid height or ellipsoid width, m.
    #[arg(long = "b")]
    pub b: Option<f64>,
    /// Cuboid width, m.
    #[arg(long = "a")]
    pub a: Option<f64>,
    /// Overall PV efficiency in (0, 1).
    #[arg(long)]
    pub eta: f64,
    /// Defaults to 2 (cuboid) or 1 (ellipsoid).
    #[arg(long)]
    pub cd_max: Option<f64>,
    /// Defaults to cd-max.
    #[arg(long)]
    pub cd_actual: Option<f64>,
    /// Covered PV area, m². Full coverage when omitted.
    #[arg(long)]
    pub a_pv: Option<f64>,
    #[arg(long, default_value_t = 1.2)]
    pub rho: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub irradiance: f64,
    /// Emit the speed-versus-ratio table.
    #[arg(long)]
    pub table: bool,
    /// Comma-separated efficiencies for the table; defaults to --eta.
    #[arg(long, value_delimiter = ',')]
    pub etas: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub ratio_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub ratio_max: f64,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    #[arg(long)]
    pub force_kp: Option<f64>,
    #[arg(long)]
    pub force_ki: Option<f64>,
    #[arg(long)]
    pub force_kd: Option<f64>,
    #[arg(long)]
    pub pitch_kp: Option<f64>,
    #[arg(long)]
    pub pitch_ki: Option<f64>,
    #[arg(long)]
    pub pitch_kd: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GainMapArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub kp_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub kp_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub kd_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub kd_max: f64,
    #[arg(long, default_value_t = 41)]
    pub kp_points: usize,
    #[arg(long, default_value_t = 41)]
    pub kd_points: usize,
    /// Append a feasibility column under the constraint flags.
    #[arg(long)]
    pub feasible: bool,
    #[arg(long)]
    pub pnon_max: Option<f64>,
    #[arg(long)]
    pub overshoot_max: Option<f64>,
    #[arg(long)]
    pub vmin: Option<f64>,
    #[arg(long)]
    pub peak_time_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OuqArgs {
    pub scenario: PathBuf,
}

#[derive(Debug, Args)]
pub struct PvCurveArgs {
    /// Read cell parameters from a scenario's [pv.cell] table.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Defaults to the open-circuit voltage.
    #[arg(long)]
    pub v_max: Option<f64>,
    #[arg(long)]
    pub isc: Option<f64>,
    #[arg(long)]
    pub i0: Option<f64>,
    #[arg(long)]
    pub rs: Option<f64>,
    #[arg(long)]
    pub rsh: Option<f64>,
    #[arg(long)]
    pub ideality: Option<f64>,
    #[arg(long)]
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    #[arg(long, default_value_t = 11.3)]
    pub mass_kg: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cd: f64,
    /// Frontal area, m². Defaults to a 1.25 m radius sphere.
    #[arg(long)]
    pub area_m2: Option<f64>,
    #[arg(long, default_value_t = 1.2)]
    pub rho: f64,
    /// Generated power, W. Defaults to irradiance·eta·a-pv.
    #[arg(long)]
    pub pg_w: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// PV area, m². Defaults to the frontal area.
    #[arg(long)]
    pub a_pv: Option<f64>,
    #[arg(long, default_value_t = 1000.0)]
    pub irradiance: f64,
    #[arg(long, default_value_t = 0.1)]
    pub v_min: f64,
    /// Defaults to the solar-powered speed, where the frontier reaches zero.
    #[arg(long)]
    pub v_max: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

/// Parse `args` (including the program name) and run, writing to the given streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            exit_code_for(&e)
        }
    }
}

/// Run with process arguments and standard streams.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn exit_code_for(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        match cause.downcast_ref::<CoreError>() {
            Some(CoreError::Divergence { .. }) => return EXIT_DIVERGED,
            Some(CoreError::Infeasible(_)) => return EXIT_INFEASIBLE,
            _ => {}
        }
    }
    EXIT_USAGE
}
