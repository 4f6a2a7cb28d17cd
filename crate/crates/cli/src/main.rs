//! `slewplan`: minimum-time slews, multi-target pointing plans, slew atlases,
//! sweep schedules and tracking simulations from the command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 optimizer did not
//! converge, 3 numerical or other failure.

mod commands;
mod run;

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use run::{Run, EXIT_CONFIG, EXIT_OK};

#[derive(Parser)]
#[command(name = "slewplan", version, about = "Attitude trajectory optimization for reaction-wheel spacecraft")]
struct Cli {
    /// More log output (repeat for debug); RUST_LOG also works.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Minimum-time rest-to-rest slew.
    Slew(SlewArgs),
    /// Trajectory realizing a pointing schedule over a fixed horizon.
    Plan(PlanArgs),
    /// Slew atlas campaigns, fits and queries.
    #[command(subcommand)]
    Atlas(AtlasCmd),
    /// Ground-target pointing schedules.
    #[command(subcommand)]
    Schedule(ScheduleCmd),
    /// Simulate tracking of a reference trajectory, open or closed loop.
    Track(TrackArgs),
}

#[derive(Args)]
pub struct ConfigArgs {
    /// Satellite parameters JSON (default: built-in reference satellite).
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// SCP settings JSON; absent keys keep the command's defaults.
    #[arg(long, value_name = "FILE")]
    pub scp: Option<PathBuf>,
    /// Override one SCP setting, e.g. `--set K=40`; applied after --scp, last wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args)]
pub struct OutArgs {
    /// Output directory; created if missing.
    #[arg(long, value_name = "DIR", default_value = "slewplan-out")]
    pub out: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target").required(true).args(["angle_deg", "to_quat"])))]
pub struct SlewArgs {
    /// Body rotation axis: x, y, z or three comma-separated components.
    #[arg(long, default_value = "x", allow_hyphen_values = true)]
    pub axis: String,
    /// Rotation angle about --axis, degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub angle_deg: Option<f64>,
    /// Final attitude q1,q2,q3,q4 (scalar last).
    #[arg(long, allow_hyphen_values = true)]
    pub to_quat: Option<String>,
    /// Initial attitude q1,q2,q3,q4 (default identity).
    #[arg(long, allow_hyphen_values = true)]
    pub from_quat: Option<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct PlanArgs {
    /// Pointing schedule JSON: {sample_s, entries[{t_s, q, w, target_id}]}.
    #[arg(long, value_name = "FILE")]
    pub schedule: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Subcommand)]
pub enum AtlasCmd {
    /// Solve every axis-angle instance of a grid.
    Build(AtlasBuildArgs),
    /// Add per-axis time and energy fits to an atlas.
    Fit(AtlasFitArgs),
    /// Estimate slew time and energy between two attitudes.
    Query(AtlasQueryArgs),
}

#[derive(Args)]
pub struct AtlasBuildArgs {
    /// Number of equidistributed axes, or a `;`-separated list of axes (x, y, z or a,b,c).
    #[arg(long, default_value = "100")]
    pub axes: String,
    /// Comma-separated angles in degrees (default: ±1…10 by 1, ±15…180 by 5).
    #[arg(long, allow_hyphen_values = true)]
    pub angles: Option<String>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct AtlasFitArgs {
    /// Atlas JSON written by `atlas build`.
    #[arg(long, value_name = "FILE")]
    pub atlas: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target").required(true).args(["angle_deg", "to_quat"])))]
pub struct AtlasQueryArgs {
    #[arg(long, value_name = "FILE")]
    pub atlas: PathBuf,
    /// Initial attitude q1,q2,q3,q4 (default identity).
    #[arg(long, allow_hyphen_values = true)]
    pub from_quat: Option<String>,
    /// Final attitude q1,q2,q3,q4.
    #[arg(long, allow_hyphen_values = true)]
    pub to_quat: Option<String>,
    /// Body rotation axis used with --angle-deg.
    #[arg(long, default_value = "x", allow_hyphen_values = true)]
    pub axis: String,
    #[arg(long, allow_hyphen_values = true)]
    pub angle_deg: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Subcommand)]
pub enum ScheduleCmd {
    /// Region-by-region sweep over accessible targets.
    Build(ScheduleBuildArgs),
}

#[derive(Args)]
pub struct ScheduleBuildArgs {
    /// Targets CSV with columns id,lat_deg,lon_deg,region.
    #[arg(long, value_name = "FILE", required_unless_present = "desk")]
    pub targets: Option<PathBuf>,
    /// Circular orbit JSON: {altitude_km, inclination_deg, raan_deg, arg_lat_deg, epoch_s}.
    #[arg(long, value_name = "FILE", required_unless_present = "desk")]
    pub orbit: Option<PathBuf>,
    /// Use the built-in two-region desk scenario instead of --targets/--orbit.
    #[arg(long, conflicts_with_all = ["targets", "orbit"])]
    pub desk: bool,
    /// Largest off-nadir angle for access, degrees.
    #[arg(long)]
    pub max_off_nadir: Option<f64>,
    /// Schedule sample time, s.
    #[arg(long)]
    pub sample_s: Option<f64>,
    /// Search horizon, s.
    #[arg(long)]
    pub horizon_s: Option<f64>,
    /// Factor applied to slew times before rounding to whole samples.
    #[arg(long)]
    pub slew_margin: Option<f64>,
    #[arg(long)]
    pub max_observations: Option<usize>,
    /// Slew-time model from a fitted atlas (default: principal-axis bang-bang bound).
    #[arg(long, value_name = "FILE")]
    pub atlas: Option<PathBuf>,
    /// Satellite parameters JSON for the default slew-time model.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    #[value(alias = "closed-loop")]
    Cl,
    #[value(alias = "open-loop")]
    Ol,
}

#[derive(Args)]
pub struct TrackArgs {
    /// Reference: `solution.json` from slew/plan, or a trajectory CSV sampled at the nodes.
    #[arg(long, value_name = "FILE")]
    pub traj: PathBuf,
    /// True inertia as a JSON 3×3 row-major array (default: the nominal inertia).
    #[arg(long, value_name = "FILE")]
    pub perturb_inertia: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cl")]
    pub mode: ModeArg,
    /// Observation spec (`spec.json` from plan); errors are measured and weighted at its nodes
    /// instead of at every node.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Satellite parameters JSON of the nominal model.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let (name, out) = match &cli.cmd {
        Cmd::Slew(a) => ("slew", &a.out.out),
        Cmd::Plan(a) => ("plan", &a.out.out),
        Cmd::Atlas(AtlasCmd::Build(a)) => ("atlas build", &a.out.out),
        Cmd::Atlas(AtlasCmd::Fit(a)) => ("atlas fit", &a.out.out),
        Cmd::Atlas(AtlasCmd::Query(a)) => ("atlas query", &a.out.out),
        Cmd::Schedule(ScheduleCmd::Build(a)) => ("schedule build", &a.out.out),
        Cmd::Track(a) => ("track", &a.out.out),
    };
    let mut run = Run::new(name, out);
    let outcome = match &cli.cmd {
        Cmd::Slew(a) => commands::slew(&mut run, a),
        Cmd::Plan(a) => commands::plan(&mut run, a),
        Cmd::Atlas(AtlasCmd::Build(a)) => commands::atlas_build(&mut run, a),
        Cmd::Atlas(AtlasCmd::Fit(a)) => commands::atlas_fit(&mut run, a),
        Cmd::Atlas(AtlasCmd::Query(a)) => commands::atlas_query(&mut run, a),
        Cmd::Schedule(ScheduleCmd::Build(a)) => commands::schedule_build(&mut run, a),
        Cmd::Track(a) => commands::track(&mut run, a),
    };
    if let Err(e) = &outcome {
        eprintln!("error: {}", e.message);
    }
    let code = run.finish(std::env::args().skip(1).collect(), &outcome);
    std::process::exit(code);
}
