use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;
mod params;
mod reproduce;

use output::{CliError, Context, Sink};
use params::ParamArgs;

#[derive(Parser, Debug)]
#[command(name = "expou", version, about = "Exponential Ornstein-Uhlenbeck stochastic volatility toolkit")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "EXPOU_THREADS")]
    threads: Option<usize>,
    /// Output file; stdout when neither this nor --out-dir is given.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory receiving the artifact under its default name.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo paths, X (and optionally the hidden state) at checkpoints.
    Simulate(SimulateArgs),
    /// Cumulants with confidence intervals of one CSV column.
    Stats(StatsArgs),
    /// Closed-form cumulants at one or more horizons.
    Cumulants(CumulantsArgs),
    /// Edgeworth density with its negativity diagnostic.
    Edgeworth(EdgeworthArgs),
    /// Exact characteristic function of the linearised model.
    Cf(CfArgs),
    /// Density by inversion of the characteristic function.
    Density(DensityArgs),
    /// Fit the model to a `date,close` price series.
    Calibrate(CalibrateArgs),
    /// Regenerate the reference tables and figure data.
    #[command(subcommand)]
    Reproduce(ReproduceCommand),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Horizon t − t0.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "exponential")]
    dynamics: expou::mc::Dynamics,
    /// Checkpoint times (comma separated); defaults to the horizon.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<f64>,
    /// Also record the hidden volatility state.
    #[arg(long)]
    hidden: bool,
    /// Start the hidden state from its stationary law.
    #[arg(long)]
    stationary: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CiArg {
    Auto,
    Delta,
    Bootstrap,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// CSV file with a header row; `#` lines are skipped.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "x")]
    column: String,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, value_enum, default_value = "auto")]
    ci: CiArg,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 0x5eed_b007)]
    seed: u64,
    /// Also write a Freedman–Diaconis histogram to this file.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CumulantsArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Horizons t − t0 (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "1")]
    t: Vec<f64>,
}

#[derive(Args, Debug)]
struct EdgeworthArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Grid half-width in standard deviations around k1.
    #[arg(long, default_value_t = 6.0)]
    width: f64,
    #[arg(long, default_value_t = 401)]
    points: usize,
}

#[derive(Args, Debug)]
struct CfArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 200.0)]
    phi_max: f64,
    #[arg(long, default_value_t = 2001)]
    points: usize,
    #[arg(long, value_enum, default_value = "continuous")]
    route: RouteArg,
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    /// Initial linearised volatility; defaults to y0 − γ + 1.
    #[arg(long)]
    z0: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RouteArg {
    Continuous,
    Naive,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value = "fft")]
    method: expou::inversion::Method,
    #[arg(long, default_value_t = 1e3)]
    phi_max: f64,
    /// Frequency samples (power of two).
    #[arg(long, default_value_t = 1 << 22)]
    n: usize,
    /// Output grid as `lo:hi:points`; defaults to k1 ± 8 sd, 801 points.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Keep only the contiguous support where p ≥ this value.
    #[arg(long)]
    trim: Option<f64>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// `date,close` CSV.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    options: CalibrationArgs,
}

#[derive(Args, Debug, Clone)]
struct CalibrationArgs {
    #[arg(long, default_value_t = 21)]
    window: usize,
    /// Log-normal fit range of the daily proxy as `lo:hi`.
    #[arg(long)]
    fit_range: Option<String>,
    #[arg(long, default_value_t = 100)]
    horizons: usize,
    #[arg(long, default_value = "proxy")]
    matching: expou::calibration::Matching,
    #[arg(long)]
    no_proxy_moments: bool,
    #[arg(long, default_value_t = 16)]
    replicas: usize,
    #[arg(long, default_value_t = 3)]
    bias_iterations: usize,
    /// Paths of the cumulant objective.
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 0xca11_b2a7)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum ReproduceCommand {
    /// Cumulant scaling with β: closed forms and exponential-dynamics MC.
    Table1(reproduce::Table1Args),
    /// Exponential against linear dynamics across horizons.
    Table2(reproduce::Table2Args),
    /// Calibration of a price series (synthetic when no input is given).
    Table3(reproduce::Table3Args),
    /// Inverted density against a linear-dynamics MC histogram.
    FigDensity(reproduce::FigDensityArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ctx("cli", "configure threads")?;
    }
    let sink = Sink {
        out: cli.out,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &sink),
        Command::Stats(a) => commands::stats(a, &sink),
        Command::Cumulants(a) => commands::cumulants(a, &sink),
        Command::Edgeworth(a) => commands::edgeworth(a, &sink),
        Command::Cf(a) => commands::cf(a, &sink),
        Command::Density(a) => commands::density(a, &sink),
        Command::Calibrate(a) => commands::calibrate(a, &sink),
        Command::Reproduce(r) => match r {
            ReproduceCommand::Table1(a) => reproduce::table1(a, &sink),
            ReproduceCommand::Table2(a) => reproduce::table2(a, &sink),
            ReproduceCommand::Table3(a) => reproduce::table3(a, &sink),
            ReproduceCommand::FigDensity(a) => reproduce::fig_density(a, &sink),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::FAILURE
        }
    }
}
