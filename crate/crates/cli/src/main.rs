mod bench;
mod config;
mod keygen;
mod output;
mod reports;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use triad::bfv::KeyMode;
use triad::ring::Preset;

use config::{RunConfig, CONFIG_ENV};

#[derive(Parser, Debug)]
#[command(name = "triad", version, about = "Three-party private CNN inference")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print structured JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate client keys and report the key footprint of both key modes.
    Keygen(KeygenArgs),
    /// Run all three roles in one process.
    Sim(SimArgs),
    /// Run one role over TCP.
    Role(RoleArgs),
    /// Operation counts, bytes and wall time of the building blocks.
    Bench(BenchArgs),
    /// Analytic and measured noise per linear layer.
    NoiseReport(NoiseArgs),
    /// Garbled-circuit sizes of the mod-t and truncated activations.
    GcStats(GcStatsArgs),
    /// Write a model with random weights.
    GenModel(GenModelArgs),
}

#[derive(Args, Debug)]
struct KeygenArgs {
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    key_mode: Option<KeyMode>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Size keys for this model's rotations and noise; without it every row
    /// rotation is covered and bases are chosen for a single 3x3 convolution.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Images as a tensor file (shape header plus little-endian values).
    #[arg(long, conflicts_with = "random")]
    input: Option<PathBuf>,
    /// Use this many random admissible images instead.
    #[arg(long)]
    random: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
struct FaultArgs {
    #[arg(long, hide = true)]
    tamper_gc: bool,
    #[arg(long, hide = true)]
    exhaust_noise: bool,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Compare every result with the plaintext reference.
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    faults: FaultArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum RoleName {
    Client,
    Cloud,
    Proxy,
}

#[derive(Args, Debug)]
struct RoleArgs {
    #[arg(value_enum)]
    role: RoleName,
    /// The client and proxy only read the public part (shapes and bounds).
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Address to listen on; defaults to this role's endpoint.
    #[arg(long)]
    listen: Option<std::net::SocketAddr>,
    #[arg(long)]
    client: Option<std::net::SocketAddr>,
    #[arg(long)]
    cloud: Option<std::net::SocketAddr>,
    #[arg(long)]
    proxy: Option<std::net::SocketAddr>,
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    faults: FaultArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Suite {
    Conv,
    Gc,
    Sim,
    All,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    /// Model for the sim suite; the tiny model is generated otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[arg(long)]
    model: PathBuf,
    /// Encryptions measured per layer.
    #[arg(long, default_value_t = 8)]
    trials: usize,
}

#[derive(Args, Debug)]
struct GcStatsArgs {
    /// Truncated share width; defaults to the plaintext width minus `f`.
    #[arg(long)]
    b: Option<u32>,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PlanName {
    Tiny,
    Deep,
    Burden2,
    Burden4,
}

#[derive(Args, Debug)]
struct GenModelArgs {
    #[arg(long, value_enum, default_value = "tiny", conflicts_with = "plan_file")]
    plan: PlanName,
    /// A model plan as JSON.
    #[arg(long)]
    plan_file: Option<PathBuf>,
    /// Probability that a weight is zero.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
    /// Also write random admissible images to this tensor file.
    #[arg(long, requires = "count")]
    inputs: Option<PathBuf>,
    /// Number of images written to `--inputs`.
    #[arg(long)]
    count: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> triad::Result<()> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = output::Output { json: cli.json };
    match &cli.command {
        Command::Keygen(a) => keygen::run(&cfg, a, out),
        Command::Sim(a) => run::sim(&cfg, a, out),
        Command::Role(a) => run::role(&cfg, a, out),
        Command::Bench(a) => bench::run(&cfg, a, out),
        Command::NoiseReport(a) => reports::noise(&cfg, a, out),
        Command::GcStats(a) => reports::gc_stats(&cfg, a, out),
        Command::GenModel(a) => reports::gen_model(&cfg, a, out),
    }
}
