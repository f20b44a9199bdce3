use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use paritysim::calibration::{Prepared, CONFIG_ENV};
use paritysim::sequencer::{Engine, Mode};

#[derive(Debug, Parser)]
#[command(name = "paritysim", version, about = "Simulate repeated parity measurements on a three-spin register")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure p1, p2, p3 on a mixed state and report the eight GHZ branches.
    Ghz(Common),
    /// Measure p1..p4 in one sequence and report the product of outcomes.
    SingleShot(Common),
    /// Evaluate the five contexts of the noncontextuality inequality.
    Nci(Common),
    /// Compare GHZ dephasing with and without interleaved parity measurements.
    Zeno(ZenoArgs),
    /// Fit the readout model to repeated-readout records.
    Calibrate(CalibrateArgs),
    /// Enumerate deterministic assignments for the classical bound.
    NchvBound(Common),
    /// Check a config file and print the parameters it resolves to.
    ValidateConfig(Common),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Noise config (TOML). Falls back to $ZP_CONFIG, then built-in defaults.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = EngineArg::Exact)]
    pub engine: EngineArg,
    /// Sample count; required by the sampled engine. With the exact engine it
    /// sets the sample size behind projected standard errors.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ZenoArgs {
    #[command(flatten)]
    pub common: Common,
    /// Measurement counts to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8])]
    pub measurements: Vec<usize>,
    #[arg(long, default_value_t = paritysim::experiments::DEFAULT_ZENO_TIME_MS)]
    pub time_ms: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Records CSV (r1,r2,r3,prepared). Without it, records are simulated
    /// from the config.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Preparation for simulated records: 0, 1 or mixed.
    #[arg(long, default_value = "mixed")]
    pub prepared: Prepared,
    /// Also write the simulated records to this CSV.
    #[arg(long)]
    pub save_records: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Exact,
    Sampled,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Exact => Engine::Exact,
            EngineArg::Sampled => Engine::Sampled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Branched,
    Echoed,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Branched => Mode::Branched,
            ModeArg::Echoed => Mode::Echoed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}
