//! Command-line front end: plan reservations, run scenarios and sweeps,
//! estimate `k` from a demand trace, and run the acceptance checks.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deltafair::reservation::Composition;
use deltafair::scenario::ScenarioOverrides;
use deltafair::units::{parse_duration, parse_rate, Delay};

/// Output directory when neither `--out` nor this variable is set: `./out`.
pub const OUT_ENV: &str = "DELTAFAIR_OUT";

#[derive(Parser)]
#[command(
    name = "deltafair",
    version,
    about = "Delay-bounded fair sharing of write buffers and read caches"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print per-client reservations and totals for a scenario.
    Plan {
        scenario: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// Simulate a scenario and write metrics files.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        over: Overrides,
        /// Issue ramp bursts' reads and writes one after another or together.
        #[arg(long)]
        mode: Option<Mode>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run a scenario once per parameter value (or per pair of values).
    Sweep {
        scenario: PathBuf,
        #[command(flatten)]
        over: Overrides,
        /// delta_buffer, delta_cache or k.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 0ms,250ms,inf.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Optional second axis; every combination is run.
        #[arg(long, requires = "values2")]
        param2: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values2: Vec<String>,
        #[arg(long)]
        mode: Option<Mode>,
        /// Compute reservation columns only, without simulating.
        #[arg(long)]
        plan_only: bool,
        /// Scenario runs executed in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Detect ramp-ups in a demand trace and report the threshold k.
    EstimateK {
        trace: PathBuf,
        /// Sliding window length.
        #[arg(long, default_value = "600s", value_parser = parse_ns)]
        window: u64,
        /// A ramp starts below this fraction of the fair demand.
        #[arg(long, default_value_t = deltafair::trace::DEFAULT_RAMP_FLOOR)]
        ramp_floor: f64,
        /// Fair demand per client; defaults to half of each client's peak.
        #[arg(long, value_parser = parse_bps)]
        share: Option<u64>,
    },
    /// Run the acceptance checks and print one line per criterion.
    SelfTest {
        /// Only these criteria, comma-separated.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, value_parser = parse_delay)]
    delta_buffer: Option<Delay>,
    #[arg(long, value_parser = parse_delay)]
    delta_cache: Option<Delay>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_ns)]
    duration: Option<u64>,
}

impl Overrides {
    fn to_core(&self) -> ScenarioOverrides {
        ScenarioOverrides {
            delta_buffer: self.delta_buffer,
            delta_cache: self.delta_cache,
            k: self.k,
            seed: self.seed,
            duration: self.duration,
        }
    }
}

#[derive(Args)]
struct OutDir {
    /// Output directory; overrides $DELTAFAIR_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutDir {
    fn resolve(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sequential,
    Parallel,
}

impl From<Mode> for Composition {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Sequential => Composition::Sequential,
            Mode::Parallel => Composition::Parallel,
        }
    }
}

fn parse_delay(s: &str) -> Result<Delay, String> {
    s.parse().map_err(|e: deltafair::Error| e.to_string())
}

fn parse_ns(s: &str) -> Result<u64, String> {
    parse_duration(s).map_err(|e| e.to_string())
}

fn parse_bps(s: &str) -> Result<u64, String> {
    parse_rate(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Plan { scenario, over } => commands::plan(&scenario, &over.to_core()),
        Cmd::Run {
            scenario,
            over,
            mode,
            out,
        } => commands::run(
            &scenario,
            &over.to_core(),
            mode.map(Into::into),
            &out.resolve(),
        ),
        Cmd::Sweep {
            scenario,
            over,
            param,
            values,
            param2,
            values2,
            mode,
            plan_only,
            jobs,
            out,
        } => commands::sweep(commands::SweepArgs {
            scenario: &scenario,
            over: &over.to_core(),
            axes: std::iter::once((param, values))
                .chain(param2.map(|p| (p, values2)))
                .collect(),
            mode: mode.map(Into::into),
            plan_only,
            jobs,
            out: &out.resolve(),
        }),
        Cmd::EstimateK {
            trace,
            window,
            ramp_floor,
            share,
        } => commands::estimate_k(&trace, window, ramp_floor, share),
        Cmd::SelfTest { only } => commands::self_test(&only),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
