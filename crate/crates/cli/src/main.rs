//! `rdgauge`: plan and run encoder benchmarks, then analyze the results.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rdgauge_core::orchestrator::{ExecError, PlanError};
use rdgauge_core::scenario::{BdMethod, ScenarioError};

#[derive(Parser, Debug)]
#[command(name = "rdgauge", version, about = "Codec benchmark planning, execution and rate-distortion analysis")]
pub struct Cli {
    /// Results store (JSON lines).
    #[arg(long, global = true, env = "RDGAUGE_STORE", default_value = "rdgauge-results.jsonl")]
    store: PathBuf,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// BD-Rate aggregation across clips.
    #[arg(long, global = true, value_enum, default_value_t = Method::Classic)]
    method: Method,
    /// Target bitrates in kb/s, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    ladder: Option<Vec<u32>>,
    /// VMAF coverage threshold (strictly greater than).
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Encode-time budget in hours for budgeted scenarios.
    #[arg(long, global = true)]
    budget_hours: Option<f64>,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Method {
    Classic,
    Smart,
}

impl From<Method> for BdMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Classic => BdMethod::Classic,
            Method::Smart => BdMethod::Smart,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Metric {
    Vmaf,
    PsnrY,
}

#[derive(Args, Debug, Clone)]
pub struct PlanArgs {
    /// Y4M clips or directories containing them.
    #[arg(long, num_args = 1.., required = true)]
    clips: Vec<PathBuf>,
    /// Encoder families, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    families: Vec<String>,
    /// Presets to run instead of each family's full list.
    #[arg(long, value_delimiter = ',')]
    presets: Vec<String>,
    /// Pass modes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    passes: Vec<u8>,
    /// File with one coding-tool toggle per line; plans a tool sweep of the
    /// first clip instead of the matrix.
    #[arg(long)]
    toolsweep: Option<PathBuf>,
    #[arg(long, default_value_t = 131)]
    keyint: u32,
    #[arg(long, default_value_t = 1.2)]
    maxrate_factor: f64,
    #[arg(long, default_value_t = 2.0)]
    bufsize_factor: f64,
    #[arg(long, default_value_t = 1)]
    threads: u32,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Directory holding ffmpeg and SvtAv1EncApp (default: PATH lookup).
    #[arg(long, env = "RDGAUGE_BIN_DIR")]
    binary_dir: Option<PathBuf>,
    /// Concurrent encodes.
    #[arg(long)]
    jobs: Option<usize>,
    /// One encode at a time, for comparable timings.
    #[arg(long)]
    timing_strict: bool,
    /// Re-run jobs already in the store.
    #[arg(long)]
    force: bool,
    /// Scratch directory for encodes and logs.
    #[arg(long, env = "RDGAUGE_WORK_DIR", default_value = "rdgauge-work")]
    work_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ScenarioArgs {
    /// S1, S2, S3 or all.
    #[arg(long, default_value = "all")]
    scenario: String,
    /// Read summaries from this CSV instead of summarizing the store.
    #[arg(long)]
    summaries: Option<PathBuf>,
    /// S2 coverage slack in percentage points.
    #[arg(long)]
    slack: Option<f64>,
    /// Coverage checkpoint bitrate in kb/s.
    #[arg(long)]
    checkpoint: Option<u32>,
    /// Overshoot threshold as a fraction of the target.
    #[arg(long)]
    overshoot: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Print the job matrix (or tool sweep) as CSV, optionally with commands.
    Plan {
        #[command(flatten)]
        plan: PlanArgs,
        /// Print the command lines of every job instead of the CSV.
        #[arg(long)]
        commands: bool,
        /// Scratch directory used in printed command lines.
        #[arg(long, env = "RDGAUGE_WORK_DIR", default_value = "rdgauge-work")]
        work_dir: PathBuf,
    },
    /// Run the plan: encode, measure VMAF, append to the store.
    Encode {
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Measure VMAF and PSNR-Y of one encode against its source.
    Vmaf {
        #[arg(long)]
        distorted: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, env = "RDGAUGE_BIN_DIR")]
        binary_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: u32,
    },
    /// Spatial/temporal complexity of Y4M clips, as CSV.
    Complexity {
        #[arg(required = true)]
        clips: Vec<PathBuf>,
    },
    /// Import an externally produced results table into the store.
    Import {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        clip: String,
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 1)]
        passes: u8,
        /// Target bitrate for rows without a tbr_kbps column.
        #[arg(long)]
        target: u32,
        #[arg(long, default_value = "imported")]
        tool_version: String,
    },
    /// RD curves from the store: per clip (classic) or aggregate (smart).
    Curves {
        #[arg(long, value_enum, default_value_t = Metric::Vmaf)]
        metric: Metric,
    },
    /// BD-Rate between two configurations (family:preset:passes).
    Bdrate {
        #[arg(long)]
        anchor: String,
        #[arg(long)]
        test: String,
        #[arg(long, value_enum, default_value_t = Metric::Vmaf)]
        metric: Metric,
    },
    /// BD-Rate and encode-time comparison grids.
    Grid {
        /// Configurations (family:preset:passes); default every one in the store.
        #[arg(long, value_delimiter = ',')]
        configs: Vec<String>,
        #[arg(long, value_enum, default_value_t = Metric::Vmaf)]
        metric: Metric,
    },
    /// Scenario gating and per-family preset selection.
    Scenario {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Run all scenarios and write CSV, SVG and text reports to --out.
    Report {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = Metric::Vmaf)]
        metric: Metric,
    },
}

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Usage = 1,
    Data = 2,
    Environment = 3,
}

fn classify(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ExecError>() {
            return match e {
                ExecError::Environment(_) => Failure::Environment,
                ExecError::Plan(_) => Failure::Usage,
                _ => Failure::Data,
            };
        }
        if cause.downcast_ref::<PlanError>().is_some() || cause.downcast_ref::<commands::UsageError>().is_some() {
            return Failure::Usage;
        }
        if let Some(ScenarioError::Invalid(_)) = cause.downcast_ref::<ScenarioError>() {
            return Failure::Usage;
        }
    }
    Failure::Data
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::Usage as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e) as u8)
        }
    }
}
