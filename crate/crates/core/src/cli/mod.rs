//! Command-line front end: argument parsing, dispatch, and run reports.

mod commands;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{load_config, ConfigError};
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "relayflow", version, about = "Simulate and analyse cyclic relays of flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// System description (JSON).
    #[arg(value_name = "CONFIG")]
    pub config_pos: Option<PathBuf>,
    #[arg(long = "config", value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the report and data files.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Level vector "v0,v1,...,vp".
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the hypotheses on sampled points.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long, default_value_t = 16)]
        grid: usize,
    },
    /// Run the relay from a point.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, default_value_t = 1)]
        k0: usize,
        /// first | nth:N | random
        #[arg(long, default_value = "first")]
        policy: String,
        #[arg(long, default_value_t = 10)]
        max_switches: usize,
        #[arg(long)]
        t_max: Option<f64>,
        /// Trajectory sampling step (default: smallest T / 200).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Crossings of one boundary by one flow.
    Crossings {
        #[command(flatten)]
        common: Common,
        /// Flow index in 1..=p.
        #[arg(long)]
        flow: usize,
        /// Region index in 0..=p; p watches f_0 at lambda_p.
        #[arg(long)]
        region: usize,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long)]
        window: f64,
        #[arg(long)]
        backward: bool,
    },
    /// Search for p-periodic switching vectors.
    FindPeriodic {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 32)]
        seeds: usize,
        /// Find orbits at this level vector first, then continue to --lambda.
        #[arg(long, allow_hyphen_values = true)]
        continue_from: Option<String>,
        /// Time windows are (0, factor * T_i).
        #[arg(long, default_value_t = 1.0)]
        window_factor: f64,
    },
    /// Parities of the crossing trees over random boundary points.
    DegreeCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Point cloud of the accessible set.
    Accessible {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, default_value_t = 1)]
        k0: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 64)]
        breadth: usize,
        /// Only keep arcs after this many switches (omega-limit estimate).
        #[arg(long)]
        discard: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Simulate { .. } => "simulate",
            Command::Crossings { .. } => "crossings",
            Command::FindPeriodic { .. } => "find-periodic",
            Command::DegreeCheck { .. } => "degree-check",
            Command::Accessible { .. } => "accessible",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Validate { common, .. }
            | Command::Simulate { common, .. }
            | Command::Crossings { common, .. }
            | Command::FindPeriodic { common, .. }
            | Command::DegreeCheck { common, .. }
            | Command::Accessible { common, .. } => common,
        }
    }
}

/// Summary written once per run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub outcome: String,
    pub exit_code: i32,
    pub metrics: Value,
    pub artifacts: Vec<String>,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub(crate) struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) | Error::StartOnBoundary(_) => EXIT_USAGE,
            _ => EXIT_NUMERIC,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: format!("config error at {e}"),
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

/// What a command produced: outcome label, exit code, metrics and files.
pub(crate) struct Outcome {
    pub label: String,
    pub code: i32,
    pub metrics: Value,
    pub files: Vec<(String, Vec<u8>)>,
}

/// Parses `args` (including the program name), runs the command, writes the
/// report and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let common = cli.command.common().clone();
    let mut report = RunReport {
        command: cli.command.name().to_string(),
        config_hash: String::new(),
        seed: common.seed,
        outcome: String::new(),
        exit_code: EXIT_OK,
        metrics: Value::Object(Default::default()),
        artifacts: Vec::new(),
    };
    let result = (|| -> Result<Outcome, Failure> {
        let path = common
            .config
            .clone()
            .or(common.config_pos.clone())
            .ok_or_else(|| usage("a config file is required"))?;
        let loaded = load_config(&path)?;
        report.config_hash = hex::encode(Sha256::digest(&loaded.raw));
        commands::dispatch(&cli.command, &loaded.system)
    })();
    let files = match result {
        Ok(out) => {
            report.outcome = out.label;
            report.exit_code = out.code;
            report.metrics = out.metrics;
            out.files
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            report.outcome = format!("error: {}", f.message);
            report.exit_code = f.code;
            Vec::new()
        }
    };
    if let Some(dir) = &common.out {
        if let Err(e) = output::write_all(dir, &files, &mut report) {
            eprintln!("error: cannot write output files: {e}");
            report.exit_code = EXIT_USAGE;
        }
    } else {
        report.artifacts = Vec::new();
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    report.exit_code
}
