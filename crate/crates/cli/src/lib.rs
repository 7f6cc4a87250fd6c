//! Command-line driver: parses an experiment config, runs one command and
//! writes a schema-versioned JSON report (and a CSV for `decay`).

pub mod commands;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use clap::Parser;
use thiserror::Error;

pub use config::{Command, ExperimentConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIZE_CAP: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "thermoclust",
    version,
    about = "Cluster-expansion checks and thermal correlation sweeps"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel sums.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] thermoclust::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use thermoclust::Error as E;
        match self {
            CliError::Core(E::SizeCap { .. }) => EXIT_SIZE_CAP,
            CliError::Core(
                E::OutsideModelClass { .. }
                | E::GapViolation { .. }
                | E::NotHermitian { .. }
                | E::NotNormalized { .. }
                | E::Eigensolver,
            ) => EXIT_CHECK_FAILED,
            _ => EXIT_CONFIG,
        }
    }
}

pub const CSV_HEADER: [&str; 4] = ["beta", "distance", "abs_cov", "ln_abs_cov"];

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn csv_bytes(rows: &[[String; 4]]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Csv(e.into_error().into()))
}

/// Runs one command; returns the report on success.
pub fn execute(cli: &Cli) -> Result<report::Report, CliError> {
    let config = ExperimentConfig::load(&cli.config)?;
    if let Some(c) = config.command {
        if c != cli.command {
            return Err(CliError::Config(format!(
                "config is for {:?} but {:?} was requested",
                c.name(),
                cli.command.name()
            )));
        }
    }
    let outcome = match cli.command {
        Command::Verify => commands::verify(&config)?,
        Command::Decay => commands::decay(&config)?,
        Command::Count => commands::count(&config)?,
        Command::Ising => commands::ising(&config)?,
        Command::Certify => commands::certify(&config)?,
    };
    let out = cli.out.clone().or(config.output_dir.clone());
    match &out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.clone(),
                source,
            })?;
            let name = cli.command.name();
            write(
                &dir.join(format!("{name}.json")),
                outcome.report.to_json().as_bytes(),
            )?;
            if let Some(rows) = &outcome.csv {
                write(&dir.join(format!("{name}.csv")), &csv_bytes(rows)?)?;
            }
        }
        None => print!("{}", outcome.report.to_json()),
    }
    Ok(outcome.report)
}

/// Full CLI behaviour, returning the process exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_CONFIG;
        }
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match execute(cli) {
        Ok(report) => {
            eprint!("{}", report.summary());
            if report.pass {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
