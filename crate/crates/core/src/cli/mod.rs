//! Command-line front end: config loading, dispatch and persistence.
//!
//! Exit codes: 0 when every check passes, 1 when a hard check fails or an
//! ensemble row is flagged, 2 on configuration or I/O errors.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};

pub use commands::{cmd_ensemble, cmd_simulate, cmd_sweep, ensemble_rows, sweep_rows, sweep_tables};
pub use config::ExperimentConfig;
pub use output::ResultRow;
pub use verify::{verify_driving, verify_oracles, verify_walk, CheckLine, Which};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "growthlab", version, about = "Simulate and verify growing random surfaces")]
pub struct Cli {
    /// Flat TOML config; GROWTHLAB_<KEY> environment variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for ensembles.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Only errors are printed.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump probe heights of one realization at every time step.
    Simulate,
    /// Estimate fluctuation quantities over an ensemble and check the bounds.
    Ensemble,
    /// Run the self-checks.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        which: Which,
    },
    /// Tabulate normalized fluctuations across `t_list` with slope fits.
    Sweep,
    #[command(name = "verify-walk", hide = true)]
    VerifyWalk,
    #[command(name = "verify-oracles", hide = true)]
    VerifyOracles,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Verify { .. } | Command::VerifyWalk | Command::VerifyOracles => "verify",
            Command::Sweep => "sweep",
        }
    }
}

/// What a command produced: files to persist (name, bytes) and a summary.
#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
}

pub fn cmd_verify(cfg: &ExperimentConfig, which: Which) -> Result<Outcome> {
    let mut lines = Vec::new();
    let mut files = Vec::new();
    if matches!(which, Which::Driving | Which::All) {
        lines.extend(verify_driving(cfg)?);
    }
    if matches!(which, Which::Walk | Which::All) {
        let (walk_lines, rows) = verify_walk(cfg)?;
        lines.extend(walk_lines);
        files.push(("walk.csv".to_string(), verify::encode_walk_rows(&rows, cfg.d)?));
    }
    if matches!(which, Which::Oracles | Which::All) {
        lines.extend(verify_oracles(cfg)?);
    }
    files.insert(0, ("verify.csv".to_string(), verify::encode_report(&lines)?));
    let summary = lines
        .iter()
        .map(|l| {
            format!(
                "{} {} (margin {:e}; {})",
                if l.passed { "PASS" } else { "FAIL" },
                l.check,
                l.worst_margin,
                l.detail
            )
        })
        .collect();
    Ok(Outcome {
        passed: lines.iter().all(|l| l.passed),
        files,
        summary,
    })
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(p) = cli.parallelism {
        cfg.parallelism = p;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool> {
    let cfg = resolve_config(cli)?;
    let start = Instant::now();
    let outcome = match &cli.command {
        Command::Simulate => cmd_simulate(&cfg)?,
        Command::Ensemble => cmd_ensemble(&cfg)?,
        Command::Sweep => cmd_sweep(&cfg)?,
        Command::Verify { which } => cmd_verify(&cfg, *which)?,
        Command::VerifyWalk => cmd_verify(&cfg, Which::Walk)?,
        Command::VerifyOracles => cmd_verify(&cfg, Which::Oracles)?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    let names: Vec<String> = outcome.files.iter().map(|(n, _)| n.clone()).collect();
    for (name, bytes) in &outcome.files {
        output::write_atomic(&cfg.out_dir.join(name), bytes)?;
    }
    if let Some((first, _)) = outcome.files.first() {
        let meta = output::Metadata {
            command: cli.command.name(),
            version: env!("CARGO_PKG_VERSION"),
            git_hash: output::git_hash(),
            wall_clock_seconds: elapsed,
            config: &cfg,
            outputs: names.clone(),
        };
        output::write_sidecar(&cfg.out_dir.join(first), &meta)?;
    }
    if !cli.quiet {
        for line in &outcome.summary {
            println!("{line}");
        }
        println!(
            "wrote {} to {} in {elapsed:.2} s",
            names.join(", "),
            cfg.out_dir.display()
        );
    }
    Ok(outcome.passed)
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::ConstraintViolation { .. } => EXIT_FAILED,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
