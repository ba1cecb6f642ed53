//! Command-line runner: configuration, orchestration and artifacts.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use anosov_core::LabError;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Lab(#[from] LabError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "anosov-lab", version, about = "Checks for adapted norms and bi-contact structures of Anosov flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the strong-adaptation predicates on the configured assemblies.
    VerifyStrad(Common),
    /// Synchronize the unstable norm over the window grid.
    Synchronize(Common),
    /// Blend identities and convexity probes.
    Convexity(Common),
    /// Positivity of the Liouville pencil.
    Liouville(Common),
    /// Aggregate the manifests in the output directory.
    Report(Common),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.samples {
            cfg.samples = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Run one command and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (common, name) = match &cli.command {
        Command::VerifyStrad(c) => (c, "verify-strad"),
        Command::Synchronize(c) => (c, "synchronize"),
        Command::Convexity(c) => (c, "convexity"),
        Command::Liouville(c) => (c, "liouville"),
        Command::Report(c) => (c, "report"),
    };
    let cfg = match common.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Some(j) = common.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be positive");
            return 2;
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let result = match cli.command {
        Command::VerifyStrad(_) => commands::verify_strad(&cfg),
        Command::Synchronize(_) => commands::synchronize(&cfg),
        Command::Convexity(_) => commands::convexity(&cfg),
        Command::Liouville(_) => commands::liouville(&cfg),
        Command::Report(_) => {
            return match commands::report(&cfg) {
                Ok(s) => {
                    for sec in &s.sections {
                        println!("{} {}", if sec.pass { "PASS" } else { "FAIL" }, sec.command);
                    }
                    for f in &s.failing_checks {
                        println!("  failing: {f}");
                    }
                    if s.passed() {
                        0
                    } else {
                        1
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    };
    match result {
        Ok(m) => {
            for c in &m.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.detail);
            }
            for w in &m.warnings {
                println!("warning: {w}");
            }
            println!("{name}: artifacts in {}", cfg.output_dir.join(name).display());
            if m.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
