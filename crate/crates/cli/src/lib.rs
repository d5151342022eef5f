//! Command-line workflow: generate a dataset, train an ensemble bundle,
//! evaluate, ablate, explain, and ingest recorded provider outputs.

pub mod commands;
pub mod config;
pub mod recorded;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use entri_core::{Error, Result};

/// Module name used in error messages raised here.
pub const CLI: &str = "pipeline-cli";
pub const THREADS_ENV: &str = "ENTRI_THREADS";
pub const LOCK_FILE: &str = ".entri.lock";

#[derive(Debug, Parser)]
#[command(name = "entri", version, about = "Multi-level scene classifier with explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset to the configured path.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train discriminators and the meta classifier; write a bundle.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Bundle directory; defaults to `output_dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top@k and confusion matrix of a bundle on one split.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Re-stack the meta classifier for all seven level subsets.
    Ablate {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Explain the predictions for the given scene ids.
    Explain {
        #[arg(long)]
        bundle: PathBuf,
        /// Comma-separated scene ids.
        #[arg(long, value_delimiter = ',', required = true)]
        scenes: Vec<u32>,
        /// Defaults to `<bundle>/explanations`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attach recorded provider outputs to the bundle's dataset.
    Ingest {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        recorded: PathBuf,
        /// Defaults to `<bundle>/ingested_dataset`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Thread cap from `ENTRI_THREADS`; `None` when unset.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(CLI, format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
    }
}

/// Runs one command, writing the human-readable report to `out`.
pub fn run(cli: Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(CLI, format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cli.command, out))
}

/// Advisory lock on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &std::path::Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::data(
                CLI,
                format!("{} exists: another command is using this directory (remove it if stale)", path.display()),
            )),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
