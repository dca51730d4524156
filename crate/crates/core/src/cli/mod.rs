//! The `shiftfuse` command-line workflows.
//!
//! Each command reads one JSON configuration, writes its outputs into a
//! staging directory and moves them into place only once everything has
//! been written.

pub mod config;
mod diagnose;
mod estimate;
mod simulate;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
pub use config::{LoadedConfig, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "SHIFTFUSE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "shiftfuse", version, about = "Trial estimates augmented with external controls")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Estimate,
    Simulate,
    Diagnose,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate arm means and the treatment effect from a CSV
    Estimate(Args),
    /// Run a Monte Carlo experiment
    Simulate(Args),
    /// Write distribution-shift summaries for a CSV
    Diagnose(Args),
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Estimate(_) => CommandKind::Estimate,
            Command::Simulate(_) => CommandKind::Simulate,
            Command::Diagnose(_) => CommandKind::Diagnose,
        }
    }

    pub fn args(&self) -> &Args {
        match self {
            Command::Estimate(a) | Command::Simulate(a) | Command::Diagnose(a) => a,
        }
    }
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Estimate => "estimate",
            CommandKind::Simulate => "simulate",
            CommandKind::Diagnose => "diagnose",
        }
    }
}

/// Recorded at the top of every output.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn header_line(&self) -> String {
        format!(
            "{} {} config_sha256={} seed={}",
            self.tool, self.version, self.config_sha256, self.seed
        )
    }
}

/// Everything a workflow needs besides its own configuration section.
pub(crate) struct Context {
    pub loaded: LoadedConfig,
    pub seed: u64,
    pub provenance: Provenance,
    pub staging: PathBuf,
}

impl Context {
    pub fn header(&self) -> Vec<String> {
        vec![self.provenance.header_line()]
    }

    pub fn create(&self, name: &str) -> Result<std::io::BufWriter<fs::File>> {
        let path = self.staging.join(name);
        let f = fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(std::io::BufWriter::new(f))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        let path = self.staging.join(name);
        fs::write(&path, s).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Worker count from `SHIFTFUSE_THREADS`; `None` means the rayon default.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

fn staging_dir(out: &Path) -> Result<PathBuf> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let dir = parent.join(format!(".{name}.staging-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    fs::create_dir(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn publish(staging: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let err = |p: &Path, e| Error::io(p.display().to_string(), e);
    let mut names: Vec<_> = fs::read_dir(staging)
        .map_err(|e| err(staging, e))?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| err(staging, e))?;
    names.sort();
    if !out.exists() {
        fs::rename(staging, out).map_err(|e| err(out, e))?;
    } else {
        for n in &names {
            let dst = out.join(n);
            fs::rename(staging.join(n), &dst).map_err(|e| err(&dst, e))?;
        }
        fs::remove_dir(staging).map_err(|e| err(staging, e))?;
    }
    Ok(names.into_iter().map(|n| out.join(n)).collect())
}

/// Runs one command and returns the paths written.
pub fn run(command: &Command) -> Result<Vec<PathBuf>> {
    let args = command.args();
    let loaded = LoadedConfig::load(&args.config)?;
    let seed = args.seed.unwrap_or(loaded.config.seed);
    let out = match (&args.out, &loaded.config.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => loaded.resolve(o),
        (None, None) => PathBuf::from("shiftfuse-out"),
    };
    if out.exists() && !out.is_dir() {
        return Err(Error::Config(format!("output path `{}` is not a directory", out.display())));
    }
    let kind = command.kind();
    let provenance = Provenance {
        tool: "shiftfuse",
        version: VERSION,
        command: kind.as_str(),
        config_sha256: loaded.sha256.clone(),
        seed,
    };
    // Configuration problems surface before any data is read.
    let plan = match kind {
        CommandKind::Estimate => Plan::Estimate(estimate::plan(&loaded)?),
        CommandKind::Simulate => Plan::Simulate(simulate::plan(&loaded)?),
        CommandKind::Diagnose => Plan::Diagnose(diagnose::plan(&loaded)?),
    };
    let pool = match thread_cap()? {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?,
        ),
        None => None,
    };
    let staging = staging_dir(&out)?;
    let ctx = Context {
        loaded,
        seed,
        provenance,
        staging: staging.clone(),
    };
    let work = || match &plan {
        Plan::Estimate(p) => estimate::run(&ctx, p),
        Plan::Simulate(p) => simulate::run(&ctx, p),
        Plan::Diagnose(p) => diagnose::run(&ctx, p),
    };
    let result = match &pool {
        Some(pool) => pool.install(work),
        None => work(),
    };
    match result.and_then(|()| publish(&staging, &out)) {
        Ok(paths) => Ok(paths),
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

enum Plan {
    Estimate(estimate::Plan),
    Simulate(simulate::Plan),
    Diagnose(diagnose::Plan),
}

/// `{"error":{"kind":…,"message":…}}`
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main_from_args() -> i32 {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            1
        }
    }
}
