//! Batch front end: parse a problem config, dispatch to the library, emit
//! reports and grids. Everything is deterministic given (config, seed):
//! reruns produce byte-identical artifacts regardless of thread count.

mod commands;
mod config;
mod report;

use std::fs;
use std::path::PathBuf;

pub use commands::emit_grid;
pub use config::ProblemConfig;
pub use report::fmt_f64;

/// Failure class decides the exit code: Usage is a config or setup problem
/// (exit 2), Check means the computation ran and failed (exit 1).
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Check(String),
}

impl Failure {
    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Check(m) => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Norm,
    Seminorm,
    Extend,
    Trace,
    Verify,
    Sweep,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: CommandKind,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    /// Worker-thread cap; results never depend on it.
    pub threads: Option<usize>,
    /// Verify-only overrides of the config's [verify] section.
    pub check: Option<String>,
    pub cases: Option<usize>,
    pub seed: Option<u64>,
}

impl RunOptions {
    pub fn new(command: CommandKind, config_path: PathBuf, output_dir: PathBuf) -> RunOptions {
        RunOptions { command, config_path, output_dir, threads: None, check: None, cases: None, seed: None }
    }
}

pub fn execute(opts: &RunOptions) -> Result<(), Failure> {
    let cfg = ProblemConfig::load(&opts.config_path).map_err(Failure::Usage)?;
    fs::create_dir_all(&opts.output_dir).map_err(|e| {
        Failure::Usage(format!("cannot create output dir {}: {e}", opts.output_dir.display()))
    })?;
    let out = opts.output_dir.as_path();
    let work = || match opts.command {
        CommandKind::Norm => commands::cmd_norm(&cfg, out),
        CommandKind::Seminorm => commands::cmd_seminorm(&cfg, out),
        CommandKind::Extend => commands::cmd_extend(&cfg, out),
        CommandKind::Trace => commands::cmd_trace(&cfg, out),
        CommandKind::Verify => commands::cmd_verify(
            &cfg,
            out,
            opts.check.as_deref(),
            opts.cases,
            opts.seed,
            false,
        ),
        CommandKind::Sweep => {
            commands::cmd_verify(&cfg, out, None, opts.cases, opts.seed, true)
        }
    };
    match opts.threads {
        None => work(),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
            pool.install(work)
        }
    }
}

/// Run a command and map the outcome to the exit status contract:
/// 0 success, 1 check failure, 2 config or usage error.
pub fn run(opts: &RunOptions) -> i32 {
    match execute(opts) {
        Ok(()) => 0,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
