use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracsob_cli::{run, CommandKind, RunOptions};

#[derive(Parser)]
#[command(
    name = "fracsob",
    version,
    about = "Variable-exponent fractional Sobolev norms, trace/extension operators, and verification sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Problem config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.json, summary.csv, and optional grids.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Cap the worker thread count; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Check battery: holder, integral_estimate, alpha_beta, embedding,
    /// decomposition, or all.
    #[arg(long)]
    check: Option<String>,
    /// Cases per family.
    #[arg(long)]
    cases: Option<usize>,
    /// Seed for the generated function families.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Luxemburg norm of the configured function.
    Norm(Common),
    /// Gagliardo seminorm of the configured function.
    Seminorm(Common),
    /// Extend the function past the boundary; emits grid and provenance.
    Extend(Common),
    /// Restrict a function from an enclosing box to the domain.
    Trace(Common),
    /// Run one verification battery (or all of them).
    Verify(VerifyArgs),
    /// Run every verification battery.
    Sweep(VerifyArgs),
}

fn options(kind: CommandKind, common: Common) -> RunOptions {
    let mut o = RunOptions::new(kind, common.config, common.out);
    o.threads = common.threads;
    o
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = match cli.command {
        Cmd::Norm(c) => options(CommandKind::Norm, c),
        Cmd::Seminorm(c) => options(CommandKind::Seminorm, c),
        Cmd::Extend(c) => options(CommandKind::Extend, c),
        Cmd::Trace(c) => options(CommandKind::Trace, c),
        Cmd::Verify(v) => {
            let mut o = options(CommandKind::Verify, v.common);
            o.check = v.check;
            o.cases = v.cases;
            o.seed = v.seed;
            o
        }
        Cmd::Sweep(v) => {
            let mut o = options(CommandKind::Sweep, v.common);
            o.cases = v.cases;
            o.seed = v.seed;
            o
        }
    };
    ExitCode::from(run(&opts) as u8)
}
