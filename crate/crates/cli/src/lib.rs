//! Command-line front end: configuration parsing, scenario dispatch, figure
//! data and deterministic CSV output.

pub mod cache;
pub mod config;
pub mod error;
pub mod figures;
pub mod output;
pub mod scenario;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::cache::KernelCache;
use crate::config::Config;
use crate::error::CliError;
use crate::scenario::{Ctx, Profile};

#[derive(Debug, Parser)]
#[command(name = "lmem", version, about = "Photon storage and retrieval in Lambda-type atomic ensembles")]
pub struct Cli {
    /// Scenario configuration (`key = value` lines under `[section]` headers).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Grid sizes and iteration tolerances.
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Reference)]
    pub tolerance_profile: ProfileArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Fast,
    Reference,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Retrieve a stored spin wave.
    Retrieve,
    /// Store an input pulse.
    Store,
    /// Store, then retrieve completely.
    StoreRetrieve,
    /// Optimal spin-wave modes and the time-reversal iteration.
    OptimizeMode,
    /// Shape a storage or retrieval control.
    ShapeControl,
    /// Run one command over a list of parameter values.
    Sweep,
    /// Emit the data of one figure.
    Figure {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(figures::FIGURES))]
        id: String,
    },
}

fn execute(cli: &Cli) -> Result<output::Summary, CliError> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::empty(),
    };
    let profile = match cli.tolerance_profile {
        ProfileArg::Fast => Profile::Fast,
        ProfileArg::Reference => Profile::Reference,
    };
    let ctx = Ctx { cfg, profile, cache: KernelCache::locate(&cli.out) };
    let dir = cli.out.as_path();
    match &cli.command {
        Command::Retrieve => scenario::run(&ctx, "retrieve", dir),
        Command::Store => scenario::run(&ctx, "store", dir),
        Command::StoreRetrieve => scenario::run(&ctx, "store-retrieve", dir),
        Command::OptimizeMode => scenario::run(&ctx, "optimize-mode", dir),
        Command::ShapeControl => scenario::run(&ctx, "shape-control", dir),
        Command::Sweep => scenario::sweep(&ctx, dir),
        Command::Figure { id } => figures::run(&ctx, id, dir),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 on validation errors, 2 on numerical failures.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("lmem: error: cannot start {} worker threads: {e}", cli.jobs);
            return 1;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(summary) => {
            print!("{}", summary.render());
            0
        }
        Err(e) => {
            eprintln!("lmem: error: {e}");
            e.exit_code()
        }
    }
}
