//! `asyncbcd`: run simulations, solver ensembles and threaded runs from a
//! JSON config or a named preset.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 infeasible configuration,
//! 3 a descent invariant or self-check failed.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{preset, ExperimentConfig};
use crate::error::{io_err, CliError, CliResult, EXIT_OK};

#[derive(Parser, Debug)]
#[command(name = "asyncbcd", version, about = "Asynchronous block coordinate descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write event traces (or the two-agent reachability report).
    Simulate(RunArgs),
    /// Replay traces through the solver and check the selected descent lemmas.
    Solve(RunArgs),
    /// Run on real threads and record measured delays.
    Parallel(RunArgs),
    /// Merge `solve` output directories into rate fits and a criteria table.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Check the appendix inequalities and the step-size formulas.
    Selftest {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's seeds, e.g. `--seeds 1,2,3`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

impl RunArgs {
    /// The config and the directory relative paths inside it resolve against.
    fn load(&self) -> CliResult<(ExperimentConfig, PathBuf)> {
        let (cfg, base) = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (ExperimentConfig::parse(&text)?, base)
            }
            (None, Some(name)) => (preset(name)?, PathBuf::from(".")),
            (None, None) => return Err(CliError::Usage("either --config or --preset is required".into())),
        };
        Ok((cfg.with_seeds(self.seeds.clone())?, base))
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => {
            let (cfg, base) = a.load()?;
            commands::simulate_cmd(&cfg, &base, &a.out)
        }
        Command::Solve(a) => {
            let (cfg, base) = a.load()?;
            commands::solve_cmd(&cfg, &base, &a.out)
        }
        Command::Parallel(a) => {
            let (cfg, base) = a.load()?;
            commands::parallel_cmd(&cfg, &base, &a.out)
        }
        Command::Report { dirs, out } => commands::report_cmd(&dirs, &out),
        Command::Selftest { trials, out } => commands::selftest_cmd(trials, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
