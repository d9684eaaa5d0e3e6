// SPDX-License-Identifier: Apache-2.0

//! `vbugloc`: corpus cleaning, bug injection, dataset building and
//! evaluation for Verilog bug localization.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 model endpoint or
//! external tool failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use vbugloc_core::Exec;

use crate::commands::*;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "vbugloc",
    version,
    about = "Build and score Verilog bug-localization data"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for signatures, mutation and per-case requests
    /// [default: number of processors].
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Remove near-duplicate documents with MinHash/LSH.
    Dedup(DedupArgs),
    /// Inject single-line bugs into every corpus module.
    Mutate(MutateArgs),
    /// Build an evaluation testset with a fixed per-pattern histogram.
    BuildTestset(BuildTestsetArgs),
    /// Generate reasoning thoughts and write pretraining samples.
    BuildPt(BuildPtArgs),
    /// Write instruction/input/output pairs for supervised finetuning.
    BuildSft(BuildSftArgs),
    /// Write prompt/chosen/rejected preference triples.
    BuildSimpo(BuildSimpoArgs),
    /// Score a model (or saved responses) on a testset.
    Eval(EvalArgs),
    /// Run the evaluation over several sampling temperatures.
    Sweep(SweepArgs),
    /// Compute SimPO margins and losses from token log-probabilities.
    SimpoScore(SimpoScoreArgs),
}

fn init_threads(jobs: Option<usize>) -> Result<Exec, CliError> {
    match jobs {
        Some(0) => Err(CliError::Usage(
            "--jobs must be at least 1 (e.g. --jobs 4)".into(),
        )),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let _ = n;
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::Parallel),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::load_config(cli.config.as_deref())?;
    let ctx = Context {
        exec: init_threads(cli.jobs)?,
        jobs: cli.jobs,
        config_path: cli.config.clone(),
    };
    match cli.command {
        Command::Dedup(a) => run_dedup(a, cfg, &ctx),
        Command::Mutate(a) => run_mutate(a, cfg, &ctx),
        Command::BuildTestset(a) => run_build_testset(a, cfg, &ctx),
        Command::BuildPt(a) => run_build_pt(a, cfg, &ctx),
        Command::BuildSft(a) => run_build_sft(a, cfg, &ctx),
        Command::BuildSimpo(a) => run_build_simpo(a, cfg, &ctx),
        Command::Eval(a) => run_eval_cmd(a, cfg, &ctx),
        Command::Sweep(a) => run_sweep(a, cfg, &ctx),
        Command::SimpoScore(a) => run_simpo_score(a, cfg, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vbugloc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
