use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dtpp::cli::{self, RunOptions};
use dtpp::scenario::load_scenario;
use dtpp::Error;

#[derive(Parser)]
#[command(name = "dtpp", version, about = "Decentralized task and path planning simulator")]
struct Args {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics, summary, and optionally trace and frames.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the line-delimited trace.
        #[arg(long)]
        trace: bool,
        /// Write one SVG frame per step.
        #[arg(long)]
        render: bool,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        maxsum_iters: Option<usize>,
        #[arg(long)]
        dp_horizon: Option<usize>,
        #[arg(long)]
        forbid_swaps: bool,
    },
    /// Re-check a trace offline.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print a scheduled task's V_G / V_J tables for the initial belief.
    SolveValues {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        task: usize,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(args.command, args.verbose) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}

fn execute(command: Command, verbosity: u8) -> Result<(), Error> {
    match command {
        Command::Run {
            scenario,
            seed,
            out,
            trace,
            render,
            max_steps,
            maxsum_iters,
            dp_horizon,
            forbid_swaps,
        } => {
            let opts = RunOptions {
                scenario,
                seed,
                out,
                trace,
                render,
                max_steps,
                maxsum_iters,
                dp_horizon,
                forbid_swaps,
                verbosity,
            };
            let report = cli::run(&opts)?;
            let s = report.summary;
            println!(
                "seed {}: {} steps, collected {}, cost {}, realized {}",
                report.seed, s.steps, s.collected, s.cost, s.realized
            );
        }
        Command::Replay { trace } => {
            let r = cli::replay_file(&trace)?;
            println!("ok: {} steps, {} agents, realized {}", r.steps, r.agents, r.realized);
        }
        Command::Validate { scenario } => {
            let cfg = cli::validate_file(&scenario)?;
            println!(
                "ok: {}x{} grid, {} agents, {} scheduled tasks",
                cfg.grid.width,
                cfg.grid.height,
                cfg.agents.len(),
                cfg.tasks.len()
            );
        }
        Command::SolveValues { scenario, task } => {
            let cfg = load_scenario(&scenario)?;
            print!("{}", cli::solve_values_dump(&cfg, task)?);
        }
    }
    Ok(())
}
