//! Command-line harness around the `dqn` library: train on a config file,
//! evaluate or trace a checkpoint, and run the gradient check.

use clap::{Parser, Subcommand};
use dqn::checkpoint::load_checkpoint;
use dqn::config::{parse_config_file, TrainConfig};
use dqn::env::env_by_name;
use dqn::harness::{
    evaluate_checkpoint, preproc_for, trace_csv, trace_values, train_with_progress,
};
use dqn::nn::gradcheck_suite;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dqn",
    about = "Deep Q-learning with experience replay on small pixel environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training loop described by a config file.
    Train {
        /// Path to a `key = value` config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint with an epsilon-greedy policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Built-in environment name (catch, gridworld).
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ticks per agent decision.
        #[arg(long, default_value_t = 4)]
        frame_skip: u32,
        /// Also print one return per episode.
        #[arg(long)]
        per_episode: bool,
    },
    /// Play one greedy episode and log the predicted value per decision.
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Built-in environment name (catch, gridworld).
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        max_steps: u64,
        /// Ticks per agent decision.
        #[arg(long, default_value_t = 4)]
        frame_skip: u32,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients against finite differences on random small
    /// nets at 64-bit precision.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> dqn::Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut config: TrainConfig = parse_config_file(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.output_dir = out;
            }
            println!("{}", dqn::harness::MetricsRow::CSV_HEADER);
            let outcome = train_with_progress(&config, |row| {
                println!("{}", row.to_csv_line());
            })?;
            println!(
                "trained {} frames over {} episodes; metrics: {}; final checkpoint: {}",
                outcome.frames_seen,
                outcome.episodes,
                outcome.metrics_path.display(),
                outcome.final_checkpoint_path.display()
            );
            if let Some(last) = outcome.metrics.last() {
                println!(
                    "final eval: avg_reward={} avg_max_q={} over {} episodes",
                    last.avg_episode_reward, last.avg_max_q, last.episodes_evaluated
                );
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            env,
            episodes,
            epsilon,
            seed,
            frame_skip,
            per_episode,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let mut env = env_by_name(&env)?;
            let report =
                evaluate_checkpoint(&ckpt, env.as_mut(), episodes, epsilon, frame_skip, seed)?;
            if per_episode {
                for (i, r) in report.per_episode.iter().enumerate() {
                    println!("episode {i}: {r}");
                }
            }
            let min = report
                .per_episode
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let max = report
                .per_episode
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            println!(
                "episodes={} epsilon={} avg_reward={} min={} max={}",
                report.per_episode.len(),
                epsilon,
                report.avg_reward,
                min,
                max
            );
            Ok(())
        }
        Command::Trace {
            checkpoint,
            env,
            seed,
            max_steps,
            frame_skip,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let mut env = env_by_name(&env)?;
            let preproc = preproc_for(ckpt.params.geometry(), env.spec())?;
            let rows = trace_values(
                &ckpt.params,
                env.as_mut(),
                &preproc,
                frame_skip,
                seed,
                max_steps,
            )?;
            let csv = trace_csv(&rows);
            match out {
                Some(path) => {
                    std::fs::write(&path, csv).map_err(|e| dqn::Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    println!("wrote {} trace rows to {}", rows.len(), path.display());
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Gradcheck { instances, seed } => {
            let report = gradcheck_suite(instances, seed)?;
            println!(
                "instances={} max_relative_error={:e} threshold={:e}",
                report.instances, report.max_relative_error, report.threshold
            );
            if report.passed() {
                println!("gradcheck passed");
                Ok(())
            } else {
                Err(dqn::Error::Training(format!(
                    "gradient check failed: max relative error {:e} is not below {:e}",
                    report.max_relative_error, report.threshold
                )))
            }
        }
    }
}
