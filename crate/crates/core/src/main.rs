use std::path::PathBuf;

use clap::{Parser, Subcommand};

use optionrl::algo::AlgoKind;
use optionrl::env::make_env;
use optionrl::harness::config::ExperimentConfig;
use optionrl::harness::eval::evaluate;
use optionrl::harness::plot::plot;
use optionrl::harness::scores::compute_scores;
use optionrl::harness::train::train;
use optionrl::harness::oracle_check;
use optionrl::{checkpoint, Error, Result};

/// Option-policy reinforcement learning: train, evaluate, and verify
/// option-augmented PPO variants on memory corridors and cart-pole.
#[derive(Parser)]
#[command(name = "optionrl", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run (all seeds) from a config file
    Train {
        /// Path to a `key = value` experiment config
        #[arg(long)]
        config: PathBuf,
        /// Train only this seed instead of the config's seed list
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's algorithm (ppo, ppoc, ppoem, soap)
        #[arg(long)]
        algo: Option<String>,
        /// Override the config's environment (corridor, cartpole)
        #[arg(long)]
        env: Option<String>,
        /// Override the config's total environment steps per seed
        #[arg(long)]
        steps: Option<usize>,
        /// Override the config's output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress per-update progress lines
        #[arg(long)]
        quiet: bool,
    },
    /// Roll out a trained checkpoint and report its returns
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Environment to evaluate on (corridor, cartpole)
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Corridor length, ignored for other environments
        #[arg(long, default_value_t = 3)]
        corridor_length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample the policy instead of acting greedily
        #[arg(long)]
        stochastic: bool,
    },
    /// Evaluate every run under a directory and print normalized scores
    Scores {
        /// Directory containing `<algo>_<env>` run directories
        #[arg(long = "in")]
        input: PathBuf,
        /// Greedy evaluation episodes per seed checkpoint
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Run a numerical verification suite (fb-enum, goa-grad, mlp-grad, all)
    OracleCheck { suite: String },
    /// Render learning curves (seed mean and min-max band) to an SVG
    Plot {
        /// A run directory or a directory of run directories
        #[arg(long = "in")]
        input: PathBuf,
        /// Output SVG path
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Train { config, seed, algo, env, steps, out, quiet } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(a) = algo {
                cfg.algo = AlgoKind::parse(&a)?;
            }
            if let Some(e) = env {
                cfg.env = e;
            }
            if let Some(n) = steps {
                cfg.total_steps = n;
            }
            if let Some(dir) = out {
                cfg.out = dir;
            }
            let summary = train(&cfg, !quiet)?;
            println!("run complete: {}", summary.run_dir.display());
            for s in &summary.seeds {
                println!(
                    "  seed {}: {} steps, {} episodes, final return {:.3} -> {}",
                    s.seed,
                    s.steps,
                    s.episodes,
                    s.final_return,
                    s.checkpoint.file_name().unwrap().to_string_lossy()
                );
            }
            Ok(())
        }
        Cmd::Eval { checkpoint, env, episodes, corridor_length, seed, stochastic } => {
            let (nets, algo) = checkpoint::load(&checkpoint)?;
            let mut e = make_env(&env, corridor_length)?;
            if nets.obs_dim != e.obs_dim() || nets.n_actions != e.n_actions() {
                return Err(Error::Inconsistent(format!(
                    "checkpoint expects obs {} / actions {}, environment '{env}' has obs {} / actions {}",
                    nets.obs_dim,
                    nets.n_actions,
                    e.obs_dim(),
                    e.n_actions()
                )));
            }
            let report = evaluate(&nets, algo, e.as_mut(), episodes, seed, stochastic)?;
            let mode = if stochastic { "stochastic" } else { "greedy" };
            println!("{algo} on {env} ({mode}, {episodes} episodes, seed {seed})");
            println!("return mean {:.4}  min {:.4}  max {:.4}", report.mean, report.min, report.max);
            Ok(())
        }
        Cmd::Scores { input, episodes } => {
            let table = compute_scores(&input, episodes)?;
            print!("{}", table.render());
            let csv_path = input.join("scores.csv");
            std::fs::write(&csv_path, table.to_csv())?;
            println!("wrote {}", csv_path.display());
            Ok(())
        }
        Cmd::OracleCheck { suite } => {
            let reports = oracle_check(&suite)?;
            let mut ok = true;
            for report in &reports {
                print!("{}", report.render());
                ok &= report.passed();
            }
            if ok {
                Ok(())
            } else {
                Err(Error::Numerical("one or more checks failed".into()))
            }
        }
        Cmd::Plot { input, out } => {
            let n = plot(&input, &out)?;
            println!("wrote {} ({n} series)", out.display());
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse().cmd) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
