//! Training driver: runs one experiment config across its seeds, writing a
//! metrics CSV and a final checkpoint per seed plus a `run.txt` recording the
//! resolved settings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::algo::update::{prepare_ppoc, prepare_zeta, update_epoch};
use crate::algo::{AgentNets, AlgoKind, Optimizers};
use crate::checkpoint;
use crate::env::make_env;
use crate::harness::config::ExperimentConfig;
use crate::harness::rng_stream;
use crate::rollout::{collect, collect_ppoc, CollectMode, CollectState, PpocBuffer, PpocState, RolloutBuffer};
use crate::Result;

pub const CSV_HEADER: &str = "step,return_mean,return_min,return_max,loss_policy,loss_value,entropy,clip_frac,wall_s";

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub steps: usize,
    pub episodes: usize,
    /// Mean return over the last burst that completed an episode.
    pub final_return: f64,
    pub csv: PathBuf,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
}

enum Collector {
    Zeta(CollectState),
    Sampled(PpocState),
}

enum Burst {
    Zeta(RolloutBuffer),
    Sampled(PpocBuffer),
}

impl Burst {
    fn len(&self) -> usize {
        match self {
            Burst::Zeta(b) => b.len(),
            Burst::Sampled(b) => b.len(),
        }
    }

    fn completed_returns(&self) -> &[f64] {
        match self {
            Burst::Zeta(b) => &b.completed_returns,
            Burst::Sampled(b) => &b.completed_returns,
        }
    }
}

/// Train every seed of the config, quietly unless `verbose`.
pub fn train(cfg: &ExperimentConfig, verbose: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    let run_dir = cfg.run_dir();
    std::fs::create_dir_all(&run_dir)?;
    std::fs::write(run_dir.join("run.txt"), cfg.dump())?;
    if verbose {
        println!(
            "training {} on {}: {} seed(s) x {} steps -> {}",
            cfg.algo,
            cfg.env_tag(),
            cfg.seeds.len(),
            cfg.total_steps,
            run_dir.display()
        );
    }
    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        seeds.push(train_seed(cfg, seed, &run_dir, verbose)?);
    }
    Ok(TrainSummary { run_dir, seeds })
}

pub fn train_seed(cfg: &ExperimentConfig, seed: u64, run_dir: &Path, verbose: bool) -> Result<SeedOutcome> {
    let hp = cfg.hyperparams();
    let mut init_rng = rng_stream(seed, 0);
    let env_rng = rng_stream(seed, 1);
    let act_rng = rng_stream(seed, 2);
    let mut shuffle_rng = rng_stream(seed, 3);

    let env = make_env(&cfg.env, cfg.corridor_length)?;
    let mut nets = AgentNets::init(cfg.algo, env.obs_dim(), env.n_actions(), hp.n_options, &hp.hidden, &mut init_rng)?;
    let mut opts = Optimizers::new(&nets, hp.lr);
    let mut collector = match cfg.algo {
        AlgoKind::Ppoc => Collector::Sampled(PpocState::new(env, &nets, env_rng, act_rng)?),
        _ => Collector::Zeta(CollectState::new(env, hp.n_options, env_rng, act_rng)?),
    };
    let mode = if cfg.algo == AlgoKind::Ppoem { CollectMode::ToEpisodeEnd } else { CollectMode::FixedHorizon };

    let csv_path = run_dir.join(format!("seed{seed}.csv"));
    let ckpt_path = run_dir.join(format!("seed{seed}.ckpt"));
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    writeln!(csv, "{CSV_HEADER}")?;

    let start = Instant::now();
    let mut steps_done = 0usize;
    let mut episodes = 0usize;
    let (mut ret_mean, mut ret_min, mut ret_max) = (f64::NAN, f64::NAN, f64::NAN);
    let n_updates = (cfg.total_steps / hp.horizon).max(1);
    let print_every = (n_updates / 8).max(1);
    let mut update_idx = 0usize;

    while steps_done < cfg.total_steps {
        let burst = match &mut collector {
            Collector::Zeta(state) => Burst::Zeta(collect(state, &nets, hp.horizon, mode)?),
            Collector::Sampled(state) => Burst::Sampled(collect_ppoc(state, &nets, hp.horizon)?),
        };
        steps_done += burst.len();
        let finished = burst.completed_returns();
        if !finished.is_empty() {
            episodes += finished.len();
            ret_mean = finished.iter().sum::<f64>() / finished.len() as f64;
            ret_min = finished.iter().cloned().fold(f64::INFINITY, f64::min);
            ret_max = finished.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        let data = match &burst {
            Burst::Zeta(buf) => prepare_zeta(cfg.algo, buf, &hp)?,
            Burst::Sampled(buf) => prepare_ppoc(buf, &hp)?,
        };
        let metrics = match update_epoch(&data, &mut nets, &mut opts, &hp, &mut shuffle_rng) {
            Ok(m) => m,
            Err(e) => {
                // Preserve the metrics written so far and the last healthy
                // parameters (the update loop restored them) before aborting.
                csv.flush()?;
                checkpoint::save(&nets, cfg.algo, &ckpt_path)?;
                return Err(e);
            }
        };
        writeln!(
            csv,
            "{steps_done},{ret_mean},{ret_min},{ret_max},{},{},{},{},{:.3}",
            metrics.loss_policy,
            metrics.loss_value,
            metrics.entropy,
            metrics.clip_frac,
            start.elapsed().as_secs_f64()
        )?;
        csv.flush()?;
        update_idx += 1;
        if verbose && (update_idx % print_every == 0 || steps_done >= cfg.total_steps) {
            println!("  seed {seed}  step {steps_done:>7}  episodes {episodes:>5}  return {ret_mean:>9.3}");
        }
    }
    checkpoint::save(&nets, cfg.algo, &ckpt_path)?;
    if verbose {
        println!("  seed {seed} finished in {:.1}s -> {}", start.elapsed().as_secs_f64(), ckpt_path.display());
    }
    Ok(SeedOutcome { seed, steps: steps_done, episodes, final_return: ret_mean, csv: csv_path, checkpoint: ckpt_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(algo: AlgoKind, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.algo = algo;
        cfg.corridor_length = 3;
        cfg.total_steps = 256;
        cfg.seeds = vec![0];
        cfg.out = dir.to_path_buf();
        cfg.hp.horizon = 64;
        cfg.hp.minibatch_size = 32;
        cfg.hp.epochs = 2;
        cfg.hp.n_options = 2;
        cfg.hp.hidden = vec![8];
        cfg
    }

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("optionrl-train-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn writes_complete_artifacts_for_every_algorithm() {
        let dir = temp_dir("artifacts");
        for algo in [AlgoKind::Ppo, AlgoKind::Ppoc, AlgoKind::Ppoem, AlgoKind::Soap] {
            let cfg = tiny_cfg(algo, &dir);
            let summary = train(&cfg, false).unwrap();
            assert_eq!(summary.run_dir, cfg.run_dir());
            assert!(summary.run_dir.join("run.txt").exists());
            let outcome = &summary.seeds[0];
            assert!(outcome.steps >= cfg.total_steps);
            assert!(outcome.episodes > 0, "{algo}: corridor episodes are short");
            let text = std::fs::read_to_string(&outcome.csv).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next(), Some(CSV_HEADER));
            let rows: Vec<&str> = lines.collect();
            assert!(!rows.is_empty());
            for row in &rows {
                assert_eq!(row.split(',').count(), 9, "{algo}: malformed row {row}");
            }
            // the recorded config parses back to the resolved settings
            let back = ExperimentConfig::load(&summary.run_dir.join("run.txt")).unwrap();
            assert_eq!(back, cfg);
            // the checkpoint reloads as the right shape
            let (nets, ck_algo) = checkpoint::load(&outcome.checkpoint).unwrap();
            assert_eq!(ck_algo, algo);
            assert_eq!(nets.n_options, if algo == AlgoKind::Ppo { 1 } else { 2 });
            assert!(nets.all_finite());
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn reruns_reproduce_metrics_and_checkpoints_exactly() {
        let dir_a = temp_dir("repro-a");
        let dir_b = temp_dir("repro-b");
        for algo in [AlgoKind::Soap, AlgoKind::Ppoc] {
            let a = train(&tiny_cfg(algo, &dir_a), false).unwrap();
            let b = train(&tiny_cfg(algo, &dir_b), false).unwrap();
            let strip_wall = |p: &Path| -> Vec<String> {
                std::fs::read_to_string(p)
                    .unwrap()
                    .lines()
                    .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                    .collect()
            };
            assert_eq!(strip_wall(&a.seeds[0].csv), strip_wall(&b.seeds[0].csv), "{algo}");
            let bytes = |p: &Path| std::fs::read(p).unwrap();
            assert_eq!(bytes(&a.seeds[0].checkpoint), bytes(&b.seeds[0].checkpoint), "{algo}");
        }
        std::fs::remove_dir_all(&dir_a).unwrap();
        std::fs::remove_dir_all(&dir_b).unwrap();
    }

    #[test]
    fn episode_boundary_collection_overshoots_the_horizon_only_per_burst() {
        let dir = temp_dir("overshoot");
        let mut cfg = tiny_cfg(AlgoKind::Ppoem, &dir);
        cfg.corridor_length = 5;
        cfg.hp.horizon = 32;
        cfg.total_steps = 96;
        let summary = train(&cfg, false).unwrap();
        // each burst runs to an episode end, so overshoot is below one episode
        assert!(summary.seeds[0].steps < cfg.total_steps + 3 * cfg.corridor_length);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
