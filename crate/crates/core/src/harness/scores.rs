//! Score aggregation: walk a directory of finished runs, evaluate every seed
//! checkpoint greedily, and normalize each algorithm's mean return against an
//! empirical uniform-random floor and the best run on the same environment.

use std::path::{Path, PathBuf};

use crate::algo::AlgoKind;
use crate::checkpoint;
use crate::env::make_env;
use crate::harness::config::ExperimentConfig;
use crate::harness::eval::{evaluate, evaluate_random};
use crate::{Error, Result};

pub const RANDOM_BASELINE_EPISODES: usize = 1000;
const RANDOM_BASELINE_SEED: u64 = 424_242;
const EVAL_SEED_BASE: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct RunScore {
    pub dir: PathBuf,
    pub algo: AlgoKind,
    pub env: String,
    pub corridor_length: usize,
    pub env_tag: String,
    /// (seed, mean greedy return) per evaluated checkpoint.
    pub per_seed: Vec<(u64, f64)>,
    /// Mean over seeds of the per-seed mean returns.
    pub mean: f64,
    /// (mean - random) / (best - random); `None` when the spread over an
    /// environment is too small to normalize.
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScoreTable {
    pub episodes_per_seed: usize,
    pub runs: Vec<RunScore>,
    /// (env tag, uniform-random mean return).
    pub baselines: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl ScoreTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:<7} {:>6} {:>12} {:>12}\n",
            "env", "algo", "seeds", "return", "normalized"
        ));
        for (tag, floor) in &self.baselines {
            out.push_str(&format!("{tag:<14} {:<7} {:>6} {floor:>12.4} {:>12}\n", "random", "-", "0.000"));
            for run in self.runs.iter().filter(|r| &r.env_tag == tag) {
                let norm = match run.normalized {
                    Some(v) => format!("{v:.3}"),
                    None => "-".into(),
                };
                out.push_str(&format!(
                    "{:<14} {:<7} {:>6} {:>12.4} {norm:>12}\n",
                    run.env_tag,
                    run.algo.name(),
                    run.per_seed.len(),
                    run.mean
                ));
            }
        }
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("env,algo,seeds,return_mean,normalized\n");
        for (tag, floor) in &self.baselines {
            out.push_str(&format!("{tag},random,{RANDOM_BASELINE_EPISODES},{floor},0\n"));
            for run in self.runs.iter().filter(|r| &r.env_tag == tag) {
                let norm = run.normalized.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!("{},{},{},{},{norm}\n", run.env_tag, run.algo.name(), run.per_seed.len(), run.mean));
            }
        }
        out
    }

    /// The score of one algorithm on one environment tag, if present.
    pub fn run(&self, algo: AlgoKind, env_tag: &str) -> Option<&RunScore> {
        self.runs.iter().find(|r| r.algo == algo && r.env_tag == env_tag)
    }
}

/// Evaluate every `<algo>_<env>` run directory under `in_dir`.
pub fn compute_scores(in_dir: &Path, episodes_per_seed: usize) -> Result<ScoreTable> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(in_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("run.txt").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!("no run directories with a run.txt under {}", in_dir.display())));
    }

    let mut runs = Vec::new();
    let mut notes = Vec::new();
    for dir in dirs {
        let cfg = ExperimentConfig::load(&dir.join("run.txt"))?;
        let mut per_seed = Vec::new();
        for (k, &seed) in cfg.seeds.iter().enumerate() {
            let path = dir.join(format!("seed{seed}.ckpt"));
            if !path.is_file() {
                notes.push(format!("{}: missing {}", dir.display(), path.file_name().unwrap().to_string_lossy()));
                continue;
            }
            let (nets, ck_algo) = checkpoint::load(&path)?;
            if ck_algo != cfg.algo {
                return Err(Error::Inconsistent(format!(
                    "{}: checkpoint algorithm {ck_algo} does not match run config {}",
                    path.display(),
                    cfg.algo
                )));
            }
            let mut env = make_env(&cfg.env, cfg.corridor_length)?;
            let report = evaluate(&nets, cfg.algo, env.as_mut(), episodes_per_seed, EVAL_SEED_BASE + k as u64, false)?;
            per_seed.push((seed, report.mean));
        }
        if per_seed.is_empty() {
            notes.push(format!("{}: no checkpoints, skipped", dir.display()));
            continue;
        }
        let mean = per_seed.iter().map(|(_, m)| m).sum::<f64>() / per_seed.len() as f64;
        runs.push(RunScore {
            dir,
            algo: cfg.algo,
            env_tag: cfg.env_tag(),
            env: cfg.env,
            corridor_length: cfg.corridor_length,
            per_seed,
            mean,
            normalized: None,
        });
    }

    let mut tags: Vec<String> = runs.iter().map(|r| r.env_tag.clone()).collect();
    tags.sort();
    tags.dedup();
    let mut baselines = Vec::new();
    for tag in tags {
        let sample = runs.iter().find(|r| r.env_tag == tag).unwrap();
        let mut env = make_env(&sample.env, sample.corridor_length)?;
        let floor = evaluate_random(env.as_mut(), RANDOM_BASELINE_EPISODES, RANDOM_BASELINE_SEED)?.mean;
        let best = runs.iter().filter(|r| r.env_tag == tag).map(|r| r.mean).fold(f64::NEG_INFINITY, f64::max);
        let span = best - floor;
        if span.abs() < 1e-9 {
            notes.push(format!("{tag}: best run ties the random floor, normalization skipped"));
        } else {
            for run in runs.iter_mut().filter(|r| r.env_tag == tag) {
                run.normalized = Some((run.mean - floor) / span);
            }
        }
        baselines.push((tag, floor));
    }
    Ok(ScoreTable { episodes_per_seed, runs, baselines, notes })
}
