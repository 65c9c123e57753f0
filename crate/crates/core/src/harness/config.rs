//! Experiment configuration: a flat `key = value` text format with `#`
//! comments.  `dump` renders a config that parses back to the same values,
//! which is how finished runs record their exact settings.

use std::path::{Path, PathBuf};

use crate::advantage::GaeParams;
use crate::algo::{AlgoKind, HyperParams};
use crate::env::make_env;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algo: AlgoKind,
    /// Environment name understood by `make_env`.
    pub env: String,
    pub corridor_length: usize,
    /// Environment steps collected per seed over the whole run.
    pub total_steps: usize,
    pub seeds: Vec<u64>,
    /// Directory run artifacts are written under.
    pub out: PathBuf,
    pub hp: HyperParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algo: AlgoKind::Soap,
            env: "corridor".into(),
            corridor_length: 3,
            total_steps: 8_000,
            seeds: vec![0, 1, 2, 3, 4],
            out: PathBuf::from("runs"),
            hp: HyperParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut gamma = cfg.hp.gae.gamma;
        let mut lambda = cfg.hp.gae.lambda;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", ln + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Config(format!("line {}: bad {what} '{value}'", ln + 1));
            match key {
                "algo" => cfg.algo = AlgoKind::parse(value)?,
                "env" => cfg.env = value.to_string(),
                "corridor_length" => cfg.corridor_length = value.parse().map_err(|_| bad("length"))?,
                "total_steps" => cfg.total_steps = value.parse().map_err(|_| bad("step count"))?,
                "seeds" => {
                    cfg.seeds = value
                        .split_whitespace()
                        .map(|w| w.parse().map_err(|_| bad("seed list")))
                        .collect::<Result<_>>()?;
                }
                "out" => cfg.out = PathBuf::from(value),
                "clip_epsilon" => cfg.hp.clip_epsilon = value.parse().map_err(|_| bad("float"))?,
                "lr" => cfg.hp.lr = value.parse().map_err(|_| bad("float"))?,
                "epochs" => cfg.hp.epochs = value.parse().map_err(|_| bad("count"))?,
                "minibatch_size" => cfg.hp.minibatch_size = value.parse().map_err(|_| bad("count"))?,
                "horizon" => cfg.hp.horizon = value.parse().map_err(|_| bad("count"))?,
                "gamma" => gamma = value.parse().map_err(|_| bad("float"))?,
                "lambda" => lambda = value.parse().map_err(|_| bad("float"))?,
                "n_options" => cfg.hp.n_options = value.parse().map_err(|_| bad("count"))?,
                "entropy_coef" => cfg.hp.entropy_coef = value.parse().map_err(|_| bad("float"))?,
                "value_coef" => cfg.hp.value_coef = value.parse().map_err(|_| bad("float"))?,
                "max_grad_norm" => cfg.hp.max_grad_norm = value.parse().map_err(|_| bad("float"))?,
                "normalize_advantage" => {
                    cfg.hp.normalize_advantage = value.parse().map_err(|_| bad("bool (true/false)"))?;
                }
                "hidden" => {
                    cfg.hp.hidden = value
                        .split_whitespace()
                        .map(|w| w.parse().map_err(|_| bad("layer width list")))
                        .collect::<Result<_>>()?;
                }
                other => return Err(Error::Config(format!("line {}: unknown key '{other}'", ln + 1))),
            }
        }
        cfg.hp.gae = GaeParams::new(gamma, lambda)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Render as parseable `key = value` text.
    pub fn dump(&self) -> String {
        let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        format!(
            "algo = {}\nenv = {}\ncorridor_length = {}\ntotal_steps = {}\nseeds = {}\nout = {}\n\
             n_options = {}\nhidden = {}\nhorizon = {}\nminibatch_size = {}\nepochs = {}\n\
             lr = {}\nclip_epsilon = {}\ngamma = {}\nlambda = {}\nentropy_coef = {}\n\
             value_coef = {}\nmax_grad_norm = {}\nnormalize_advantage = {}\n",
            self.algo,
            self.env,
            self.corridor_length,
            self.total_steps,
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
            self.out.display(),
            self.hp.n_options,
            join(&self.hp.hidden),
            self.hp.horizon,
            self.hp.minibatch_size,
            self.hp.epochs,
            self.hp.lr,
            self.hp.clip_epsilon,
            self.hp.gae.gamma,
            self.hp.gae.lambda,
            self.hp.entropy_coef,
            self.hp.value_coef,
            self.hp.max_grad_norm,
            self.hp.normalize_advantage,
        )
    }

    /// Hyperparameters with the option count resolved for the chosen
    /// algorithm: the plain baseline is the single-option member of the
    /// family, so it always runs with one option regardless of `n_options`.
    pub fn hyperparams(&self) -> HyperParams {
        let mut hp = self.hp.clone();
        if self.algo == AlgoKind::Ppo {
            hp.n_options = 1;
        }
        hp
    }

    /// Short tag naming the environment instance, used in run directories.
    pub fn env_tag(&self) -> String {
        if self.env == "corridor" {
            format!("corridor{}", self.corridor_length)
        } else {
            self.env.clone()
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(format!("{}_{}", self.algo, self.env_tag()))
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams().validate()?;
        make_env(&self.env, self.corridor_length.max(1))?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        if self.total_steps < self.hp.horizon {
            return Err(Error::Config(format!(
                "total_steps ({}) must be at least one horizon ({})",
                self.total_steps, self.hp.horizon
            )));
        }
        Ok(())
    }
}
