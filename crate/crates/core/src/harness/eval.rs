//! Policy evaluation: roll out a trained agent (or a uniform-random baseline)
//! for a number of episodes and summarize the returns.
//!
//! The default protocol is greedy: the belief-tracking agents act by the
//! argmax of the belief-weighted action distribution while the belief is
//! updated with the action actually taken, and the sampled-option agent holds
//! the argmax option, acts by its argmax action, and switches whenever the
//! termination probability reaches one half.  `stochastic` samples instead,
//! reproducing the behaviour policy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::algo::{marginal_action_probs, sample_categorical, AgentNets, AlgoKind};
use crate::env::Env;
use crate::harness::rng_stream;
use crate::inference::{forward_step, init_zeta};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl EvalReport {
    fn from_returns(returns: Vec<f64>) -> Result<Self> {
        if returns.is_empty() {
            return Err(Error::InvalidInput("evaluation needs at least one episode".into()));
        }
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let min = returns.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { returns, mean, min, max })
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn pick(probs: &[f64], stochastic: bool, rng: &mut ChaCha8Rng) -> usize {
    if stochastic {
        sample_categorical(probs, rng)
    } else {
        argmax(probs)
    }
}

fn zeta_episode(
    nets: &AgentNets,
    env: &mut dyn Env,
    stochastic: bool,
    env_rng: &mut ChaCha8Rng,
    act_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut obs = env.reset(env_rng);
    let mut zeta = init_zeta(nets.n_options)?;
    let mut total = 0.0;
    loop {
        let outputs = nets.policy_tables(&obs)?;
        let marginal = marginal_action_probs(&zeta, &outputs);
        let action = pick(&marginal, stochastic, act_rng);
        let (_, next_zeta) = forward_step(&zeta, &outputs, action)?;
        let step = env.step(action, env_rng)?;
        total += step.reward;
        if step.done || step.truncated {
            return Ok(total);
        }
        obs = step.obs;
        zeta = next_zeta;
    }
}

fn sampled_option_episode(
    nets: &AgentNets,
    env: &mut dyn Env,
    stochastic: bool,
    env_rng: &mut ChaCha8Rng,
    act_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut obs = env.reset(env_rng);
    let mut option = pick(&nets.inter_option_probs(&obs)?, stochastic, act_rng);
    let mut total = 0.0;
    loop {
        let outputs = nets.policy_tables(&obs)?;
        let row = &outputs.sub_policy[option * outputs.n_actions..(option + 1) * outputs.n_actions];
        let action = pick(row, stochastic, act_rng);
        let step = env.step(action, env_rng)?;
        total += step.reward;
        if step.done || step.truncated {
            return Ok(total);
        }
        obs = step.obs;
        let stop = nets.termination_probs(&obs)?[option];
        let switch = if stochastic { act_rng.gen::<f64>() < stop } else { stop >= 0.5 };
        if switch {
            option = pick(&nets.inter_option_probs(&obs)?, stochastic, act_rng);
        }
    }
}

/// Evaluate a trained agent for `episodes` episodes.
pub fn evaluate(
    nets: &AgentNets,
    algo: AlgoKind,
    env: &mut dyn Env,
    episodes: usize,
    seed: u64,
    stochastic: bool,
) -> Result<EvalReport> {
    let mut env_rng = rng_stream(seed, 1);
    let mut act_rng = rng_stream(seed, 2);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        returns.push(match algo {
            AlgoKind::Ppoc => sampled_option_episode(nets, env, stochastic, &mut env_rng, &mut act_rng)?,
            _ => zeta_episode(nets, env, stochastic, &mut env_rng, &mut act_rng)?,
        });
    }
    EvalReport::from_returns(returns)
}

/// Evaluate the uniform-random policy, the floor for normalized scores.
pub fn evaluate_random(env: &mut dyn Env, episodes: usize, seed: u64) -> Result<EvalReport> {
    let mut env_rng = rng_stream(seed, 1);
    let mut act_rng = rng_stream(seed, 2);
    let n_actions = env.n_actions();
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let _ = env.reset(&mut env_rng);
        let mut total = 0.0;
        loop {
            let step = env.step(act_rng.gen_range(0..n_actions), &mut env_rng)?;
            total += step.reward;
            if step.done || step.truncated {
                break;
            }
        }
        returns.push(total);
    }
    EvalReport::from_returns(returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_env;
    use rand::SeedableRng;

    fn fresh_nets(algo: AlgoKind, n: usize) -> AgentNets {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        AgentNets::init(algo, 3, 2, n, &[8], &mut rng).unwrap()
    }

    #[test]
    fn greedy_evaluation_is_deterministic_per_seed() {
        for (algo, n) in [(AlgoKind::Soap, 3), (AlgoKind::Ppoc, 3), (AlgoKind::Ppo, 1)] {
            let nets = fresh_nets(algo, n);
            let mut env = make_env("corridor", 4).unwrap();
            let a = evaluate(&nets, algo, env.as_mut(), 20, 11, false).unwrap();
            let b = evaluate(&nets, algo, env.as_mut(), 20, 11, false).unwrap();
            assert_eq!(a.returns, b.returns, "{algo}");
            assert!(a.min <= a.mean && a.mean <= a.max);
        }
    }

    #[test]
    fn corridor_returns_are_terminal_rewards() {
        let nets = fresh_nets(AlgoKind::Soap, 2);
        let mut env = make_env("corridor", 3).unwrap();
        let rep = evaluate(&nets, AlgoKind::Soap, env.as_mut(), 50, 3, true).unwrap();
        assert!(rep.returns.iter().all(|&r| r == 1.0 || r == -1.0));
    }

    #[test]
    fn random_baseline_on_corridor_is_near_zero() {
        let mut env = make_env("corridor", 3).unwrap();
        let rep = evaluate_random(env.as_mut(), 2000, 99).unwrap();
        // a coin flip at the final cell: mean 0, sd 1/sqrt(2000)
        assert!(rep.mean.abs() < 0.08, "mean {}", rep.mean);
    }

    #[test]
    fn single_option_greedy_matches_between_the_families() {
        // with one option the belief is trivial; greedy action = argmax row
        let nets = fresh_nets(AlgoKind::Ppo, 1);
        let mut env = make_env("corridor", 5).unwrap();
        let rep = evaluate(&nets, AlgoKind::Ppo, env.as_mut(), 10, 7, false).unwrap();
        let again = evaluate(&nets, AlgoKind::Soap, env.as_mut(), 10, 7, false).unwrap();
        assert_eq!(rep.returns, again.returns);
    }
}
