//! Experience collection. The ζ-tracking collector drives actions from the
//! marginal distribution `Σ_z ζ(z)·π(a|s,z)` and records everything the
//! forward-backward machinery needs; the sampled-option collector (PPOC)
//! draws one option at a time with explicit terminations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::algo::{marginal_action_probs, sample_categorical, AgentNets};
use crate::env::{Env, Observation};
use crate::inference::{forward_step, init_zeta, OptionPolicyOutputs};
use crate::{Error, Result};

/// How a collection burst decides to stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectMode {
    /// Exactly `horizon` steps; an episode crossing the boundary is recorded
    /// as truncated (bootstrapped) and continues into the next burst.
    FixedHorizon,
    /// At least `horizon` steps, then keep going until the current episode
    /// ends. Needed by algorithms whose backward pass requires complete
    /// episodes.
    ToEpisodeEnd,
}

/// On-policy batch from the ζ-tracking collector. All per-step vectors share
/// one length `T`; probability tables are those of the collecting networks
/// ("old" quantities during updates).
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub n_options: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub obs: Vec<Observation>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Environment terminal: no bootstrapping past this step.
    pub terminated: Vec<bool>,
    /// Time-limit or horizon cut: bootstrap from `next_values`.
    pub truncated: Vec<bool>,
    /// Monotone episode counter (continues across bursts).
    pub episode_id: Vec<usize>,
    /// Pre-step option distribution ζ_t.
    pub zeta: Vec<Vec<f64>>,
    /// Realized-action probability α_t = Σ_z ζ(z)·π(a_t|s_t,z).
    pub alpha: Vec<f64>,
    /// Full sub-policy and transition tables at s_t.
    pub outputs: Vec<OptionPolicyOutputs>,
    /// V(s_t, ·), one entry per option.
    pub values: Vec<Vec<f64>>,
    /// V(s_{t+1}, ·) evaluated before any reset; zeros when terminated.
    pub next_values: Vec<Vec<f64>>,
    /// Returns of episodes that finished inside this burst.
    pub completed_returns: Vec<f64>,
}

impl RolloutBuffer {
    fn new(n_options: usize, n_actions: usize, obs_dim: usize) -> Self {
        Self {
            n_options,
            n_actions,
            obs_dim,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: Vec::new(),
            truncated: Vec::new(),
            episode_id: Vec::new(),
            zeta: Vec::new(),
            alpha: Vec::new(),
            outputs: Vec::new(),
            values: Vec::new(),
            next_values: Vec::new(),
            completed_returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Episode-boundary flags (terminated or truncated).
    pub fn ends(&self) -> Vec<bool> {
        self.terminated.iter().zip(&self.truncated).map(|(&a, &b)| a || b).collect()
    }

    /// Realized-action transition slice at step `t`: `n × n` row-major
    /// `p(z'|s_t, a_t, z)`.
    pub fn trans_slice(&self, t: usize) -> Vec<f64> {
        let n = self.n_options;
        let mut out = Vec::with_capacity(n * n);
        for z in 0..n {
            for z2 in 0..n {
                out.push(self.outputs[t].trans(z, self.actions[t], z2));
            }
        }
        out
    }

    /// Plain-text dump for debugging; [`RolloutBuffer::parse`] inverts it
    /// exactly (f64s round-trip through their shortest display form).
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "rollout v1").unwrap();
        writeln!(s, "n_options {}", self.n_options).unwrap();
        writeln!(s, "n_actions {}", self.n_actions).unwrap();
        writeln!(s, "obs_dim {}", self.obs_dim).unwrap();
        writeln!(s, "steps {}", self.len()).unwrap();
        for t in 0..self.len() {
            writeln!(s, "step {t}").unwrap();
            writeln!(s, "obs {}", join(&self.obs[t])).unwrap();
            writeln!(s, "action {}", self.actions[t]).unwrap();
            writeln!(s, "reward {}", self.rewards[t]).unwrap();
            writeln!(s, "terminated {}", u8::from(self.terminated[t])).unwrap();
            writeln!(s, "truncated {}", u8::from(self.truncated[t])).unwrap();
            writeln!(s, "episode {}", self.episode_id[t]).unwrap();
            writeln!(s, "zeta {}", join(&self.zeta[t])).unwrap();
            writeln!(s, "alpha {}", self.alpha[t]).unwrap();
            writeln!(s, "values {}", join(&self.values[t])).unwrap();
            writeln!(s, "next_values {}", join(&self.next_values[t])).unwrap();
            writeln!(s, "sub {}", join(&self.outputs[t].sub_policy)).unwrap();
            writeln!(s, "transition {}", join(&self.outputs[t].transition)).unwrap();
        }
        writeln!(s, "completed_returns {}", join(&self.completed_returns)).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut expect = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing '{key}' line")))?;
            line.strip_prefix(key)
                .map(|rest| rest.trim().to_string())
                .ok_or_else(|| Error::Parse(format!("expected '{key} …', got '{line}'")))
        };
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|w| w.parse::<f64>().map_err(|e| Error::Parse(format!("bad float '{w}': {e}"))))
                .collect()
        };
        let int = |s: &str| -> Result<usize> { s.trim().parse().map_err(|e| Error::Parse(format!("bad integer '{s}': {e}"))) };
        let flag = |s: &str| -> Result<bool> {
            match s.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Parse(format!("bad flag '{other}'"))),
            }
        };

        if expect("rollout")? != "v1" {
            return Err(Error::Parse("unsupported rollout dump version".into()));
        }
        let n_options = int(&expect("n_options")?)?;
        let n_actions = int(&expect("n_actions")?)?;
        let obs_dim = int(&expect("obs_dim")?)?;
        let steps = int(&expect("steps")?)?;
        let mut buf = Self::new(n_options, n_actions, obs_dim);
        for t in 0..steps {
            if int(&expect("step")?)? != t {
                return Err(Error::Parse(format!("step records out of order at {t}")));
            }
            buf.obs.push(nums(&expect("obs")?)?);
            buf.actions.push(int(&expect("action")?)?);
            buf.rewards.push(nums(&expect("reward")?)?[0]);
            buf.terminated.push(flag(&expect("terminated")?)?);
            buf.truncated.push(flag(&expect("truncated")?)?);
            buf.episode_id.push(int(&expect("episode")?)?);
            buf.zeta.push(nums(&expect("zeta")?)?);
            buf.alpha.push(nums(&expect("alpha")?)?[0]);
            buf.values.push(nums(&expect("values")?)?);
            buf.next_values.push(nums(&expect("next_values")?)?);
            let sub = nums(&expect("sub")?)?;
            let transition = nums(&expect("transition")?)?;
            buf.outputs.push(OptionPolicyOutputs::new(n_options, n_actions, sub, transition)?);
        }
        buf.completed_returns = nums(&expect("completed_returns")?)?;
        Ok(buf)
    }
}

/// Persistent collector state carried across bursts: the live environment,
/// current observation, running ζ, and the RNG streams for environment
/// randomness and action sampling.
pub struct CollectState {
    pub env: Box<dyn Env>,
    pub obs: Observation,
    pub zeta: Vec<f64>,
    pub at_episode_start: bool,
    pub episode_return: f64,
    pub episode_count: usize,
    pub env_rng: ChaCha8Rng,
    pub act_rng: ChaCha8Rng,
}

impl CollectState {
    pub fn new(mut env: Box<dyn Env>, n_options: usize, mut env_rng: ChaCha8Rng, act_rng: ChaCha8Rng) -> Result<Self> {
        let obs = env.reset(&mut env_rng);
        Ok(Self {
            env,
            obs,
            zeta: init_zeta(n_options)?,
            at_episode_start: true,
            episode_return: 0.0,
            episode_count: 0,
            env_rng,
            act_rng,
        })
    }
}

/// Run the ζ-tracking collector for one burst.
pub fn collect(state: &mut CollectState, nets: &AgentNets, horizon: usize, mode: CollectMode) -> Result<RolloutBuffer> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    if nets.obs_dim != state.env.obs_dim() || nets.n_actions != state.env.n_actions() {
        return Err(Error::Inconsistent("network dimensions do not match the environment".into()));
    }
    let n = nets.n_options;
    let mut buf = RolloutBuffer::new(n, nets.n_actions, nets.obs_dim);
    loop {
        if buf.len() >= horizon {
            match mode {
                CollectMode::FixedHorizon => break,
                CollectMode::ToEpisodeEnd if state.at_episode_start => break,
                CollectMode::ToEpisodeEnd => {}
            }
        }
        let obs = state.obs.clone();
        let outputs = nets.policy_tables(&obs)?;
        let values = nets.option_values(&obs)?;
        let marginal = marginal_action_probs(&state.zeta, &outputs);
        let action = sample_categorical(&marginal, &mut state.act_rng);
        let (alpha, next_zeta) = forward_step(&state.zeta, &outputs, action)?;
        let sr = state.env.step(action, &mut state.env_rng)?;
        state.episode_return += sr.reward;

        // A fixed-horizon cut mid-episode books the step as truncated but
        // leaves the live episode running for the next burst.
        let cut = mode == CollectMode::FixedHorizon && buf.len() + 1 >= horizon && !(sr.done || sr.truncated);
        let next_values = if sr.done { vec![0.0; n] } else { nets.option_values(&sr.obs)? };

        buf.obs.push(obs);
        buf.actions.push(action);
        buf.rewards.push(sr.reward);
        buf.terminated.push(sr.done);
        buf.truncated.push(sr.truncated || cut);
        buf.episode_id.push(state.episode_count);
        buf.zeta.push(state.zeta.clone());
        buf.alpha.push(alpha);
        buf.outputs.push(outputs);
        buf.values.push(values);
        buf.next_values.push(next_values);

        if sr.done || sr.truncated {
            buf.completed_returns.push(state.episode_return);
            state.episode_return = 0.0;
            state.episode_count += 1;
            state.obs = state.env.reset(&mut state.env_rng);
            state.zeta = init_zeta(n)?;
            state.at_episode_start = true;
        } else {
            state.obs = sr.obs;
            state.zeta = next_zeta;
            state.at_episode_start = false;
        }
    }
    Ok(buf)
}

/// On-policy batch from the sampled-option collector (PPOC).
#[derive(Debug, Clone)]
pub struct PpocBuffer {
    pub n_options: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub obs: Vec<Observation>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub episode_id: Vec<usize>,
    /// Option held while acting at step t.
    pub option: Vec<usize>,
    /// Option held entering step t+1 (after the termination draw at s_{t+1});
    /// equal to `option` when the episode ended at t.
    pub next_option: Vec<usize>,
    /// log π(a_t|s_t,z_t) under the collecting policy.
    pub logp_action: Vec<f64>,
    /// Q(s_t, z_t) under the collecting value net.
    pub q_taken: Vec<f64>,
    /// Q(s_{t+1}, z_{t+1}) before any reset; zero when terminated.
    pub next_q: Vec<f64>,
    pub completed_returns: Vec<f64>,
}

impl PpocBuffer {
    fn new(n_options: usize, n_actions: usize, obs_dim: usize) -> Self {
        Self {
            n_options,
            n_actions,
            obs_dim,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: Vec::new(),
            truncated: Vec::new(),
            episode_id: Vec::new(),
            option: Vec::new(),
            next_option: Vec::new(),
            logp_action: Vec::new(),
            q_taken: Vec::new(),
            next_q: Vec::new(),
            completed_returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Persistent state of the sampled-option collector.
pub struct PpocState {
    pub env: Box<dyn Env>,
    pub obs: Observation,
    pub option: usize,
    pub episode_return: f64,
    pub episode_count: usize,
    pub env_rng: ChaCha8Rng,
    pub act_rng: ChaCha8Rng,
}

impl PpocState {
    pub fn new(mut env: Box<dyn Env>, nets: &AgentNets, mut env_rng: ChaCha8Rng, mut act_rng: ChaCha8Rng) -> Result<Self> {
        let obs = env.reset(&mut env_rng);
        let option = sample_categorical(&nets.inter_option_probs(&obs)?, &mut act_rng);
        Ok(Self { env, obs, option, episode_return: 0.0, episode_count: 0, env_rng, act_rng })
    }
}

/// Run the sampled-option collector for one fixed-horizon burst. At each
/// next state a termination coin `ϖ(s', z)` decides whether to keep the
/// option or redraw it from the inter-option policy.
pub fn collect_ppoc(state: &mut PpocState, nets: &AgentNets, horizon: usize) -> Result<PpocBuffer> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    if nets.obs_dim != state.env.obs_dim() || nets.n_actions != state.env.n_actions() {
        return Err(Error::Inconsistent("network dimensions do not match the environment".into()));
    }
    let n = nets.n_options;
    let na = nets.n_actions;
    let mut buf = PpocBuffer::new(n, na, nets.obs_dim);
    while buf.len() < horizon {
        let obs = state.obs.clone();
        let z = state.option;
        let outputs = nets.policy_tables(&obs)?;
        let sub_row: Vec<f64> = (0..na).map(|a| outputs.sub(z, a)).collect();
        let action = sample_categorical(&sub_row, &mut state.act_rng);
        let logp = sub_row[action].ln();
        let q_taken = nets.option_values(&obs)?[z];
        let sr = state.env.step(action, &mut state.env_rng)?;
        state.episode_return += sr.reward;

        let cut = buf.len() + 1 >= horizon && !(sr.done || sr.truncated);
        let (next_option, next_q) = if sr.done {
            (z, 0.0)
        } else {
            let term_p = nets.termination_probs(&sr.obs)?[z];
            let z_next = if state.act_rng.gen_bool(term_p.clamp(0.0, 1.0)) {
                sample_categorical(&nets.inter_option_probs(&sr.obs)?, &mut state.act_rng)
            } else {
                z
            };
            (z_next, nets.option_values(&sr.obs)?[z_next])
        };

        buf.obs.push(obs);
        buf.actions.push(action);
        buf.rewards.push(sr.reward);
        buf.terminated.push(sr.done);
        buf.truncated.push(sr.truncated || cut);
        buf.episode_id.push(state.episode_count);
        buf.option.push(z);
        buf.next_option.push(next_option);
        buf.logp_action.push(logp);
        buf.q_taken.push(q_taken);
        buf.next_q.push(next_q);

        if sr.done || sr.truncated {
            buf.completed_returns.push(state.episode_return);
            state.episode_return = 0.0;
            state.episode_count += 1;
            state.obs = state.env.reset(&mut state.env_rng);
            state.option = sample_categorical(&nets.inter_option_probs(&state.obs)?, &mut state.act_rng);
        } else {
            state.obs = sr.obs;
            state.option = next_option;
        }
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::AlgoKind;
    use crate::env::make_env;
    use rand::SeedableRng;

    fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
        let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
        env_rng.set_stream(1);
        let mut act_rng = ChaCha8Rng::seed_from_u64(seed);
        act_rng.set_stream(2);
        (env_rng, act_rng)
    }

    fn soap_setup(seed: u64, env_name: &str, n: usize) -> (AgentNets, CollectState) {
        let env = make_env(env_name, 4).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let nets = AgentNets::init(AlgoKind::Soap, env.obs_dim(), env.n_actions(), n, &[8, 8], &mut init_rng).unwrap();
        let (env_rng, act_rng) = rngs(seed);
        let state = CollectState::new(env, n, env_rng, act_rng).unwrap();
        (nets, state)
    }

    #[test]
    fn fixed_horizon_yields_exact_length_and_closing_boundary() {
        let (nets, mut state) = soap_setup(0, "cartpole", 3);
        let buf = collect(&mut state, &nets, 97, CollectMode::FixedHorizon).unwrap();
        assert_eq!(buf.len(), 97);
        assert!(*buf.ends().last().unwrap(), "final step must be a boundary");
    }

    #[test]
    fn stored_alpha_and_zeta_replay_exactly() {
        let (nets, mut state) = soap_setup(1, "corridor", 3);
        let buf = collect(&mut state, &nets, 60, CollectMode::FixedHorizon).unwrap();
        let ends = buf.ends();
        for t in 0..buf.len() {
            let (alpha, next_zeta) = forward_step(&buf.zeta[t], &buf.outputs[t], buf.actions[t]).unwrap();
            assert!((alpha - buf.alpha[t]).abs() <= 1e-12);
            if t + 1 < buf.len() {
                let expect: Vec<f64> =
                    if ends[t] { init_zeta(buf.n_options).unwrap() } else { next_zeta };
                for (a, b) in expect.iter().zip(&buf.zeta[t + 1]) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
        // every episode opens with the uniform option distribution
        for t in 0..buf.len() {
            if t == 0 || ends[t - 1] {
                for &z in &buf.zeta[t] {
                    assert!((z - 1.0 / 3.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn corridor_episodes_have_exact_length_and_unit_returns() {
        let (nets, mut state) = soap_setup(2, "corridor", 2);
        let buf = collect(&mut state, &nets, 40, CollectMode::FixedHorizon).unwrap();
        // length 4 corridor: terminals at steps 3, 7, 11, …
        for t in 0..buf.len() {
            assert_eq!(buf.terminated[t], t % 4 == 3, "step {t}");
            assert_eq!(buf.episode_id[t], t / 4);
        }
        assert_eq!(buf.completed_returns.len(), 10);
        assert!(buf.completed_returns.iter().all(|r| r.abs() == 1.0));
    }

    #[test]
    fn to_episode_end_mode_finishes_the_last_episode() {
        let (nets, mut state) = soap_setup(3, "corridor", 3);
        // corridor length 4 with horizon 10 → must run to step 12
        let buf = collect(&mut state, &nets, 10, CollectMode::ToEpisodeEnd).unwrap();
        assert_eq!(buf.len(), 12);
        assert!(buf.terminated[11]);
        assert!(!buf.truncated.iter().any(|&x| x), "no cuts in episode-end mode");
    }

    #[test]
    fn next_values_match_next_step_within_episodes() {
        let (nets, mut state) = soap_setup(4, "cartpole", 3);
        let buf = collect(&mut state, &nets, 50, CollectMode::FixedHorizon).unwrap();
        let ends = buf.ends();
        for t in 0..buf.len() - 1 {
            if !ends[t] {
                assert_eq!(buf.next_values[t], buf.values[t + 1], "step {t}");
            }
        }
        for t in 0..buf.len() {
            if buf.terminated[t] {
                assert!(buf.next_values[t].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn episodes_carry_across_bursts() {
        let (nets, mut state) = soap_setup(5, "cartpole", 3);
        let first = collect(&mut state, &nets, 20, CollectMode::FixedHorizon).unwrap();
        let carried_zeta = state.zeta.clone();
        let second = collect(&mut state, &nets, 20, CollectMode::FixedHorizon).unwrap();
        if !(first.terminated[19] || state.at_episode_start) {
            assert_eq!(second.episode_id[0], first.episode_id[19]);
            assert_eq!(second.zeta[0], carried_zeta);
            // carried ζ is mid-episode, not uniform
            assert!(second.zeta[0].iter().any(|&z| (z - 1.0 / 3.0).abs() > 1e-9));
        }
    }

    #[test]
    fn collection_is_deterministic_per_seed() {
        let (nets, mut s1) = soap_setup(6, "cartpole", 3);
        let (_, mut s2) = soap_setup(6, "cartpole", 3);
        let a = collect(&mut s1, &nets, 64, CollectMode::FixedHorizon).unwrap();
        let b = collect(&mut s2, &nets, 64, CollectMode::FixedHorizon).unwrap();
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.alpha, b.alpha);
    }

    #[test]
    fn dump_parse_round_trip_is_exact() {
        let (nets, mut state) = soap_setup(7, "corridor", 3);
        let buf = collect(&mut state, &nets, 16, CollectMode::FixedHorizon).unwrap();
        let text = buf.dump();
        let back = RolloutBuffer::parse(&text).unwrap();
        assert_eq!(back.len(), buf.len());
        assert_eq!(back.obs, buf.obs);
        assert_eq!(back.actions, buf.actions);
        assert_eq!(back.rewards, buf.rewards);
        assert_eq!(back.terminated, buf.terminated);
        assert_eq!(back.truncated, buf.truncated);
        assert_eq!(back.zeta, buf.zeta);
        assert_eq!(back.alpha, buf.alpha);
        assert_eq!(back.values, buf.values);
        assert_eq!(back.next_values, buf.next_values);
        for t in 0..buf.len() {
            assert_eq!(back.outputs[t].sub_policy, buf.outputs[t].sub_policy);
            assert_eq!(back.outputs[t].transition, buf.outputs[t].transition);
        }
        assert_eq!(back.completed_returns, buf.completed_returns);
        assert_eq!(back.dump(), text);
    }

    #[test]
    fn parse_rejects_malformed_dumps() {
        assert!(RolloutBuffer::parse("rollout v2\n").is_err());
        assert!(RolloutBuffer::parse("bogus\n").is_err());
        let (nets, mut state) = soap_setup(8, "corridor", 2);
        let buf = collect(&mut state, &nets, 8, CollectMode::FixedHorizon).unwrap();
        let broken = buf.dump().replace("alpha", "alpho");
        assert!(RolloutBuffer::parse(&broken).is_err());
    }

    fn ppoc_setup(seed: u64, env_name: &str, n: usize) -> (AgentNets, PpocState) {
        let env = make_env(env_name, 4).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let nets = AgentNets::init(AlgoKind::Ppoc, env.obs_dim(), env.n_actions(), n, &[8, 8], &mut init_rng).unwrap();
        let (env_rng, act_rng) = rngs(seed);
        let state = PpocState::new(env, &nets, env_rng, act_rng).unwrap();
        (nets, state)
    }

    #[test]
    fn ppoc_buffer_quantities_replay_from_networks() {
        let (nets, mut state) = ppoc_setup(9, "cartpole", 4);
        let buf = collect_ppoc(&mut state, &nets, 80).unwrap();
        assert_eq!(buf.len(), 80);
        for t in 0..buf.len() {
            let outputs = nets.policy_tables(&buf.obs[t]).unwrap();
            let expect = outputs.sub(buf.option[t], buf.actions[t]).ln();
            assert!((buf.logp_action[t] - expect).abs() <= 1e-12);
            let q = nets.option_values(&buf.obs[t]).unwrap();
            assert_eq!(buf.q_taken[t], q[buf.option[t]]);
            if buf.terminated[t] {
                assert_eq!(buf.next_q[t], 0.0);
            } else if t + 1 < buf.len() && !buf.truncated[t] {
                assert_eq!(buf.next_option[t], buf.option[t + 1]);
                let qn = nets.option_values(&buf.obs[t + 1]).unwrap();
                assert_eq!(buf.next_q[t], qn[buf.next_option[t]]);
            }
        }
    }

    /// Zero every parameter: logits all 0, so softmax heads are exactly
    /// uniform and sigmoid heads exactly 0.5.
    fn zero_net(net: &mut crate::num::Mlp) {
        for i in 0..net.param_count() {
            *net.param_mut(i) = 0.0;
        }
    }

    /// After zeroing, pin the head biases (the final `out_dim` parameters in
    /// flat order) so the outputs saturate.
    fn pin_head_biases(net: &mut crate::num::Mlp, value: f64) {
        let (count, out) = (net.param_count(), net.out_dim());
        for i in count - out..count {
            *net.param_mut(i) = value;
        }
    }

    #[test]
    fn uniform_policy_balances_action_frequencies() {
        let (mut nets, _) = soap_setup(20, "corridor", 2);
        zero_net(&mut nets.policy);
        let env = make_env("corridor", 4).unwrap();
        let (env_rng, act_rng) = rngs(20);
        let mut state = CollectState::new(env, 2, env_rng, act_rng).unwrap();
        let buf = collect(&mut state, &nets, 10_000, CollectMode::FixedHorizon).unwrap();
        let ones = buf.actions.iter().filter(|&&a| a == 1).count() as f64 / 10_000.0;
        // binomial 3σ around 0.5
        assert!((ones - 0.5).abs() <= 3.0 * (0.25f64 / 10_000.0).sqrt(), "frequency {ones}");
        for t in 0..buf.len() {
            assert!((buf.alpha[t] - 0.5).abs() <= 1e-15);
        }
    }

    #[test]
    fn ppoc_never_terminating_options_stay_constant_per_episode() {
        let (mut nets, _) = ppoc_setup(21, "corridor", 3);
        zero_net(nets.termination.as_mut().unwrap());
        pin_head_biases(nets.termination.as_mut().unwrap(), -50.0);
        let env = make_env("corridor", 4).unwrap();
        let (env_rng, act_rng) = rngs(21);
        let mut state = PpocState::new(env, &nets, env_rng, act_rng).unwrap();
        let buf = collect_ppoc(&mut state, &nets, 200).unwrap();
        for t in 0..buf.len() {
            if !buf.terminated[t] && !buf.truncated[t] {
                assert_eq!(buf.next_option[t], buf.option[t], "step {t}");
            }
            if t > 0 && buf.episode_id[t] == buf.episode_id[t - 1] {
                assert_eq!(buf.option[t], buf.option[t - 1]);
            }
        }
    }

    #[test]
    fn ppoc_always_terminating_uniform_inter_gives_iid_uniform_options() {
        let n = 3;
        let (mut nets, _) = ppoc_setup(22, "cartpole", n);
        zero_net(nets.termination.as_mut().unwrap());
        pin_head_biases(nets.termination.as_mut().unwrap(), 50.0);
        zero_net(nets.inter_option.as_mut().unwrap());
        let env = make_env("cartpole", 4).unwrap();
        let (env_rng, act_rng) = rngs(22);
        let mut state = PpocState::new(env, &nets, env_rng, act_rng).unwrap();
        let steps = 10_000;
        let buf = collect_ppoc(&mut state, &nets, steps).unwrap();
        let p = 1.0 / n as f64;
        let sigma = (p * (1.0 - p) / steps as f64).sqrt();
        for z in 0..n {
            let freq = buf.option.iter().filter(|&&o| o == z).count() as f64 / steps as f64;
            assert!((freq - p).abs() <= 3.0 * sigma, "option {z}: {freq}");
        }
    }

    #[test]
    fn ppoc_options_persist_until_termination_draw() {
        let (nets, mut state) = ppoc_setup(10, "corridor", 3);
        let buf = collect_ppoc(&mut state, &nets, 60).unwrap();
        // ϖ ≈ 0.5 at init, so both held and switched options should occur
        let held = (0..buf.len()).filter(|&t| !buf.terminated[t] && buf.next_option[t] == buf.option[t]).count();
        let switched = (0..buf.len()).filter(|&t| !buf.terminated[t] && buf.next_option[t] != buf.option[t]).count();
        assert!(held > 0 && switched > 0, "held {held} switched {switched}");
    }
}
