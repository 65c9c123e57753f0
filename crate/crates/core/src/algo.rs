//! The four training algorithms over shared rollout data: PPO, PPOC, PPOEM
//! and SOAP. This module holds the shared types (hyperparameters, network
//! bundle, optimizer bundle); per-algorithm losses live in [`loss`], rollout
//! post-processing in [`targets`], and the epoch/minibatch loop in
//! [`update`].

pub mod loss;
pub mod targets;
pub mod update;

use rand::{Rng, RngCore};

use crate::advantage::GaeParams;
use crate::inference::{OptionPolicyOutputs, PROB_FLOOR};
use crate::num::{floor_probs, softmax, Adam, Mlp, MlpGrads};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoKind {
    Ppo,
    Ppoc,
    Ppoem,
    Soap,
}

impl AlgoKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ppo" => Ok(Self::Ppo),
            "ppoc" => Ok(Self::Ppoc),
            "ppoem" => Ok(Self::Ppoem),
            "soap" => Ok(Self::Soap),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ppo => "ppo",
            Self::Ppoc => "ppoc",
            Self::Ppoem => "ppoem",
            Self::Soap => "soap",
        }
    }

    /// Whether collection tracks the option forward distribution ζ
    /// (PPO, PPOEM, SOAP) rather than sampling options (PPOC).
    pub fn tracks_zeta(self) -> bool {
        !matches!(self, Self::Ppoc)
    }
}

impl std::fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Training hyperparameters shared by all four algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub clip_epsilon: f64,
    pub lr: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub horizon: usize,
    pub gae: GaeParams,
    pub n_options: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
    /// Hidden layer widths of every network.
    pub hidden: Vec<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            lr: 3e-4,
            epochs: 10,
            minibatch_size: 64,
            horizon: 2048,
            gae: GaeParams { gamma: 0.99, lambda: 0.95 },
            n_options: 4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_advantage: false,
            hidden: vec![64, 64],
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.clip_epsilon && self.clip_epsilon < 1.0) {
            return Err(Error::Config(format!("clip epsilon must be in (0, 1), got {}", self.clip_epsilon)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if self.n_options == 0 {
            return Err(Error::Config("n_options must be ≥ 1".into()));
        }
        if self.minibatch_size == 0 || self.horizon == 0 {
            return Err(Error::Config("minibatch size and horizon must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        GaeParams::new(self.gae.gamma, self.gae.lambda).map(|_| ())
    }
}

/// All networks one agent owns. Which optional nets exist depends on the
/// algorithm: ζ-tracking algorithms with `n > 1` use the option-transition
/// net; PPOC replaces it with termination and inter-option nets (its value
/// net doubles as the option-value `Q`).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub n_options: usize,
    /// obs → `n_options × n_actions` sub-policy logits.
    pub policy: Mlp,
    /// obs → per-option state value (PPOC: option value Q).
    pub value: Mlp,
    /// obs ⊕ one-hot(action) → `n × n` option-transition logits.
    pub transition: Option<Mlp>,
    /// obs → per-option termination logit (sigmoid).
    pub termination: Option<Mlp>,
    /// obs → fresh-option logits (softmax).
    pub inter_option: Option<Mlp>,
}

impl AgentNets {
    pub fn init<R: Rng>(
        algo: AlgoKind,
        obs_dim: usize,
        n_actions: usize,
        n_options: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if algo == AlgoKind::Ppo && n_options != 1 {
            return Err(Error::Config("PPO is the single-option special case; set n_options = 1".into()));
        }
        let dims = |inp: usize, out: usize| -> Vec<usize> {
            let mut d = vec![inp];
            d.extend_from_slice(hidden);
            d.push(out);
            d
        };
        let policy = Mlp::init(&dims(obs_dim, n_options * n_actions), 0.01, rng)?;
        let value = Mlp::init(&dims(obs_dim, n_options), 1.0, rng)?;
        // The transition head keeps full gain and a sticky diagonal:
        // near-uniform transition rows make the option chain fully mixing,
        // the belief then carries no history, and option-conditioned values
        // never differentiate — the feedback loop that forms memory cannot
        // start from that symmetry. Biasing each row toward its own option
        // makes options temporally extended from the first rollout.
        let transition = match algo {
            AlgoKind::Soap | AlgoKind::Ppoem => {
                let mut net = Mlp::init(&dims(obs_dim + n_actions, n_options * n_options), 1.0, rng)?;
                let head = net.param_count() - n_options * n_options;
                for z in 0..n_options {
                    *net.param_mut(head + z * n_options + z) += 2.0;
                }
                Some(net)
            }
            AlgoKind::Ppo | AlgoKind::Ppoc => None,
        };
        let (termination, inter_option) = if algo == AlgoKind::Ppoc {
            (
                Some(Mlp::init(&dims(obs_dim, n_options), 0.01, rng)?),
                Some(Mlp::init(&dims(obs_dim, n_options), 0.01, rng)?),
            )
        } else {
            (None, None)
        };
        Ok(Self { obs_dim, n_actions, n_options, policy, value, transition, termination, inter_option })
    }

    /// Sub-policy and transition probability tables at one observation, with
    /// the probability floor applied. Without a transition net every
    /// transition row is uniform (exact for `n = 1`, where it is `[1.0]`).
    pub fn policy_tables(&self, obs: &[f64]) -> Result<OptionPolicyOutputs> {
        let (n, na) = (self.n_options, self.n_actions);
        let logits = self.policy.forward(obs)?;
        let mut sub = Vec::with_capacity(n * na);
        for z in 0..n {
            let mut row = softmax(&logits[z * na..(z + 1) * na]);
            floor_probs(&mut row, PROB_FLOOR);
            sub.extend(row);
        }
        let mut transition = vec![1.0 / n as f64; n * na * n];
        if let Some(tnet) = &self.transition {
            for a in 0..na {
                let tl = tnet.forward(&transition_input(obs, a, na))?;
                for z in 0..n {
                    let mut row = softmax(&tl[z * n..(z + 1) * n]);
                    floor_probs(&mut row, PROB_FLOOR);
                    transition[(z * na + a) * n..(z * na + a) * n + n].copy_from_slice(&row);
                }
            }
        }
        OptionPolicyOutputs::new(n, na, sub, transition)
    }

    /// Per-option state values `V(s, ·)` (PPOC: `Q(s, ·)`).
    pub fn option_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.value.forward(obs)
    }

    /// Per-option termination probabilities `ϖ(s, ·)` (PPOC only).
    pub fn termination_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let net = self.termination.as_ref().ok_or_else(|| Error::Usage("no termination net".into()))?;
        Ok(net.forward(obs)?.into_iter().map(sigmoid).collect())
    }

    /// Fresh-option distribution `π(z|s)` (PPOC only).
    pub fn inter_option_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let net = self.inter_option.as_ref().ok_or_else(|| Error::Usage("no inter-option net".into()))?;
        let mut row = softmax(&net.forward(obs)?);
        floor_probs(&mut row, PROB_FLOOR);
        Ok(row)
    }

    pub fn all_finite(&self) -> bool {
        self.policy.all_finite()
            && self.value.all_finite()
            && self.transition.as_ref().map_or(true, Mlp::all_finite)
            && self.termination.as_ref().map_or(true, Mlp::all_finite)
            && self.inter_option.as_ref().map_or(true, Mlp::all_finite)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Transition-net input: observation with the realized action appended
/// one-hot.
pub fn transition_input(obs: &[f64], action: usize, n_actions: usize) -> Vec<f64> {
    let mut input = Vec::with_capacity(obs.len() + n_actions);
    input.extend_from_slice(obs);
    for a in 0..n_actions {
        input.push(if a == action { 1.0 } else { 0.0 });
    }
    input
}

/// Gradient accumulators matching [`AgentNets`].
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub policy: MlpGrads,
    pub value: MlpGrads,
    pub transition: Option<MlpGrads>,
    pub termination: Option<MlpGrads>,
    pub inter_option: Option<MlpGrads>,
}

impl NetGrads {
    pub fn zeros(nets: &AgentNets) -> Self {
        Self {
            policy: nets.policy.zero_grads(),
            value: nets.value.zero_grads(),
            transition: nets.transition.as_ref().map(Mlp::zero_grads),
            termination: nets.termination.as_ref().map(Mlp::zero_grads),
            inter_option: nets.inter_option.as_ref().map(Mlp::zero_grads),
        }
    }

    fn parts_mut(&mut self) -> impl Iterator<Item = &mut MlpGrads> {
        [
            Some(&mut self.policy),
            Some(&mut self.value),
            self.transition.as_mut(),
            self.termination.as_mut(),
            self.inter_option.as_mut(),
        ]
        .into_iter()
        .flatten()
    }

    fn parts(&self) -> impl Iterator<Item = &MlpGrads> {
        [Some(&self.policy), Some(&self.value), self.transition.as_ref(), self.termination.as_ref(), self.inter_option.as_ref()]
            .into_iter()
            .flatten()
    }

    /// Global L2 norm across every parameter group.
    pub fn global_norm(&self) -> f64 {
        self.parts().map(MlpGrads::sq_norm).sum::<f64>().sqrt()
    }

    /// Scale all gradients so the global norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in self.parts_mut() {
                g.scale(s);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.parts().all(MlpGrads::all_finite)
    }
}

/// One Adam state per network in the bundle.
#[derive(Debug, Clone)]
pub struct Optimizers {
    pub policy: Adam,
    pub value: Adam,
    pub transition: Option<Adam>,
    pub termination: Option<Adam>,
    pub inter_option: Option<Adam>,
}

impl Optimizers {
    pub fn new(nets: &AgentNets, lr: f64) -> Self {
        Self {
            policy: Adam::new(nets.policy.param_count(), lr),
            value: Adam::new(nets.value.param_count(), lr),
            transition: nets.transition.as_ref().map(|n| Adam::new(n.param_count(), lr)),
            termination: nets.termination.as_ref().map(|n| Adam::new(n.param_count(), lr)),
            inter_option: nets.inter_option.as_ref().map(|n| Adam::new(n.param_count(), lr)),
        }
    }

    /// Apply one Adam step to every parameter group present.
    pub fn step(&mut self, nets: &mut AgentNets, grads: &NetGrads) -> Result<()> {
        self.policy.step(&mut nets.policy, &grads.policy)?;
        self.value.step(&mut nets.value, &grads.value)?;
        if let (Some(opt), Some(net), Some(g)) = (self.transition.as_mut(), nets.transition.as_mut(), grads.transition.as_ref()) {
            opt.step(net, g)?;
        }
        if let (Some(opt), Some(net), Some(g)) = (self.termination.as_mut(), nets.termination.as_mut(), grads.termination.as_ref()) {
            opt.step(net, g)?;
        }
        if let (Some(opt), Some(net), Some(g)) = (self.inter_option.as_mut(), nets.inter_option.as_mut(), grads.inter_option.as_ref()) {
            opt.step(net, g)?;
        }
        Ok(())
    }
}

/// Draw an index from a probability vector via inverse CDF.
pub fn sample_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Marginal action distribution `m(a) = Σ_z ζ(z)·π(a|s,z)`.
pub fn marginal_action_probs(zeta: &[f64], outputs: &OptionPolicyOutputs) -> Vec<f64> {
    let mut m = vec![0.0; outputs.n_actions];
    for z in 0..outputs.n_options {
        for (a, slot) in m.iter_mut().enumerate() {
            *slot += zeta[z] * outputs.sub(z, a);
        }
    }
    m
}

/// Chain `d loss / d probs` of one softmax row back to its logits:
/// `d L/d logit_b = p_b·(g_b − Σ_a p_a·g_a)`.
pub fn softmax_chain(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(dprobs).map(|(p, g)| p * g).sum();
    probs.iter().zip(dprobs).map(|(p, g)| p * (g - dot)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{finite_diff_grad, rel_vec_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hyperparams_validation() {
        let mut hp = HyperParams::default();
        assert!(hp.validate().is_ok());
        hp.clip_epsilon = 1.5;
        assert!(hp.validate().is_err());
        hp = HyperParams { epochs: 0, ..HyperParams::default() };
        assert!(hp.validate().is_err());
        hp = HyperParams { n_options: 0, ..HyperParams::default() };
        assert!(hp.validate().is_err());
    }

    #[test]
    fn agent_nets_shapes_per_algo() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let soap = AgentNets::init(AlgoKind::Soap, 3, 2, 4, &[16, 16], &mut rng).unwrap();
        assert!(soap.transition.is_some() && soap.termination.is_none());
        assert_eq!(soap.policy.out_dim(), 8);
        assert_eq!(soap.transition.as_ref().unwrap().in_dim(), 5);
        assert_eq!(soap.transition.as_ref().unwrap().out_dim(), 16);

        let ppoc = AgentNets::init(AlgoKind::Ppoc, 3, 2, 4, &[16, 16], &mut rng).unwrap();
        assert!(ppoc.transition.is_none() && ppoc.termination.is_some() && ppoc.inter_option.is_some());

        let ppo = AgentNets::init(AlgoKind::Ppo, 3, 2, 1, &[16, 16], &mut rng).unwrap();
        assert!(ppo.transition.is_none());
        assert!(AgentNets::init(AlgoKind::Ppo, 3, 2, 4, &[16], &mut rng).is_err());
    }

    #[test]
    fn policy_tables_are_valid_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nets = AgentNets::init(AlgoKind::Soap, 3, 2, 4, &[8, 8], &mut rng).unwrap();
        let outputs = nets.policy_tables(&[1.0, 0.0, 0.0]).unwrap();
        outputs.validate().unwrap();
        // near-uniform at init thanks to the small policy-head gain
        for z in 0..4 {
            for a in 0..2 {
                assert!((outputs.sub(z, a) - 0.5).abs() < 0.05);
            }
        }
    }

    #[test]
    fn ppo_tables_have_exact_unit_transition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nets = AgentNets::init(AlgoKind::Ppo, 3, 2, 1, &[8], &mut rng).unwrap();
        let outputs = nets.policy_tables(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(outputs.trans(0, 0, 0), 1.0);
        assert_eq!(outputs.trans(0, 1, 0), 1.0);
    }

    #[test]
    fn sigmoid_is_stable_and_correct() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((sigmoid(709.0) - 1.0).abs() < 1e-12);
        assert!(sigmoid(-709.0) > 0.0);
        assert!((sigmoid(1.5) + sigmoid(-1.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sample_categorical_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probs = [0.2, 0.5, 0.3];
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[sample_categorical(&probs, &mut rng)] += 1;
        }
        for i in 0..3 {
            let freq = counts[i] as f64 / 30_000.0;
            // 4σ of a binomial proportion
            let sigma = (probs[i] * (1.0 - probs[i]) / 30_000.0).sqrt();
            assert!((freq - probs[i]).abs() < 4.0 * sigma, "option {i}: {freq} vs {}", probs[i]);
        }
    }

    #[test]
    fn softmax_chain_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // embed a softmax row in a single-layer net and differentiate
        // an arbitrary linear functional of the probabilities
        let mut net = Mlp::init(&[3, 3], 1.0, &mut rng).unwrap();
        let x = [0.3, -0.5, 0.8];
        let coeff = [0.7, -1.2, 0.4];
        let objective = |n: &Mlp| {
            let p = softmax(&n.forward(&x).unwrap());
            p.iter().zip(&coeff).map(|(p, c)| p * c).sum::<f64>()
        };
        let probs = softmax(&net.forward(&x).unwrap());
        let dlogits = softmax_chain(&probs, &coeff);
        let cache = net.forward_cached(&x).unwrap();
        let mut grads = net.zero_grads();
        net.backward(&cache, &dlogits, &mut grads).unwrap();
        let fd = finite_diff_grad(&mut net, 1e-5, objective).unwrap();
        assert!(rel_vec_err(&grads.flat(), &fd) < 1e-7);
    }

    #[test]
    fn grad_clip_bounds_global_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nets = AgentNets::init(AlgoKind::Soap, 3, 2, 2, &[4], &mut rng).unwrap();
        let mut grads = NetGrads::zeros(&nets);
        for g in grads.policy.w.iter_mut().chain(grads.value.w.iter_mut()) {
            for v in g.iter_mut() {
                *v = 3.0;
            }
        }
        assert!(grads.global_norm() > 0.5);
        grads.clip_global_norm(0.5);
        assert!((grads.global_norm() - 0.5).abs() < 1e-12);
        // already-small gradients pass through untouched
        let mut small = NetGrads::zeros(&nets);
        small.policy.b[0][0] = 0.01;
        small.clip_global_norm(0.5);
        assert_eq!(small.policy.b[0][0], 0.01);
    }
}
