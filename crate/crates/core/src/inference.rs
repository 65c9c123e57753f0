//! Scaled forward-backward inference over latent options.
//!
//! Options form a hidden chain: at step `t` the agent holds option `z_t`,
//! emits an action from the sub-policy `π_θ(a|s,z)`, and moves to `z_{t+1}`
//! via the transition policy `π_ψ(z'|s,a,z)`. Conditioning on the realized
//! actions, the forward distribution `ζ(z_t)` and per-step action probability
//! `α_t` are maintained online; the backward feedback `β` is computed in
//! hindsight over complete episodes. Dividing both recursions by `α_t` keeps
//! every quantity O(1), so 200+ step episodes stay well-scaled in plain
//! probability space (no log-space needed).

use crate::{Error, Result};

/// Probability floor applied to policy tables after softmax so that ratios
/// and divisions in the recursions never see exact zeros.
pub const PROB_FLOOR: f64 = 1e-12;

/// Smallest admissible action probability `α`; anything below is reported as
/// numerical degeneracy rather than propagated.
pub const ALPHA_FLOOR: f64 = 1e-30;

/// One step's policy tables: the sub-policy `π_θ(a|s,z)` (`n × A`) and the
/// option transition `π_ψ(z'|s,a,z)` (`n × A × n`), both row-stochastic.
/// Their product is the joint option policy `p(a, z'|s, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionPolicyOutputs {
    pub n_options: usize,
    pub n_actions: usize,
    /// `n_options × n_actions`, row-major.
    pub sub_policy: Vec<f64>,
    /// `n_options × n_actions × n_options`; index `[z][a][z']`.
    pub transition: Vec<f64>,
}

impl OptionPolicyOutputs {
    pub fn new(n_options: usize, n_actions: usize, sub_policy: Vec<f64>, transition: Vec<f64>) -> Result<Self> {
        let out = Self { n_options, n_actions, sub_policy, transition };
        out.validate()?;
        Ok(out)
    }

    pub fn sub(&self, z: usize, a: usize) -> f64 {
        self.sub_policy[z * self.n_actions + a]
    }

    pub fn trans(&self, z: usize, a: usize, z2: usize) -> f64 {
        self.transition[(z * self.n_actions + a) * self.n_options + z2]
    }

    /// Joint option policy `p(a, z'|s, z) = π_θ(a|s,z) · π_ψ(z'|s,a,z)`.
    pub fn joint(&self, z: usize, a: usize, z2: usize) -> f64 {
        self.sub(z, a) * self.trans(z, a, z2)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, na) = (self.n_options, self.n_actions);
        if n == 0 || na == 0 || self.sub_policy.len() != n * na || self.transition.len() != n * na * n {
            return Err(Error::InvalidInput("policy table shapes inconsistent".into()));
        }
        for z in 0..n {
            let row = &self.sub_policy[z * na..(z + 1) * na];
            if row.iter().any(|&p| !(p > 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!("sub-policy row {z} not a positive distribution")));
            }
            for a in 0..na {
                let base = (z * na + a) * n;
                let row = &self.transition[base..base + n];
                if row.iter().any(|&p| !(p > 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidInput(format!(
                        "transition row (z={z}, a={a}) not a positive distribution"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Uniform initial option distribution.
pub fn init_zeta(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("option count must be ≥ 1".into()));
    }
    Ok(vec![1.0 / n as f64; n])
}

/// One forward update given the realized action:
/// `α = Σ_z ζ(z)·π_θ(a|s,z)` and
/// `ζ'(z') = Σ_z ζ(z)·p(a, z'|s, z) / α`.
///
/// The division by `α` makes `ζ'` sum to 1 by construction.
pub fn forward_step(zeta: &[f64], outputs: &OptionPolicyOutputs, action: usize) -> Result<(f64, Vec<f64>)> {
    let n = outputs.n_options;
    if zeta.len() != n {
        return Err(Error::InvalidInput(format!("zeta length {} != n_options {n}", zeta.len())));
    }
    if action >= outputs.n_actions {
        return Err(Error::InvalidInput(format!("action {action} out of range")));
    }
    let mut alpha = 0.0;
    for z in 0..n {
        alpha += zeta[z] * outputs.sub(z, action);
    }
    if !(alpha.is_finite() && alpha >= ALPHA_FLOOR) {
        return Err(Error::Numerical(format!("action probability alpha = {alpha:e} below floor")));
    }
    let mut next = vec![0.0; n];
    for z in 0..n {
        let w = zeta[z] * outputs.sub(z, action) / alpha;
        for (z2, nx) in next.iter_mut().enumerate() {
            *nx += w * outputs.trans(z, action, z2);
        }
    }
    Ok((alpha, next))
}

/// β passes for a contiguous span of steps, episode boundaries included.
#[derive(Debug, Clone)]
pub struct BetaPass {
    /// `beta[t]` = β(z_t): normalized likelihood of the future trajectory
    /// given the option held *entering* step `t`.
    pub beta: Vec<Vec<f64>>,
    /// `beta_next[t]` = β(z_{t+1}): the same quantity for the option *after*
    /// step `t`'s transition — all-ones at each episode's final step. This is
    /// the factor the joint posterior at step `t` needs.
    pub beta_next: Vec<Vec<f64>>,
}

/// Reverse sweep computing the option backward feedback
/// `β(z_t) = Σ_{z'} β(z_{t+1}=z')·p(a_t, z'|s_t, z_t) / α_t`
/// with boundary `β = 1` at every episode end. `ends[t]` marks the last step
/// of each episode (terminal or truncation — hindsight inference cannot look
/// past either); the final step of the span must be an end.
pub fn backward_pass(
    outputs: &[OptionPolicyOutputs],
    actions: &[usize],
    alphas: &[f64],
    ends: &[bool],
) -> Result<BetaPass> {
    let t_len = outputs.len();
    if actions.len() != t_len || alphas.len() != t_len || ends.len() != t_len {
        return Err(Error::InvalidInput("backward_pass inputs disagree on length".into()));
    }
    if t_len == 0 {
        return Ok(BetaPass { beta: vec![], beta_next: vec![] });
    }
    if !ends[t_len - 1] {
        return Err(Error::InvalidInput("backward_pass span must end on an episode boundary".into()));
    }
    let n = outputs[0].n_options;
    let mut beta = vec![Vec::new(); t_len];
    let mut beta_next = vec![Vec::new(); t_len];
    for t in (0..t_len).rev() {
        let bn = if ends[t] { vec![1.0; n] } else { beta[t + 1].clone() };
        let mut b = vec![0.0; n];
        for z in 0..n {
            let mut acc = 0.0;
            for z2 in 0..n {
                acc += bn[z2] * outputs[t].joint(z, actions[t], z2);
            }
            b[z] = acc / alphas[t];
            if !b[z].is_finite() {
                return Err(Error::Numerical(format!("non-finite beta at step {t}, option {z}")));
            }
        }
        beta[t] = b;
        beta_next[t] = bn;
    }
    Ok(BetaPass { beta, beta_next })
}

/// Joint posterior over consecutive options given the whole trajectory:
/// `p(z_t, z_{t+1}|τ) = p(a_t, z_{t+1}|s_t, z_t) · ζ(z_t) · β(z_{t+1}) / α_t`.
/// Returned flat `n × n`, row index `z_t`. Sums to 1.
pub fn joint_posterior(
    zeta: &[f64],
    beta_next: &[f64],
    outputs: &OptionPolicyOutputs,
    action: usize,
    alpha: f64,
) -> Result<Vec<f64>> {
    let n = outputs.n_options;
    if zeta.len() != n || beta_next.len() != n {
        return Err(Error::InvalidInput("zeta/beta length mismatch".into()));
    }
    let mut joint = vec![0.0; n * n];
    for z in 0..n {
        for z2 in 0..n {
            joint[z * n + z2] = outputs.joint(z, action, z2) * zeta[z] * beta_next[z2] / alpha;
        }
    }
    let total: f64 = joint.iter().sum();
    if !(total.is_finite() && (total - 1.0).abs() <= 1e-6) {
        return Err(Error::Inconsistent(format!("joint posterior sums to {total}, expected 1")));
    }
    Ok(joint)
}

/// Row-normalize the joint posterior into the option transition posterior
/// `p(z_{t+1}|z_t, τ)`. Rows whose marginal vanishes (the option is
/// unreachable) fall back to uniform so downstream weighted sums stay finite;
/// such rows carry zero posterior mass anyway.
pub fn option_transition_posterior(joint: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(joint.len(), n * n, "joint posterior must be n × n");
    let mut out = vec![0.0; n * n];
    for z in 0..n {
        let row = &joint[z * n..(z + 1) * n];
        let total: f64 = row.iter().sum();
        if total > 1e-300 {
            for z2 in 0..n {
                out[z * n + z2] = row[z2] / total;
            }
        } else {
            for z2 in 0..n {
                out[z * n + z2] = 1.0 / n as f64;
            }
        }
    }
    out
}
