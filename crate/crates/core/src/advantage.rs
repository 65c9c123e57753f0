//! Advantage estimators: scalar GAE, option-conditioned GAE, and the GOA
//! (generalized option advantage) reverse recursion with its option utility
//! and policy-gradient weighting tables.
//!
//! Episode boundaries carry two distinct meanings and are masked separately
//! throughout: a *terminal* step has no successor value (the value bootstrap
//! is dropped), while a *truncated* step still bootstraps from the next
//! state's value but no advantage may chain across the cut. Spans passed in
//! may contain several episodes back to back.

use crate::inference::OptionPolicyOutputs;
use crate::{Error, Result};

/// Discount γ and GAE trace parameter λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeParams {
    pub gamma: f64,
    pub lambda: f64,
}

impl GaeParams {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1), got {gamma}")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda must be in [0, 1], got {lambda}")));
        }
        Ok(Self { gamma, lambda })
    }
}

/// Scalar GAE over a span with a bootstrap value at the end:
/// `A_t = Σ_{t'≥t} (γλ)^{t'−t} δ_{t'}` with
/// `δ_t = r_t + γ(1−d_t)V(s_{t+1}) − V(s_t)`, computed by reverse recursion
/// and reset across done boundaries. `values` has length `T + 1`.
pub fn scalar_gae(rewards: &[f64], values: &[f64], dones: &[bool], params: &GaeParams) -> Result<Vec<f64>> {
    let t_len = rewards.len();
    if values.len() != t_len + 1 || dones.len() != t_len {
        return Err(Error::Config(format!(
            "scalar_gae length mismatch: {} rewards, {} values, {} dones",
            t_len,
            values.len(),
            dones.len()
        )));
    }
    let next_values = &values[1..];
    let truncated = vec![false; t_len];
    scalar_gae_with_resets(rewards, &values[..t_len], next_values, dones, &truncated, params)
}

/// Scalar GAE with explicit per-step successor values and separate terminal /
/// truncation masks — the trainer's entry point, where a truncated step's
/// `next_values[t]` holds the value of the pre-reset state.
pub fn scalar_gae_with_resets(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    params: &GaeParams,
) -> Result<Vec<f64>> {
    let t_len = rewards.len();
    if [values.len(), next_values.len(), terminated.len(), truncated.len()].iter().any(|&l| l != t_len) {
        return Err(Error::Config("scalar_gae_with_resets length mismatch".into()));
    }
    let mut advantages = vec![0.0; t_len];
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        let vmask = if terminated[t] { 0.0 } else { 1.0 };
        let cmask = if terminated[t] || truncated[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + params.gamma * vmask * next_values[t] - values[t];
        acc = delta + params.gamma * params.lambda * cmask * acc;
        advantages[t] = acc;
    }
    Ok(advantages)
}

/// Option-conditioned advantages for one span.
#[derive(Debug, Clone)]
pub struct OptionAdvantages {
    pub n_options: usize,
    /// `a_pair[t]` is flat `n × n`: `A_t(z_t, z_{t+1})`.
    pub a_pair: Vec<Vec<f64>>,
    /// `a_opt[t][z]` = `A_t(z_t)`: the transition-weighted row reduction of
    /// `a_pair`.
    pub a_opt: Vec<Vec<f64>>,
    /// `v_target[t][z]` = `V(s_t, z) + A_t(z)`, from unnormalized advantages.
    pub v_target: Vec<Vec<f64>>,
}

/// Option-conditioned GAE:
/// `A_t(z,z') = r_t + γ(1−d_t)V(s_{t+1},z') − V(s_t,z) + λγ(1−d_t)A_{t+1}(z')`
/// reduced by per-step transition weights `w_t(z'|z)` (rows over `z'`):
/// `A_t(z) = Σ_{z'} w_t(z'|z)·A_t(z,z')`, boundary `A_T = 0`.
///
/// The weights decide the estimator: the hindsight posterior `p(z'|z, τ)`
/// gives the EM-style (PPOEM) variant, the transition policy
/// `π_ψ(z'|s_t,a_t,z_t)` the SOAP variant. `option_values` has `T + 1` rows.
pub fn option_gae(
    rewards: &[f64],
    option_values: &[Vec<f64>],
    dones: &[bool],
    transition_weights: &[Vec<f64>],
    params: &GaeParams,
) -> Result<OptionAdvantages> {
    let t_len = rewards.len();
    if option_values.len() != t_len + 1 || dones.len() != t_len || transition_weights.len() != t_len {
        return Err(Error::Config("option_gae length mismatch".into()));
    }
    let truncated = vec![false; t_len];
    option_gae_with_resets(
        rewards,
        &option_values[..t_len],
        &option_values[1..],
        dones,
        &truncated,
        transition_weights,
        params,
    )
}

/// Option-conditioned GAE with explicit successor values and separate
/// terminal / truncation masks (see [`scalar_gae_with_resets`]).
pub fn option_gae_with_resets(
    rewards: &[f64],
    values: &[Vec<f64>],
    next_values: &[Vec<f64>],
    terminated: &[bool],
    truncated: &[bool],
    transition_weights: &[Vec<f64>],
    params: &GaeParams,
) -> Result<OptionAdvantages> {
    let t_len = rewards.len();
    if [values.len(), next_values.len(), terminated.len(), truncated.len(), transition_weights.len()]
        .iter()
        .any(|&l| l != t_len)
    {
        return Err(Error::Config("option_gae_with_resets length mismatch".into()));
    }
    if t_len == 0 {
        return Err(Error::Config("option_gae needs at least one step".into()));
    }
    let n = values[0].len();
    for (t, w) in transition_weights.iter().enumerate() {
        if w.len() != n * n {
            return Err(Error::InvalidInput(format!("transition weight table at step {t} is not n × n")));
        }
        for z in 0..n {
            let s: f64 = w[z * n..(z + 1) * n].iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "transition weight row (t={t}, z={z}) sums to {s}, expected 1"
                )));
            }
        }
    }

    let mut a_pair = vec![vec![0.0; n * n]; t_len];
    let mut a_opt = vec![vec![0.0; n]; t_len];
    let mut v_target = vec![vec![0.0; n]; t_len];
    let mut a_next = vec![0.0; n];
    for t in (0..t_len).rev() {
        let vmask = if terminated[t] { 0.0 } else { 1.0 };
        let cmask = if terminated[t] || truncated[t] { 0.0 } else { 1.0 };
        for z2 in 0..n {
            // per-z' tail shared by every row z
            let tail = params.gamma * vmask * next_values[t][z2]
                + params.gamma * params.lambda * cmask * a_next[z2];
            for z in 0..n {
                a_pair[t][z * n + z2] = rewards[t] + tail - values[t][z];
            }
        }
        for z in 0..n {
            let mut acc = 0.0;
            for z2 in 0..n {
                acc += transition_weights[t][z * n + z2] * a_pair[t][z * n + z2];
            }
            a_opt[t][z] = acc;
            v_target[t][z] = values[t][z] + acc;
        }
        a_next.copy_from_slice(&a_opt[t]);
    }
    Ok(OptionAdvantages { n_options: n, a_pair, a_opt, v_target })
}

/// GOA recursion outputs, per step.
#[derive(Debug, Clone)]
pub struct Goa {
    /// `a_goa[t][z']`: the generalized option advantage attached to arriving
    /// in option `z'` after step `t`.
    pub a_goa: Vec<Vec<f64>>,
    /// `utility[t][z]` = `Σ_{z'} a_goa[t][z']·p(a_t, z'|s_t, z) / α_t`.
    pub utility: Vec<Vec<f64>>,
    /// `weighting[t]` flat `n × n`: `W(z, z') = a_goa[t][z']·ζ_t(z)/α_t`,
    /// the coefficient of `∇p(a_t, z'|s_t, z)` in the analytic gradient.
    pub weighting: Vec<Vec<f64>>,
}

/// Reverse sweep computing the generalized option advantage
/// `A^GOA_t(z') = Σ_z A_t(z)ζ_t(z) + (1−d_t)[U_{t+1}(z') − Σ_{z''} U_{t+1}(z'')ζ_{t+1}(z'')]`
/// together with the option utility `U` and the policy-gradient weighting
/// `W`. The utility computed at step `t + 1` feeds the advantage at step `t`;
/// its ζ-centering uses the step-`t+1` option distribution; both vanish at
/// episode boundaries (`ends[t]` = terminal or truncated).
pub fn goa_backward(
    a_opt: &[Vec<f64>],
    zetas: &[Vec<f64>],
    outputs: &[OptionPolicyOutputs],
    actions: &[usize],
    alphas: &[f64],
    ends: &[bool],
) -> Result<Goa> {
    let t_len = a_opt.len();
    if [zetas.len(), outputs.len(), actions.len(), alphas.len(), ends.len()].iter().any(|&l| l != t_len) {
        return Err(Error::Config("goa_backward length mismatch".into()));
    }
    if t_len == 0 {
        return Err(Error::Config("goa_backward needs at least one step".into()));
    }
    let n = outputs[0].n_options;
    let mut a_goa = vec![vec![0.0; n]; t_len];
    let mut utility = vec![vec![0.0; n]; t_len];
    let mut weighting = vec![vec![0.0; n * n]; t_len];
    let mut u_next = vec![0.0; n];
    for t in (0..t_len).rev() {
        let base: f64 = (0..n).map(|z| a_opt[t][z] * zetas[t][z]).sum();
        if t == t_len - 1 || ends[t] {
            for z2 in 0..n {
                a_goa[t][z2] = base;
            }
        } else {
            let u_mean: f64 = (0..n).map(|z| u_next[z] * zetas[t + 1][z]).sum();
            for z2 in 0..n {
                a_goa[t][z2] = base + u_next[z2] - u_mean;
            }
        }
        for z in 0..n {
            let mut acc = 0.0;
            for z2 in 0..n {
                acc += a_goa[t][z2] * outputs[t].joint(z, actions[t], z2);
            }
            utility[t][z] = acc / alphas[t];
            if !utility[t][z].is_finite() {
                return Err(Error::Numerical(format!("non-finite option utility at step {t}")));
            }
        }
        for z in 0..n {
            let w = zetas[t][z] / alphas[t];
            for z2 in 0..n {
                weighting[t][z * n + z2] = a_goa[t][z2] * w;
            }
        }
        u_next.copy_from_slice(&utility[t]);
    }
    Ok(Goa { a_goa, utility, weighting })
}
