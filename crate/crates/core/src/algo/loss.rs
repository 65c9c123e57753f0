//! Minibatch losses with hand-derived analytic gradients.
//!
//! Conventions shared by all four algorithms:
//! - losses are means over the index set; `total` is what training
//!   differentiates: `policy + value_coef·value + aux − entropy_coef·entropy`
//!   (`value` and `entropy` are reported unscaled);
//! - clipped-minimum branches: for `min(x·A, clip(x)·A)` the unclipped branch
//!   carries gradient iff `A ≥ 0 ∧ x ≤ hi` or `A < 0 ∧ x ≥ lo`, else the
//!   gradient is zero;
//! - softmax rows are chained through [`softmax_chain`], sigmoids through
//!   `σ' = σ(1−σ)`; value heads are linear.

use super::targets::{PpoTargets, PpocTargets, PpoemTargets, SoapTargets};
use super::{sigmoid, softmax_chain, transition_input, AgentNets, HyperParams, NetGrads};
use crate::inference::PROB_FLOOR;
use crate::num::{floor_probs, softmax, MlpCache};
use crate::rollout::{PpocBuffer, RolloutBuffer};
use crate::{Error, Result};

/// Batch-mean loss summary.
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchLoss {
    /// Negated policy surrogate.
    pub policy: f64,
    /// Unscaled value regression error.
    pub value: f64,
    /// Unscaled entropy bonus term.
    pub entropy: f64,
    /// PPOC termination + inter-option terms; zero for other algorithms.
    pub aux: f64,
    /// The differentiated objective.
    pub total: f64,
    /// Fraction of surrogate cells where the clip bound is exceeded.
    pub clip_frac: f64,
}

impl BatchLoss {
    fn finish(mut self, hp: &HyperParams, clip: usize, cells: usize) -> Result<Self> {
        self.total = self.policy + hp.value_coef * self.value + self.aux - hp.entropy_coef * self.entropy;
        self.clip_frac = clip as f64 / cells.max(1) as f64;
        if !self.total.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss: {self:?}")));
        }
        Ok(self)
    }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 }).sum::<f64>()
}

fn check_idx(idx: &[usize], len: usize) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::InvalidInput("empty minibatch".into()));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= len) {
        return Err(Error::InvalidInput(format!("minibatch index {bad} out of range {len}")));
    }
    Ok(())
}

/// Fresh forward pass for one ζ-algorithm sample: floored sub-policy table,
/// floored realized-action transition rows, and option values.
struct ZetaEval {
    pol_cache: MlpCache,
    /// `n × n_actions` flat.
    sub: Vec<f64>,
    tr_cache: Option<MlpCache>,
    /// `n × n` flat rows `p(z'|s, a_t, z)`.
    tr: Vec<f64>,
    val_cache: MlpCache,
    values: Vec<f64>,
}

fn eval_zeta(nets: &AgentNets, obs: &[f64], action: usize) -> Result<ZetaEval> {
    let (n, na) = (nets.n_options, nets.n_actions);
    let pol_cache = nets.policy.forward_cached(obs)?;
    let mut sub = vec![0.0; n * na];
    for z in 0..n {
        let mut row = softmax(&pol_cache.output()[z * na..(z + 1) * na]);
        floor_probs(&mut row, PROB_FLOOR);
        sub[z * na..(z + 1) * na].copy_from_slice(&row);
    }
    let (tr_cache, tr) = match &nets.transition {
        Some(tnet) => {
            let cache = tnet.forward_cached(&transition_input(obs, action, na))?;
            let mut tr = vec![0.0; n * n];
            for z in 0..n {
                let mut row = softmax(&cache.output()[z * n..(z + 1) * n]);
                floor_probs(&mut row, PROB_FLOOR);
                tr[z * n..(z + 1) * n].copy_from_slice(&row);
            }
            (Some(cache), tr)
        }
        None => (None, vec![1.0 / n as f64; n * n]),
    };
    let val_cache = nets.value.forward_cached(obs)?;
    let values = val_cache.output().to_vec();
    Ok(ZetaEval { pol_cache, sub, tr_cache, tr, val_cache, values })
}

/// Push per-probability gradients of one sample through the softmax rows and
/// into the parameter accumulators, scaled by the batch weight.
fn apply_zeta_grads(
    nets: &AgentNets,
    ev: &ZetaEval,
    dsub: &[f64],
    dtr: &[f64],
    dval: &[f64],
    scale: f64,
    grads: &mut NetGrads,
) -> Result<()> {
    let (n, na) = (nets.n_options, nets.n_actions);
    let mut dlogits = vec![0.0; n * na];
    for z in 0..n {
        let dl = softmax_chain(&ev.sub[z * na..(z + 1) * na], &dsub[z * na..(z + 1) * na]);
        for (a, v) in dl.iter().enumerate() {
            dlogits[z * na + a] = v * scale;
        }
    }
    nets.policy.backward(&ev.pol_cache, &dlogits, &mut grads.policy)?;
    if let (Some(tnet), Some(cache), Some(tgrads)) = (&nets.transition, &ev.tr_cache, grads.transition.as_mut()) {
        let mut dtl = vec![0.0; n * n];
        for z in 0..n {
            let dl = softmax_chain(&ev.tr[z * n..(z + 1) * n], &dtr[z * n..(z + 1) * n]);
            for (z2, v) in dl.iter().enumerate() {
                dtl[z * n + z2] = v * scale;
            }
        }
        tnet.backward(cache, &dtl, tgrads)?;
    }
    let dv: Vec<f64> = dval.iter().map(|v| v * scale).collect();
    nets.value.backward(&ev.val_cache, &dv, &mut grads.value)?;
    Ok(())
}

/// Clipped-ratio surrogate on the single sub-policy, plus value regression
/// and an entropy bonus.
pub fn ppo_loss(
    nets: &AgentNets,
    buf: &RolloutBuffer,
    targets: &PpoTargets,
    idx: &[usize],
    hp: &HyperParams,
    mut grads: Option<&mut NetGrads>,
) -> Result<BatchLoss> {
    check_idx(idx, buf.len())?;
    if nets.n_options != 1 || buf.n_options != 1 {
        return Err(Error::Config("the ratio-clip algorithm runs with exactly one option".into()));
    }
    let na = nets.n_actions;
    let eps = hp.clip_epsilon;
    let scale = 1.0 / idx.len() as f64;
    let mut out = BatchLoss::default();
    let (mut clip, mut cells) = (0usize, 0usize);
    for &t in idx {
        let ev = eval_zeta(nets, &buf.obs[t], buf.actions[t])?;
        let a = buf.actions[t];
        let adv = targets.adv[t];
        let p_old = buf.alpha[t];
        let p_new = ev.sub[a];
        let rho = p_new / p_old;
        let surrogate = (rho * adv).min(rho.clamp(1.0 - eps, 1.0 + eps) * adv);
        out.policy -= surrogate * scale;
        if (rho - 1.0).abs() > eps {
            clip += 1;
        }
        cells += 1;
        let vdiff = ev.values[0] - targets.v_target[t];
        out.value += vdiff * vdiff * scale;
        out.entropy += entropy(&ev.sub) * scale;
        if let Some(g) = grads.as_deref_mut() {
            let mut dsub = vec![0.0; na];
            let active = (adv >= 0.0 && rho <= 1.0 + eps) || (adv < 0.0 && rho >= 1.0 - eps);
            if active {
                dsub[a] -= adv / p_old;
            }
            for b in 0..na {
                dsub[b] += hp.entropy_coef * (ev.sub[b].ln() + 1.0);
            }
            let dval = [2.0 * hp.value_coef * vdiff];
            // the (degenerate single-option) transition table never enters
            // this loss, so its probability gradient is exactly zero
            apply_zeta_grads(nets, &ev, &dsub, &[0.0], &dval, scale, g)?;
        }
    }
    out.finish(hp, clip, cells)
}

/// Joint-probability surrogate clipped in absolute space around the old
/// joint probabilities, weighted by `ζ(z)/α` and the generalized option
/// advantage of the arrival option; ζ-weighted value regression; entropy on
/// the ζ-marginal action distribution.
pub fn soap_loss(
    nets: &AgentNets,
    buf: &RolloutBuffer,
    targets: &SoapTargets,
    idx: &[usize],
    hp: &HyperParams,
    mut grads: Option<&mut NetGrads>,
) -> Result<BatchLoss> {
    check_idx(idx, buf.len())?;
    let (n, na) = (nets.n_options, nets.n_actions);
    let eps = hp.clip_epsilon;
    let scale = 1.0 / idx.len() as f64;
    let mut out = BatchLoss::default();
    let (mut clip, mut cells) = (0usize, 0usize);
    for &t in idx {
        let a = buf.actions[t];
        let ev = eval_zeta(nets, &buf.obs[t], a)?;
        let zeta = &buf.zeta[t];
        let alpha = buf.alpha[t];
        let mut dsub = vec![0.0; n * na];
        let mut dtr = vec![0.0; n * n];
        let mut dval = vec![0.0; n];
        let mut obj = 0.0;
        for z in 0..n {
            let weight = zeta[z] / alpha;
            let sub_new = ev.sub[z * na + a];
            let sub_old = buf.outputs[t].sub(z, a);
            for z2 in 0..n {
                let pi_new = sub_new * ev.tr[z * n + z2];
                let j_old = sub_old * buf.outputs[t].trans(z, a, z2);
                let g_adv = targets.a_goa[t][z2];
                let (lo, hi) = ((1.0 - eps) * j_old, (1.0 + eps) * j_old);
                obj += weight * (pi_new * g_adv).min(pi_new.clamp(lo, hi) * g_adv);
                if pi_new < lo || pi_new > hi {
                    clip += 1;
                }
                cells += 1;
                let active = (g_adv >= 0.0 && pi_new <= hi) || (g_adv < 0.0 && pi_new >= lo);
                if active && grads.is_some() {
                    let dpi = -weight * g_adv;
                    dsub[z * na + a] += dpi * ev.tr[z * n + z2];
                    dtr[z * n + z2] += dpi * sub_new;
                }
            }
        }
        out.policy -= obj * scale;
        for z in 0..n {
            let vdiff = ev.values[z] - targets.v_target[t][z];
            out.value += zeta[z] * vdiff * vdiff * scale;
            dval[z] = 2.0 * hp.value_coef * zeta[z] * vdiff;
        }
        let marginal = zeta_marginal(zeta, &ev.sub, n, na);
        out.entropy += entropy(&marginal) * scale;
        if let Some(g) = grads.as_deref_mut() {
            for z in 0..n {
                for b in 0..na {
                    dsub[z * na + b] += hp.entropy_coef * zeta[z] * (marginal[b].ln() + 1.0);
                }
            }
            apply_zeta_grads(nets, &ev, &dsub, &dtr, &dval, scale, g)?;
        }
    }
    out.finish(hp, clip, cells)
}

/// Posterior-weighted clipped-ratio surrogate over option pairs, with
/// pairwise option advantages, marginal-posterior-weighted value regression,
/// and entropy on the ζ-marginal action distribution.
pub fn ppoem_loss(
    nets: &AgentNets,
    buf: &RolloutBuffer,
    targets: &PpoemTargets,
    idx: &[usize],
    hp: &HyperParams,
    mut grads: Option<&mut NetGrads>,
) -> Result<BatchLoss> {
    check_idx(idx, buf.len())?;
    let (n, na) = (nets.n_options, nets.n_actions);
    let eps = hp.clip_epsilon;
    let scale = 1.0 / idx.len() as f64;
    let mut out = BatchLoss::default();
    let (mut clip, mut cells) = (0usize, 0usize);
    for &t in idx {
        let a = buf.actions[t];
        let ev = eval_zeta(nets, &buf.obs[t], a)?;
        let zeta = &buf.zeta[t];
        let mut dsub = vec![0.0; n * na];
        let mut dtr = vec![0.0; n * n];
        let mut dval = vec![0.0; n];
        let mut obj = 0.0;
        for z in 0..n {
            let sub_new = ev.sub[z * na + a];
            let sub_old = buf.outputs[t].sub(z, a);
            for z2 in 0..n {
                let pi_new = sub_new * ev.tr[z * n + z2];
                let j_old = sub_old * buf.outputs[t].trans(z, a, z2);
                let rho = pi_new / j_old;
                let adv = targets.a_pair[t][z * n + z2];
                let post = targets.posterior[t][z * n + z2];
                obj += post * (rho * adv).min(rho.clamp(1.0 - eps, 1.0 + eps) * adv);
                if (rho - 1.0).abs() > eps {
                    clip += 1;
                }
                cells += 1;
                let active = (adv >= 0.0 && rho <= 1.0 + eps) || (adv < 0.0 && rho >= 1.0 - eps);
                if active && grads.is_some() {
                    let dpi = -post * adv / j_old;
                    dsub[z * na + a] += dpi * ev.tr[z * n + z2];
                    dtr[z * n + z2] += dpi * sub_new;
                }
            }
        }
        out.policy -= obj * scale;
        for z in 0..n {
            let weight = targets.marginal_posterior[t][z];
            let vdiff = ev.values[z] - targets.v_target[t][z];
            out.value += weight * vdiff * vdiff * scale;
            dval[z] = 2.0 * hp.value_coef * weight * vdiff;
        }
        let marginal = zeta_marginal(zeta, &ev.sub, n, na);
        out.entropy += entropy(&marginal) * scale;
        if let Some(g) = grads.as_deref_mut() {
            for z in 0..n {
                for b in 0..na {
                    dsub[z * na + b] += hp.entropy_coef * zeta[z] * (marginal[b].ln() + 1.0);
                }
            }
            apply_zeta_grads(nets, &ev, &dsub, &dtr, &dval, scale, g)?;
        }
    }
    out.finish(hp, clip, cells)
}

fn zeta_marginal(zeta: &[f64], sub: &[f64], n: usize, na: usize) -> Vec<f64> {
    let mut m = vec![0.0; na];
    for z in 0..n {
        for (a, slot) in m.iter_mut().enumerate() {
            *slot += zeta[z] * sub[z * na + a];
        }
    }
    m
}

/// Sampled-option objective: clipped PPO on the held option's sub-policy,
/// option-value regression at the sampled option, a termination term
/// `+ϖ(s,z)·A` (gradient descent shrinks termination where the option does
/// well), an inter-option policy-gradient term `−A·ln π(z|s)`, and entropy
/// on the held sub-policy row plus the inter-option distribution.
pub fn ppoc_loss(
    nets: &AgentNets,
    buf: &PpocBuffer,
    targets: &PpocTargets,
    idx: &[usize],
    hp: &HyperParams,
    mut grads: Option<&mut NetGrads>,
) -> Result<BatchLoss> {
    check_idx(idx, buf.len())?;
    let (n, na) = (nets.n_options, nets.n_actions);
    let (term_net, inter_net) = match (&nets.termination, &nets.inter_option) {
        (Some(t), Some(i)) => (t, i),
        _ => return Err(Error::Config("sampled-option loss requires termination and inter-option nets".into())),
    };
    let eps = hp.clip_epsilon;
    let scale = 1.0 / idx.len() as f64;
    let mut out = BatchLoss::default();
    let (mut clip, mut cells) = (0usize, 0usize);
    for &t in idx {
        let obs = &buf.obs[t];
        let (z, a, adv) = (buf.option[t], buf.actions[t], targets.adv[t]);

        let pol_cache = nets.policy.forward_cached(obs)?;
        let mut sub = vec![0.0; n * na];
        for zz in 0..n {
            let mut row = softmax(&pol_cache.output()[zz * na..(zz + 1) * na]);
            floor_probs(&mut row, PROB_FLOOR);
            sub[zz * na..(zz + 1) * na].copy_from_slice(&row);
        }
        let p_old = buf.logp_action[t].exp();
        let rho = sub[z * na + a] / p_old;
        let surrogate = (rho * adv).min(rho.clamp(1.0 - eps, 1.0 + eps) * adv);
        out.policy -= surrogate * scale;
        if (rho - 1.0).abs() > eps {
            clip += 1;
        }
        cells += 1;

        let val_cache = nets.value.forward_cached(obs)?;
        let q = val_cache.output()[z];
        let qdiff = q - targets.q_target[t];
        out.value += qdiff * qdiff * scale;

        let term_cache = term_net.forward_cached(obs)?;
        let varpi = sigmoid(term_cache.output()[z]);
        let inter_cache = inter_net.forward_cached(obs)?;
        let mut inter = softmax(inter_cache.output());
        floor_probs(&mut inter, PROB_FLOOR);
        out.aux += (varpi * adv - adv * inter[z].ln()) * scale;

        let sub_row = &sub[z * na..(z + 1) * na];
        out.entropy += (entropy(sub_row) + entropy(&inter)) * scale;

        if let Some(g) = grads.as_deref_mut() {
            // sub-policy: ratio clip + entropy, row z only
            let mut dsub = vec![0.0; n * na];
            let active = (adv >= 0.0 && rho <= 1.0 + eps) || (adv < 0.0 && rho >= 1.0 - eps);
            if active {
                dsub[z * na + a] -= adv / p_old;
            }
            for b in 0..na {
                dsub[z * na + b] += hp.entropy_coef * (sub_row[b].ln() + 1.0);
            }
            let mut dlogits = vec![0.0; n * na];
            let dl = softmax_chain(sub_row, &dsub[z * na..(z + 1) * na]);
            for (b, v) in dl.iter().enumerate() {
                dlogits[z * na + b] = v * scale;
            }
            nets.policy.backward(&pol_cache, &dlogits, &mut g.policy)?;

            let mut dval = vec![0.0; n];
            dval[z] = 2.0 * hp.value_coef * qdiff * scale;
            nets.value.backward(&val_cache, &dval, &mut g.value)?;

            let mut dterm = vec![0.0; n];
            dterm[z] = adv * varpi * (1.0 - varpi) * scale;
            term_net.backward(&term_cache, &dterm, g.termination.as_mut().unwrap())?;

            let mut dinter = vec![0.0; n];
            dinter[z] = -adv / inter[z];
            for (b, slot) in dinter.iter_mut().enumerate() {
                *slot += hp.entropy_coef * (inter[b].ln() + 1.0);
            }
            let dil: Vec<f64> = softmax_chain(&inter, &dinter).iter().map(|v| v * scale).collect();
            inter_net.backward(&inter_cache, &dil, g.inter_option.as_mut().unwrap())?;
        }
    }
    out.finish(hp, clip, cells)
}
