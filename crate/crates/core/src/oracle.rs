//! Independent oracles for the probabilistic recursions and gradients.
//!
//! Everything here recomputes quantities by brute force — enumeration over
//! all option sequences, central finite differences — sharing no code with
//! the recursive implementations it checks. The `oracle-check` CLI verb runs
//! these suites with fixed seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advantage::goa_backward;
use crate::inference::{
    backward_pass, forward_step, init_zeta, joint_posterior, OptionPolicyOutputs,
};
use crate::num::{finite_diff_grad, rel_vec_err, softmax, Mlp};
use crate::Result;

/// One oracle comparison: the worst observed error against its tolerance.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub label: String,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.worst.is_finite() && self.worst <= self.tolerance
    }
}

/// A named collection of oracle comparisons.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "[{}] {:<28} worst {:>12.3e}  tol {:>8.1e}  {}\n",
                self.suite,
                c.label,
                c.worst,
                c.tolerance,
                if c.passed() { "pass" } else { "FAIL" }
            ));
        }
        let status = if self.passed() { "PASS" } else { "FAIL" };
        out.push_str(&format!("[{}] suite {}\n", self.suite, status));
        out
    }
}

/// Exhaustive posteriors for one episode: every quantity below is a
/// normalized sum over all `n^(T+1)` option sequences, weighted by
/// `(1/n) · Π_t p(a_t, z_{t+1}|s_t, z_t)`.
#[derive(Debug, Clone)]
pub struct EnumerationResult {
    /// `zetas[t]` = p(z_t | actions before t); length T + 1.
    pub zetas: Vec<Vec<f64>>,
    /// `alphas[t]` = p(a_t | actions before t); length T.
    pub alphas: Vec<f64>,
    /// `marginal_posterior[t]` = p(z_t | whole trajectory); length T + 1.
    pub marginal_posterior: Vec<Vec<f64>>,
    /// `joint_posterior[t]` = p(z_t, z_{t+1} | whole trajectory), flat n × n.
    pub joint_posterior: Vec<Vec<f64>>,
}

fn for_each_seq(n: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut seq = vec![0usize; len];
    loop {
        f(&seq);
        let mut i = 0;
        loop {
            if i == len {
                return;
            }
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

/// Brute-force reference for one complete episode.
pub fn enumerate_episode(outputs: &[OptionPolicyOutputs], actions: &[usize]) -> EnumerationResult {
    let t_len = outputs.len();
    assert_eq!(actions.len(), t_len);
    let n = outputs[0].n_options;
    let prior = 1.0 / n as f64;

    // weight of an option sequence z_0..z_k against the realized actions
    let seq_weight = |seq: &[usize]| -> f64 {
        let mut w = prior;
        for t in 0..seq.len() - 1 {
            w *= outputs[t].joint(seq[t], actions[t], seq[t + 1]);
        }
        w
    };

    // prefix sums give ζ_t and α_t
    let mut zetas = Vec::with_capacity(t_len + 1);
    let mut prefix_totals = Vec::with_capacity(t_len + 2);
    for k in 0..=t_len {
        let mut unnorm = vec![0.0; n];
        let mut total = 0.0;
        for_each_seq(n, k + 1, |seq| {
            let w = seq_weight(seq);
            unnorm[seq[k]] += w;
            total += w;
        });
        prefix_totals.push(total);
        zetas.push(unnorm.into_iter().map(|x| x / total).collect());
    }
    let alphas: Vec<f64> = (0..t_len).map(|t| prefix_totals[t + 1] / prefix_totals[t]).collect();

    // full-sequence sums give the posteriors
    let mut marginal = vec![vec![0.0; n]; t_len + 1];
    let mut joint = vec![vec![0.0; n * n]; t_len];
    let mut total = 0.0;
    for_each_seq(n, t_len + 1, |seq| {
        let w = seq_weight(seq);
        total += w;
        for t in 0..=t_len {
            marginal[t][seq[t]] += w;
        }
        for t in 0..t_len {
            joint[t][seq[t] * n + seq[t + 1]] += w;
        }
    });
    for row in marginal.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    for tab in joint.iter_mut() {
        for v in tab.iter_mut() {
            *v /= total;
        }
    }

    EnumerationResult { zetas, alphas, marginal_posterior: marginal, joint_posterior: joint }
}

/// Random strictly positive policy tables (uniform draws, renormalized).
pub fn random_outputs<R: Rng>(n: usize, n_actions: usize, rng: &mut R) -> OptionPolicyOutputs {
    let mut row = |len: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    };
    let mut sub = Vec::new();
    for _ in 0..n {
        sub.extend(row(n_actions));
    }
    let mut transition = Vec::new();
    for _ in 0..n * n_actions {
        transition.extend(row(n));
    }
    OptionPolicyOutputs::new(n, n_actions, sub, transition).unwrap()
}

/// Forward-backward enumeration suite: for every (n, T) in
/// {1,2,3} × {1,2,3,4} and 50 seeded instances each, the recursive ζ, α,
/// marginal posterior ζ·β and joint posterior must match enumeration over
/// all option sequences within 1e-10.
pub fn run_fb_enum_suite() -> Result<SuiteReport> {
    let tol = 1e-10;
    let mut checks = Vec::new();
    for n in 1..=3usize {
        for t_len in 1..=4usize {
            let mut worst = 0.0f64;
            let mut rng = ChaCha8Rng::seed_from_u64(0xFB00 + (n * 16 + t_len) as u64);
            for _ in 0..50 {
                let n_actions = rng.gen_range(2..=3);
                let outputs: Vec<_> = (0..t_len).map(|_| random_outputs(n, n_actions, &mut rng)).collect();
                let actions: Vec<usize> = (0..t_len).map(|_| rng.gen_range(0..n_actions)).collect();
                let reference = enumerate_episode(&outputs, &actions);

                let mut zeta = init_zeta(n)?;
                let mut zetas = vec![zeta.clone()];
                let mut alphas = Vec::new();
                for t in 0..t_len {
                    let (alpha, next) = forward_step(&zeta, &outputs[t], actions[t])?;
                    worst = worst.max((alpha - reference.alphas[t]).abs());
                    alphas.push(alpha);
                    zeta = next;
                    zetas.push(zeta.clone());
                }
                for t in 0..=t_len {
                    for z in 0..n {
                        worst = worst.max((zetas[t][z] - reference.zetas[t][z]).abs());
                    }
                }

                let mut ends = vec![false; t_len];
                ends[t_len - 1] = true;
                let pass = backward_pass(&outputs, &actions, &alphas, &ends)?;
                for t in 0..t_len {
                    for z in 0..n {
                        let marg = zetas[t][z] * pass.beta[t][z];
                        worst = worst.max((marg - reference.marginal_posterior[t][z]).abs());
                    }
                    let joint = joint_posterior(&zetas[t], &pass.beta_next[t], &outputs[t], actions[t], alphas[t])?;
                    for idx in 0..n * n {
                        worst = worst.max((joint[idx] - reference.joint_posterior[t][idx]).abs());
                    }
                }
            }
            checks.push(CheckReport { label: format!("n={n} T={t_len} x50"), worst, tolerance: tol });
        }
    }
    Ok(SuiteReport { suite: "fb-enum".into(), checks })
}

/// Analytic option-gradient suite. Each instance draws per-step policy
/// logits, advantages, and episode boundaries, then compares two gradients of
/// the unrolled objective `J = Σ_t w_t · ln α_t` (with the per-step weights
/// `w_t = Σ_z a_opt[t][z] · ζ_t(z)` held fixed at their base-point values):
///
/// * analytic: the weighting table W from [`goa_backward`], chained through
///   the softmax Jacobians of the per-step logits;
/// * numerical: central finite differences through the full ζ/α recursion,
///   episode resets included.
pub fn run_goa_grad_suite() -> Result<SuiteReport> {
    let tol = 1e-4;
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x60A0);
    for inst in 0..20 {
        let n = rng.gen_range(1..=3usize);
        let t_len = rng.gen_range(1..=5usize);
        let n_actions = 2;
        let inst_err = goa_grad_instance_error(n, n_actions, t_len, &mut rng)?;
        checks.push(CheckReport {
            label: format!("instance {inst:02} n={n} T={t_len}"),
            worst: inst_err,
            tolerance: tol,
        });
    }
    Ok(SuiteReport { suite: "goa-grad".into(), checks })
}

fn goa_grad_instance_error(n: usize, n_actions: usize, t_len: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    // per-step parameters: sub-policy logits (n × A) and transition logits
    // for the realized action only (n × n) — nothing else enters J
    let sub_logits: Vec<Vec<f64>> =
        (0..t_len).map(|_| (0..n * n_actions).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
    let tr_logits: Vec<Vec<f64>> =
        (0..t_len).map(|_| (0..n * n).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
    let actions: Vec<usize> = (0..t_len).map(|_| rng.gen_range(0..n_actions)).collect();
    let mut dones: Vec<bool> = (0..t_len).map(|_| rng.gen_bool(0.25)).collect();
    dones[t_len - 1] = true;
    let a_opt: Vec<Vec<f64>> = (0..t_len).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();

    let build = |sub_l: &[Vec<f64>], tr_l: &[Vec<f64>]| -> Vec<OptionPolicyOutputs> {
        (0..t_len)
            .map(|t| {
                let mut sub = Vec::with_capacity(n * n_actions);
                for z in 0..n {
                    sub.extend(softmax(&sub_l[t][z * n_actions..(z + 1) * n_actions]));
                }
                // non-realized actions get fixed uniform transition rows
                let mut transition = vec![1.0 / n as f64; n * n_actions * n];
                for z in 0..n {
                    let row = softmax(&tr_l[t][z * n..(z + 1) * n]);
                    let base = (z * n_actions + actions[t]) * n;
                    transition[base..base + n].copy_from_slice(&row);
                }
                OptionPolicyOutputs::new(n, n_actions, sub, transition).unwrap()
            })
            .collect()
    };

    // base-point recursion
    let outputs = build(&sub_logits, &tr_logits);
    let mut zeta = init_zeta(n)?;
    let mut zetas = Vec::with_capacity(t_len);
    let mut alphas = Vec::with_capacity(t_len);
    for t in 0..t_len {
        zetas.push(zeta.clone());
        let (alpha, next) = forward_step(&zeta, &outputs[t], actions[t])?;
        alphas.push(alpha);
        zeta = if dones[t] { init_zeta(n)? } else { next };
    }
    let weights: Vec<f64> =
        (0..t_len).map(|t| (0..n).map(|z| a_opt[t][z] * zetas[t][z]).sum()).collect();

    // analytic side: W from the GOA recursion, chained through the softmax
    let goa = goa_backward(&a_opt, &zetas, &outputs, &actions, &alphas, &dones)?;
    let mut analytic = Vec::new();
    for t in 0..t_len {
        let o = &outputs[t];
        let a = actions[t];
        let w_tab = &goa.weighting[t];
        // d p(z,z') / d sub_logit[z][b] = tr(z,z')·sub(z,a)·(δ_ab − sub(z,b))
        for z in 0..n {
            let wp: f64 = (0..n).map(|z2| w_tab[z * n + z2] * o.trans(z, a, z2)).sum();
            for b in 0..n_actions {
                let indicator = if b == a { 1.0 } else { 0.0 };
                analytic.push(wp * o.sub(z, a) * (indicator - o.sub(z, b)));
            }
        }
        // d p(z,z') / d tr_logit[z][c] = sub(z,a)·tr(z,z')·(δ_{z'c} − tr(z,c))
        for z in 0..n {
            let wt: f64 = (0..n).map(|z2| w_tab[z * n + z2] * o.trans(z, a, z2)).sum();
            for c in 0..n {
                analytic.push(o.sub(z, a) * (w_tab[z * n + c] * o.trans(z, a, c) - o.trans(z, a, c) * wt));
            }
        }
    }

    // numerical side: finite differences through the unrolled recursion
    let objective = |sub_l: &[Vec<f64>], tr_l: &[Vec<f64>]| -> f64 {
        let outs = build(sub_l, tr_l);
        let mut zeta = init_zeta(n).unwrap();
        let mut j = 0.0;
        for t in 0..t_len {
            let (alpha, next) = forward_step(&zeta, &outs[t], actions[t]).unwrap();
            j += weights[t] * alpha.ln();
            zeta = if dones[t] { init_zeta(n).unwrap() } else { next };
        }
        j
    };
    let h = 1e-6;
    let mut numeric = Vec::new();
    let mut sub_pert = sub_logits.clone();
    let mut tr_pert = tr_logits.clone();
    for t in 0..t_len {
        for i in 0..n * n_actions {
            let orig = sub_pert[t][i];
            sub_pert[t][i] = orig + h;
            let fp = objective(&sub_pert, &tr_pert);
            sub_pert[t][i] = orig - h;
            let fm = objective(&sub_pert, &tr_pert);
            sub_pert[t][i] = orig;
            numeric.push((fp - fm) / (2.0 * h));
        }
        for i in 0..n * n {
            let orig = tr_pert[t][i];
            tr_pert[t][i] = orig + h;
            let fp = objective(&sub_pert, &tr_pert);
            tr_pert[t][i] = orig - h;
            let fm = objective(&sub_pert, &tr_pert);
            tr_pert[t][i] = orig;
            numeric.push((fp - fm) / (2.0 * h));
        }
    }

    // interleave in the same order as the analytic vector
    let mut numeric_interleaved = Vec::with_capacity(numeric.len());
    let mut cursor = 0;
    for _t in 0..t_len {
        numeric_interleaved.extend_from_slice(&numeric[cursor..cursor + n * n_actions + n * n]);
        cursor += n * n_actions + n * n;
    }
    Ok(rel_vec_err(&analytic, &numeric_interleaved))
}

/// MLP backward vs central finite differences on a handful of shapes and
/// composite objectives; tolerance 1e-6 at h = 1e-5.
pub fn run_mlp_grad_suite() -> Result<SuiteReport> {
    let tol = 1e-6;
    let h = 1e-5;
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x41D0);
    let shapes: [&[usize]; 3] = [&[3, 8, 8, 4], &[4, 16, 2], &[2, 6, 6, 6, 1]];
    for (si, dims) in shapes.iter().enumerate() {
        let mut worst = 0.0f64;
        for rep in 0..7 {
            let mut net = Mlp::init(dims, if rep % 2 == 0 { 1.0 } else { 0.01 }, &mut rng)?;
            let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let coeff: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();

            // objective: soft-maxed cross-entropy-style score plus a quadratic
            let objective = |n: &Mlp| -> f64 {
                let y = n.forward(&x).unwrap();
                let p = softmax(&y);
                let mut obj = 0.0;
                for i in 0..y.len() {
                    obj += coeff[i] * p[i].ln() + 0.1 * y[i] * y[i];
                }
                obj
            };

            let cache = net.forward_cached(&x)?;
            let y = cache.output().to_vec();
            let p = softmax(&y);
            // d obj / d y_k = coeff_k − p_k·Σ coeff + 0.2·y_k
            let csum: f64 = coeff.iter().sum();
            let upstream: Vec<f64> =
                (0..y.len()).map(|k| coeff[k] - p[k] * csum + 0.2 * y[k]).collect();
            let mut grads = net.zero_grads();
            net.backward(&cache, &upstream, &mut grads)?;
            let fd = finite_diff_grad(&mut net, h, objective)?;
            worst = worst.max(rel_vec_err(&grads.flat(), &fd));
        }
        checks.push(CheckReport { label: format!("shape {:?} x7", shapes[si]), worst, tolerance: tol });
    }
    Ok(SuiteReport { suite: "mlp-grad".into(), checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fb_enum_suite_passes() {
        let report = run_fb_enum_suite().unwrap();
        assert!(report.passed(), "\n{}", report.render());
    }

    #[test]
    fn goa_grad_suite_passes() {
        let report = run_goa_grad_suite().unwrap();
        assert!(report.passed(), "\n{}", report.render());
    }

    #[test]
    fn mlp_grad_suite_passes() {
        let report = run_mlp_grad_suite().unwrap();
        assert!(report.passed(), "\n{}", report.render());
    }
}
