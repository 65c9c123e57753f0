//! Dense numerics: tanh MLPs with hand-written backprop, Adam, softmax
//! utilities, and a central-difference gradient oracle.
//!
//! Everything is `f64`; the probabilistic recursions elsewhere multiply many
//! small probabilities and the oracle comparisons need the headroom.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Fully connected network: tanh on every hidden layer, raw scores at the
/// output. `dims` includes the input width, so `dims = [3, 64, 64, 2]` is a
/// two-hidden-layer net mapping 3 features to 2 scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    /// Per layer, `out_dim × in_dim` row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Per-layer activations from [`Mlp::forward_cached`]; `xs[0]` is the input,
/// `xs[l + 1]` the (post-tanh) output of layer `l`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    xs: Vec<Vec<f64>>,
}

impl MlpCache {
    /// The network output this cache was built from.
    pub fn output(&self) -> &[f64] {
        self.xs.last().unwrap()
    }
}

/// Parameter gradients shaped like the [`Mlp`] that produced them.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Mlp {
    /// Orthogonal-ish initialization: Gram-Schmidt over Gaussian draws, unit
    /// gain on hidden layers, `head_gain` on the output layer, zero biases.
    /// Small head gains keep initial softmax heads near-uniform.
    pub fn init<R: Rng>(dims: &[usize], head_gain: f64, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("bad MLP dims {dims:?}")));
        }
        let last = dims.len() - 2;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (inp, out) = (dims[l], dims[l + 1]);
            let gain = if l == last { head_gain } else { 1.0 };
            weights.push(orthogonal(out, inp, gain, rng));
            biases.push(vec![0.0; out]);
        }
        Ok(Self { dims: dims.to_vec(), weights, biases })
    }

    /// Build from explicit parameters (checkpoint loading, tests).
    pub fn from_params(dims: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if dims.len() < 2 || weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::Config("layer count mismatch".into()));
        }
        for l in 0..weights.len() {
            if weights[l].len() != dims[l + 1] * dims[l] || biases[l].len() != dims[l + 1] {
                return Err(Error::Config(format!("layer {l} shape mismatch")));
            }
        }
        Ok(Self { dims, weights, biases })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layer_params(&self, l: usize) -> (&[f64], &[f64]) {
        (&self.weights[l], &self.biases[l])
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.xs.pop().unwrap())
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<MlpCache> {
        if input.len() != self.dims[0] {
            return Err(Error::Config(format!(
                "MLP input length {} != {}",
                input.len(),
                self.dims[0]
            )));
        }
        let mut xs = Vec::with_capacity(self.dims.len());
        xs.push(input.to_vec());
        for l in 0..self.weights.len() {
            let (inp, out) = (self.dims[l], self.dims[l + 1]);
            let x = &xs[l];
            let w = &self.weights[l];
            let mut y = self.biases[l].clone();
            for o in 0..out {
                let row = &w[o * inp..(o + 1) * inp];
                let mut acc = 0.0;
                for i in 0..inp {
                    acc += row[i] * x[i];
                }
                y[o] += acc;
            }
            if l + 1 < self.weights.len() {
                for v in &mut y {
                    *v = v.tanh();
                }
            }
            xs.push(y);
        }
        Ok(MlpCache { xs })
    }

    /// Accumulate parameter gradients for `d loss / d output = dl_dout` into
    /// `grads` and return `d loss / d input`. Uses `tanh' = 1 − tanh²` on the
    /// cached post-activations.
    pub fn backward(&self, cache: &MlpCache, dl_dout: &[f64], grads: &mut MlpGrads) -> Result<Vec<f64>> {
        if dl_dout.len() != self.out_dim() {
            return Err(Error::Config(format!(
                "upstream gradient length {} != {}",
                dl_dout.len(),
                self.out_dim()
            )));
        }
        let mut delta = dl_dout.to_vec();
        for l in (0..self.weights.len()).rev() {
            let (inp, out) = (self.dims[l], self.dims[l + 1]);
            let x = &cache.xs[l];
            let w = &self.weights[l];
            let (wg, bg) = (&mut grads.w[l], &mut grads.b[l]);
            let mut dx = vec![0.0; inp];
            for o in 0..out {
                let d = delta[o];
                bg[o] += d;
                let row = &w[o * inp..(o + 1) * inp];
                let grow = &mut wg[o * inp..(o + 1) * inp];
                for i in 0..inp {
                    grow[i] += d * x[i];
                    dx[i] += d * row[i];
                }
            }
            if l > 0 {
                // cache.xs[l] is the post-tanh output of layer l − 1
                for i in 0..inp {
                    dx[i] *= 1.0 - x[i] * x[i];
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            w: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            b: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flat parameter order: layer-major, weights (row-major) before biases.
    /// [`MlpGrads::flat`] and [`Adam`] follow the same order.
    pub fn param(&self, mut idx: usize) -> f64 {
        for l in 0..self.weights.len() {
            if idx < self.weights[l].len() {
                return self.weights[l][idx];
            }
            idx -= self.weights[l].len();
            if idx < self.biases[l].len() {
                return self.biases[l][idx];
            }
            idx -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }

    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in 0..self.weights.len() {
            if idx < self.weights[l].len() {
                return &mut self.weights[l][idx];
            }
            idx -= self.weights[l].len();
            if idx < self.biases[l].len() {
                return &mut self.biases[l][idx];
            }
            idx -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().chain(self.biases.iter()).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.w.len() {
            out.extend_from_slice(&self.w[l]);
            out.extend_from_slice(&self.b[l]);
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.w.iter_mut().chain(self.b.iter_mut()) {
            for x in v.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.w
            .iter()
            .chain(self.b.iter())
            .flat_map(|v| v.iter())
            .map(|x| x * x)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

fn orthogonal<R: Rng>(out: usize, inp: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (long, short) = (out.max(inp), out.min(inp));
    // `short` Gaussian vectors of length `long`, Gram-Schmidt orthonormalized.
    let mut vs: Vec<Vec<f64>> = (0..short)
        .map(|_| (0..long).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..short {
        for j in 0..i {
            let d: f64 = vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum();
            for k in 0..long {
                vs[i][k] -= d * vs[j][k];
            }
        }
        let n = vs[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(n > 1e-10, "degenerate Gaussian draw during init");
        for x in &mut vs[i] {
            *x /= n;
        }
    }
    let mut w = vec![0.0; out * inp];
    for o in 0..out {
        for i in 0..inp {
            w[o * inp + i] = gain * if out >= inp { vs[i][o] } else { vs[o][i] };
        }
    }
    w
}

/// Adam with bias correction over one [`Mlp`]'s parameters, in
/// [`Mlp::param`] flat order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update. Rejects non-finite gradients without touching any state so
    /// the trainer can abort and restore.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Numerical("non-finite gradient; update rejected".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut idx = 0;
        for l in 0..grads.w.len() {
            for part in [&grads.w[l], &grads.b[l]] {
                for &g in part.iter() {
                    let m = &mut self.m[idx];
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    let v = &mut self.v[idx];
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *net.param_mut(idx) -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    idx += 1;
                }
            }
        }
        debug_assert_eq!(idx, self.m.len());
        Ok(())
    }
}

/// Central finite differences `(f(p + h) − f(p − h)) / 2h` per parameter, in
/// [`Mlp::param`] flat order. The gradient oracle everything else is checked
/// against. Restores the net exactly.
pub fn finite_diff_grad<F: FnMut(&Mlp) -> f64>(net: &mut Mlp, h: f64, mut f: F) -> Result<Vec<f64>> {
    let count = net.param_count();
    let mut grads = vec![0.0; count];
    let mut bad = Vec::new();
    for i in 0..count {
        let orig = net.param(i);
        *net.param_mut(i) = orig + h;
        let fp = f(net);
        *net.param_mut(i) = orig - h;
        let fm = f(net);
        *net.param_mut(i) = orig;
        if !fp.is_finite() || !fm.is_finite() {
            bad.push(i);
            continue;
        }
        grads[i] = (fp - fm) / (2.0 * h);
    }
    if !bad.is_empty() {
        return Err(Error::Numerical(format!(
            "finite-difference oracle: non-finite objective at parameters {bad:?}"
        )));
    }
    Ok(grads)
}

/// `‖a − b‖ / (‖a‖ + ‖b‖ + 1e-12)`: a scale-free distance between gradient
/// vectors that ignores individually tiny components.
pub fn rel_vec_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb + 1e-12)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Max-subtracted softmax; overflow-safe for any finite logits.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = out.iter().sum();
    for v in &mut out {
        *v /= s;
    }
    out
}

/// Clamp probabilities up to `floor` and renormalize — but only when some
/// entry is actually below the floor, so well-behaved rows pass through
/// bit-identically.
pub fn floor_probs(row: &mut [f64], floor: f64) {
    if row.iter().all(|&p| p >= floor) {
        return;
    }
    for p in row.iter_mut() {
        if *p < floor {
            *p = floor;
        }
    }
    let s: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= s;
    }
}
