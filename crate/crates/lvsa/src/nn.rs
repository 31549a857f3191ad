//! Plain-`Vec<f64>` multilayer perceptrons and the Adam optimizer.
//!
//! The three projection networks (independent-node, dependent-node, negation)
//! are small dense stacks: LeakyReLU after every layer except the last, which
//! stays linear. Weights initialize uniform in `±1/√fan_in`, biases at zero,
//! from a seeded generator. The backward pass here is the per-network
//! building block; the tape composes it into whole-query gradients.

use rand::Rng;

/// LeakyReLU, and its subgradient with `f'(0) = slope` (the convention the
/// finite-difference suite assumes; preactivations exactly at 0 have measure
/// zero under random inputs but freezing the choice keeps runs bit-stable).
pub fn leaky(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

pub fn leaky_grad(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        slope
    }
}

/// One dense layer: `w` is row-major `n_out × n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Linear {
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
            n_in,
            n_out,
        }
    }

    fn seeded(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let mut l = Linear::zeros(n_in, n_out);
        let amp = 1.0 / (n_in as f64).sqrt();
        for w in &mut l.w {
            *w = rng.gen_range(-amp..=amp);
        }
        l
    }
}

/// A dense stack; hidden activations LeakyReLU, final layer linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Cached forward intermediates needed by [`Mlp::backward`]. Stored flat to
/// keep recording a forward pass down to two allocations; offsets are implied
/// by the owning network's layer dims.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Layer inputs back to back: the MLP input, then each hidden activation.
    inputs: Vec<f64>,
    /// Per-layer affine outputs (before activation) back to back.
    preacts: Vec<f64>,
}

impl Mlp {
    /// Seeded init across `dims = [(in, out), ...]`; consecutive layers must
    /// chain (out of layer l == in of layer l+1).
    pub fn seeded(dims: &[(usize, usize)], rng: &mut impl Rng) -> Self {
        for w in dims.windows(2) {
            assert_eq!(w[0].1, w[1].0, "layer dims must chain");
        }
        Mlp {
            layers: dims.iter().map(|&(i, o)| Linear::seeded(i, o, rng)).collect(),
        }
    }

    /// Same shape, all parameters zero (gradient/moment containers).
    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.n_in, l.n_out))
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map(|l| l.n_in).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.n_out).unwrap_or(0)
    }

    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.n_in, l.n_out)).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[f64], slope: f64) -> Vec<f64> {
        let (out, _) = self.forward_trace(x, slope);
        out
    }

    pub fn forward_trace(&self, x: &[f64], slope: f64) -> (Vec<f64>, MlpTrace) {
        assert_eq!(x.len(), self.in_dim(), "MLP input dimension mismatch");
        let n = self.layers.len();
        let total_in: usize = self.layers.iter().map(|l| l.n_in).sum();
        let total_out: usize = self.layers.iter().map(|l| l.n_out).sum();
        let mut inputs = Vec::with_capacity(total_in);
        let mut preacts = Vec::with_capacity(total_out);
        inputs.extend_from_slice(x);
        let mut in_off = 0;
        let mut z_off = 0;
        for (l, layer) in self.layers.iter().enumerate() {
            for o in 0..layer.n_out {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                let xin = &inputs[in_off..in_off + layer.n_in];
                preacts.push(layer.b[o] + crate::vsa::dot(row, xin));
            }
            if l + 1 < n {
                for i in 0..layer.n_out {
                    let v = leaky(preacts[z_off + i], slope);
                    inputs.push(v);
                }
            }
            in_off += layer.n_in;
            z_off += layer.n_out;
        }
        let last = self.layers[n - 1].n_out;
        let out = preacts[z_off - last..].to_vec();
        (out, MlpTrace { inputs, preacts })
    }

    /// Accumulates parameter gradients into `grad` (same shape as `self`,
    /// see [`Mlp::zeros_like`]) and returns the gradient w.r.t. the input.
    /// `upstream` is the loss gradient w.r.t. the MLP output.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        upstream: &[f64],
        slope: f64,
        grad: &mut Mlp,
    ) -> Vec<f64> {
        let n = self.layers.len();
        debug_assert_eq!(upstream.len(), self.out_dim());
        // Flat-trace offsets: inputs/preacts are stored back to back per layer.
        let mut in_offs = Vec::with_capacity(n);
        let mut z_offs = Vec::with_capacity(n);
        let (mut in_off, mut z_off) = (0, 0);
        for layer in &self.layers {
            in_offs.push(in_off);
            z_offs.push(z_off);
            in_off += layer.n_in;
            z_off += layer.n_out;
        }
        let mut cur = upstream.to_vec(); // grad w.r.t. layer output (post-act)
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let z = &trace.preacts[z_offs[l]..z_offs[l] + layer.n_out];
            let x = &trace.inputs[in_offs[l]..in_offs[l] + layer.n_in];
            // Through the activation (hidden layers only).
            let dz: Vec<f64> = if l + 1 < n {
                cur.iter()
                    .zip(z)
                    .map(|(&g, &zi)| g * leaky_grad(zi, slope))
                    .collect()
            } else {
                cur.clone()
            };
            let g = &mut grad.layers[l];
            let mut dx = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                let grow = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
                let d = dz[o];
                g.b[o] += d;
                for i in 0..layer.n_in {
                    grow[i] += d * x[i];
                    dx[i] += d * row[i];
                }
            }
            cur = dx;
        }
        cur
    }

    /// Appends all parameters in canonical order (per layer: weights then
    /// biases). The checkpoint format and the flattened gradient views use
    /// exactly this order.
    pub fn append_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }

    /// Reads parameters back in [`Mlp::append_params`] order; returns the
    /// number of values consumed.
    pub fn load_params(&mut self, src: &[f64]) -> usize {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&src[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&src[k..k + nb]);
            k += nb;
        }
        k
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Adam hyperparameters. Defaults: lr 5e-4, β₁ 0.9, β₂ 0.999, ε 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHp {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHp {
    fn default() -> Self {
        AdamHp {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam step over a flat parameter block. `t` is the 1-based step count
/// (bias correction uses it); `m`/`v` are the block's moment buffers.
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    hp: &AdamHp,
) {
    debug_assert_eq!(param.len(), grad.len());
    debug_assert_eq!(param.len(), m.len());
    debug_assert_eq!(param.len(), v.len());
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        param[i] -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    #[test]
    fn init_is_seeded_and_biases_are_zero() {
        let mut r1 = seeded_rng(5, 0);
        let mut r2 = seeded_rng(5, 0);
        let a = Mlp::seeded(&[(4, 8), (8, 2)], &mut r1);
        let b = Mlp::seeded(&[(4, 8), (8, 2)], &mut r2);
        assert_eq!(a, b, "same seed, same weights");
        for l in &a.layers {
            assert!(l.b.iter().all(|&x| x == 0.0), "biases start at zero");
            let amp = 1.0 / (l.n_in as f64).sqrt();
            assert!(l.w.iter().all(|&w| w.abs() <= amp), "fan-in scaling");
        }
        assert_eq!(a.n_params(), 4 * 8 + 8 + 8 * 2 + 2);
    }

    #[test]
    fn forward_hand_example() {
        // Single linear layer: y = 2x + 1. No activation on the final layer,
        // so negative inputs pass through unscaled.
        let mut m = Mlp {
            layers: vec![Linear::zeros(1, 1)],
        };
        m.layers[0].w[0] = 2.0;
        m.layers[0].b[0] = 1.0;
        assert_eq!(m.forward(&[3.0], 0.01), vec![7.0]);
        assert_eq!(m.forward(&[-3.0], 0.01), vec![-5.0]);
    }

    #[test]
    fn hidden_layers_apply_leaky_relu() {
        // Two layers, identity weights: hidden = leaky(x), out = hidden.
        let mut m = Mlp {
            layers: vec![Linear::zeros(1, 1), Linear::zeros(1, 1)],
        };
        m.layers[0].w[0] = 1.0;
        m.layers[1].w[0] = 1.0;
        assert_eq!(m.forward(&[2.0], 0.01), vec![2.0]);
        assert_eq!(m.forward(&[-2.0], 0.01), vec![-0.02]);
    }

    /// Central-difference oracle for the backward pass: perturb every weight,
    /// bias, and input coordinate of a random MLP and compare.
    #[test]
    fn backward_matches_finite_differences() {
        let slope = 0.01;
        let mut rng = seeded_rng(42, 1);
        let mut mlp = Mlp::seeded(&[(6, 10), (10, 10), (10, 4)], &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Scalar loss: weighted sum of outputs (fixed weights).
        let wsum: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |m: &Mlp, x: &[f64]| -> f64 {
            m.forward(x, slope).iter().zip(&wsum).map(|(o, w)| o * w).sum()
        };

        let (_, trace) = mlp.forward_trace(&x, slope);
        let mut grad = mlp.zeros_like();
        let dx = mlp.backward(&trace, &wsum, slope, &mut grad);

        let eps = 1e-5;
        let check = |name: &str, got: f64, num: f64| {
            let denom = (got.abs() + num.abs()).max(1e-8);
            assert!(
                (got - num).abs() <= 1e-7 || (got - num).abs() / denom < 1e-5,
                "{name}: analytic {got} vs numeric {num}"
            );
        };
        // Input gradient.
        let mut xp = x.clone();
        for i in 0..x.len() {
            xp[i] = x[i] + eps;
            let up = loss(&mlp, &xp);
            xp[i] = x[i] - eps;
            let dn = loss(&mlp, &xp);
            xp[i] = x[i];
            check(&format!("dx[{i}]"), dx[i], (up - dn) / (2.0 * eps));
        }
        // Every weight and bias.
        for l in 0..mlp.layers.len() {
            for wi in 0..mlp.layers[l].w.len() {
                let orig = mlp.layers[l].w[wi];
                mlp.layers[l].w[wi] = orig + eps;
                let up = loss(&mlp, &x);
                mlp.layers[l].w[wi] = orig - eps;
                let dn = loss(&mlp, &x);
                mlp.layers[l].w[wi] = orig;
                check(
                    &format!("w[{l}][{wi}]"),
                    grad.layers[l].w[wi],
                    (up - dn) / (2.0 * eps),
                );
            }
            for bi in 0..mlp.layers[l].b.len() {
                let orig = mlp.layers[l].b[bi];
                mlp.layers[l].b[bi] = orig + eps;
                let up = loss(&mlp, &x);
                mlp.layers[l].b[bi] = orig - eps;
                let dn = loss(&mlp, &x);
                mlp.layers[l].b[bi] = orig;
                check(
                    &format!("b[{l}][{bi}]"),
                    grad.layers[l].b[bi],
                    (up - dn) / (2.0 * eps),
                );
            }
        }
    }

    #[test]
    fn params_round_trip_in_canonical_order() {
        let mut rng = seeded_rng(3, 0);
        let mlp = Mlp::seeded(&[(3, 5), (5, 2)], &mut rng);
        let mut flat = Vec::new();
        mlp.append_params(&mut flat);
        assert_eq!(flat.len(), mlp.n_params());
        let mut back = mlp.zeros_like();
        assert_eq!(back.load_params(&flat), flat.len());
        assert_eq!(back, mlp);
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let hp = AdamHp::default();
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        let mut m = vec![0.0; 3];
        let mut v = vec![0.0; 3];
        adam_update(&mut p, &[0.0, 0.0, 0.0], &mut m, &mut v, 1, &hp);
        assert_eq!(p, orig);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let hp = AdamHp::default();
        let mut p = vec![0.0, 0.0];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        adam_update(&mut p, &[0.3, -7.0], &mut m, &mut v, 1, &hp);
        // After bias correction the first update is lr·g/(|g| + ε') ≈ lr·sign(g).
        assert!((p[0] + hp.lr).abs() < 1e-6, "{}", p[0]);
        assert!((p[1] - hp.lr).abs() < 1e-6, "{}", p[1]);
    }
}
