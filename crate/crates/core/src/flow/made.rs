//! MADE: a feedforward network whose weight masks make output `i` depend
//! only on inputs `1..i-1` (plus the unmasked context).
//!
//! Degrees follow the usual construction: θ input `j` has degree `j`
//! (1-based), hidden units get degrees in `0..p`, context inputs have degree
//! 0. A hidden unit connects to everything of degree `<=` its own; output
//! coordinate `i` connects to hidden units of degree `< i`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

/// Bound on the log-scale output, applied as `A·tanh(raw / A)`.
pub const ALPHA_BOUND: f64 = 7.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MadeMasks {
    /// Degree of every hidden unit, per hidden layer.
    pub hidden_degrees: Vec<Vec<usize>>,
    /// One 0/1 matrix per layer, shaped `(out, in)` like the weights.
    pub masks: Vec<Array2<f64>>,
}

pub fn made_masks<R: Rng + ?Sized>(
    p: usize,
    context_dim: usize,
    hidden_units: usize,
    hidden_layers: usize,
    rng: &mut R,
) -> MadeMasks {
    assert!(p >= 1 && hidden_units >= 1 && hidden_layers >= 1);
    let hidden_degrees: Vec<Vec<usize>> = (0..hidden_layers)
        .map(|_| {
            let mut d: Vec<usize> = (0..hidden_units).map(|k| k % p).collect();
            d.shuffle(rng);
            d
        })
        .collect();

    let mut masks = Vec::with_capacity(hidden_layers + 1);
    masks.push(Array2::from_shape_fn((hidden_units, p + context_dim), |(k, j)| {
        if j >= p || hidden_degrees[0][k] > j {
            1.0
        } else {
            0.0
        }
    }));
    for l in 1..hidden_layers {
        let (cur, prev) = (&hidden_degrees[l], &hidden_degrees[l - 1]);
        masks.push(Array2::from_shape_fn((hidden_units, hidden_units), |(k, j)| {
            f64::from(u8::from(cur[k] >= prev[j]))
        }));
    }
    let last = &hidden_degrees[hidden_layers - 1];
    masks.push(Array2::from_shape_fn((2 * p, hidden_units), |(r, j)| {
        // rows 0..p are μ, rows p..2p are α; coordinate index is r % p.
        f64::from(u8::from(last[j] < r % p + 1))
    }));
    MadeMasks {
        hidden_degrees,
        masks,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MadeNet {
    pub(crate) p: usize,
    pub(crate) context_dim: usize,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    pub(crate) masks: Vec<Array2<f64>>,
}

/// Activations kept from a forward pass for backprop.
pub(crate) struct MadeTape {
    /// Input of every layer (`inputs[0]` is `[θ, x]`, then tanh outputs).
    inputs: Vec<Array2<f64>>,
    /// Bounded log-scales, `(B, p)`.
    pub(crate) alpha: Array2<f64>,
}

/// `(μ, α)` for a batch, each shaped `(B, p)`.
pub(crate) struct MadeOutput {
    pub(crate) mu: Array2<f64>,
    pub(crate) alpha: Array2<f64>,
}

impl MadeNet {
    /// Hidden layers get `U(−1/√fan_in, 1/√fan_in)`; the output layer starts
    /// at zero so the transform begins as the identity.
    pub fn new<R: Rng + ?Sized>(
        p: usize,
        context_dim: usize,
        hidden_units: usize,
        hidden_layers: usize,
        rng: &mut R,
    ) -> Self {
        let MadeMasks { masks, .. } = made_masks(p, context_dim, hidden_units, hidden_layers, rng);
        let mut weights = Vec::with_capacity(masks.len());
        let mut biases = Vec::with_capacity(masks.len());
        for (l, mask) in masks.iter().enumerate() {
            let (out, fan_in) = mask.dim();
            if l + 1 == masks.len() {
                weights.push(Array2::zeros((out, fan_in)));
                biases.push(Array1::zeros(out));
            } else {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let w = Array2::from_shape_fn((out, fan_in), |_| rng.random_range(-bound..bound)) * mask;
                weights.push(w);
                biases.push(Array1::from_shape_fn(out, |_| rng.random_range(-bound..bound)));
            }
        }
        MadeNet {
            p,
            context_dim,
            weights,
            biases,
            masks,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn masks(&self) -> &[Array2<f64>] {
        &self.masks
    }

    pub(crate) fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn split_output(&self, out: Array2<f64>) -> MadeOutput {
        let p = self.p;
        let mu = out.slice(s![.., ..p]).to_owned();
        let alpha = out.slice(s![.., p..]).mapv(|r| ALPHA_BOUND * (r / ALPHA_BOUND).tanh());
        MadeOutput { mu, alpha }
    }

    /// Forward pass on `input = [θ, x]`, shape `(B, p + c)`.
    pub(crate) fn eval(&self, input: ArrayView2<f64>) -> MadeOutput {
        let mut h = input.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = h.dot(&w.t());
            a += b;
            if l < last {
                a.mapv_inplace(f64::tanh);
            }
            h = a;
        }
        self.split_output(h)
    }

    pub(crate) fn eval_taped(&self, input: Array2<f64>) -> (MadeOutput, MadeTape) {
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut h = input;
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = h.dot(&w.t());
            a += b;
            if l < last {
                a.mapv_inplace(f64::tanh);
            }
            inputs.push(std::mem::replace(&mut h, a));
        }
        let out = self.split_output(h);
        let tape = MadeTape {
            inputs,
            alpha: out.alpha.clone(),
        };
        (out, tape)
    }

    /// Backprop from `(dμ, dα)` (gradients w.r.t. the bounded α). Adds
    /// parameter gradients into `grad` (flat, this net's layout) and returns
    /// the gradient w.r.t. the θ part of the input.
    pub(crate) fn backward(
        &self,
        tape: &MadeTape,
        d_mu: &Array2<f64>,
        d_alpha: &Array2<f64>,
        grad: &mut [f64],
    ) -> Array2<f64> {
        let p = self.p;
        let (rows, _) = d_mu.dim();
        let mut delta = Array2::zeros((rows, 2 * p));
        delta.slice_mut(s![.., ..p]).assign(d_mu);
        // dα/draw = 1 − (α/A)²
        let squash = tape.alpha.mapv(|a| 1.0 - (a / ALPHA_BOUND).powi(2));
        delta.slice_mut(s![.., p..]).assign(&(d_alpha * &squash));

        let offsets = self.layer_offsets();
        for l in (0..self.weights.len()).rev() {
            let input = &tape.inputs[l];
            let dw = delta.t().dot(input) * &self.masks[l];
            let db = delta.sum_axis(Axis(0));
            let (w_off, b_off) = offsets[l];
            for (g, v) in grad[w_off..w_off + dw.len()].iter_mut().zip(dw.iter()) {
                *g += v;
            }
            for (g, v) in grad[b_off..b_off + db.len()].iter_mut().zip(db.iter()) {
                *g += v;
            }
            let d_in = delta.dot(&self.weights[l]);
            if l == 0 {
                return d_in.slice(s![.., ..p]).to_owned();
            }
            // previous layer output was tanh
            delta = d_in * &input.mapv(|h| 1.0 - h * h);
        }
        unreachable!("network has at least one layer")
    }

    /// `(weight offset, bias offset)` of each layer in the flat layout.
    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                let here = (off, off + w.len());
                off += w.len() + b.len();
                here
            })
            .collect()
    }

    pub(crate) fn write_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    pub(crate) fn read_params(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for ((w, b), m) in self.weights.iter_mut().zip(self.biases.iter_mut()).zip(&self.masks) {
            for (dst, (v, mk)) in w.iter_mut().zip(src[off..].iter().zip(m.iter())) {
                *dst = v * mk;
            }
            off += w.len();
            for (dst, v) in b.iter_mut().zip(&src[off..]) {
                *dst = *v;
            }
            off += b.len();
        }
        off
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn single_coordinate_sees_only_context() {
        let m = made_masks(1, 2, 8, 2, &mut rng_from_seed(0));
        assert!(m.masks[0].column(0).iter().all(|&v| v == 0.0));
        assert!(m.masks[0].slice(s![.., 1..]).iter().all(|&v| v == 1.0));
        assert!(m.masks[2].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn masks_are_binary_and_degree_ordered() {
        let p = 3;
        let m = made_masks(p, 1, 10, 3, &mut rng_from_seed(4));
        for mask in &m.masks {
            assert!(mask.iter().all(|&v| v == 0.0 || v == 1.0));
        }
        // Composite connectivity from θ input j to output i must vanish for j >= i.
        let mut reach = m.masks[0].slice(s![.., ..p]).to_owned();
        for mask in &m.masks[1..] {
            reach = mask.dot(&reach);
        }
        for r in 0..2 * p {
            for j in 0..p {
                if j >= r % p {
                    assert_eq!(reach[(r, j)], 0.0, "output {r} reaches input {j}");
                }
            }
        }
        for d in 0..p {
            assert!(m.hidden_degrees.iter().all(|layer| layer.contains(&d)));
        }
    }
}
