//! Single-layer LSTM regressor on scalar sequences.
//!
//! For each step with input `x` and previous state `(h, c)`:
//!
//! ```text
//! z  = [h; x]
//! f  = σ(W_f z + b_f)        i = σ(W_i z + b_i)        o = σ(W_o z + b_o)
//! g  = act(W_c z + b_c)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ act(c')
//! ```
//!
//! and after the last step `ŷ = w_y · h + b_y`. All four gate matrices are
//! `H × (H + 1)`, the last column multiplying the scalar input.
//!
//! Parameters live in one flat vector so the optimiser can treat them as a
//! single block: for each gate in the order f, i, o, c the row-major matrix
//! followed by its bias, then `w_y`, then `b_y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::{sigmoid, Activation};
use super::dataset::WindowedDataset;
use super::ForecastError;
use crate::par::Exec;

const GATES: usize = 4;
const FORGET: usize = 0;
const INPUT: usize = 1;
const OUTPUT: usize = 2;
const CANDIDATE: usize = 3;

/// Examples per gradient-accumulation chunk. Fixed so that the reduction
/// order, and therefore the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden: usize,
    pub activation: Activation,
    pub values: Vec<f64>,
}

impl LstmParams {
    pub fn param_count(hidden: usize) -> usize {
        GATES * (hidden * (hidden + 1) + hidden) + hidden + 1
    }

    pub fn zeros(hidden: usize, activation: Activation) -> Self {
        LstmParams {
            hidden,
            activation,
            values: vec![0.0; Self::param_count(hidden)],
        }
    }

    /// Weights uniform in `±1/√H`, biases zero except the forget gate at 1.
    pub fn init(hidden: usize, activation: Activation, seed: u64) -> Self {
        let mut p = Self::zeros(hidden, activation);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        for g in 0..GATES {
            let range = p.weight_range(g);
            for w in &mut p.values[range] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        let range = p.out_weight_range();
        for w in &mut p.values[range] {
            *w = rng.gen_range(-bound..bound);
        }
        let range = p.bias_range(FORGET);
        p.values[range].fill(1.0);
        p
    }

    pub fn from_values(hidden: usize, activation: Activation, values: Vec<f64>) -> Result<Self, ForecastError> {
        let expected = Self::param_count(hidden);
        if hidden == 0 || values.len() != expected {
            return Err(ForecastError::ShapeMismatch(format!(
                "hidden {hidden} needs {expected} parameters, got {}",
                values.len()
            )));
        }
        Ok(LstmParams {
            hidden,
            activation,
            values,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn gate_stride(&self) -> usize {
        self.hidden * (self.hidden + 1) + self.hidden
    }

    fn weight_range(&self, gate: usize) -> std::ops::Range<usize> {
        let start = gate * self.gate_stride();
        start..start + self.hidden * (self.hidden + 1)
    }

    fn bias_range(&self, gate: usize) -> std::ops::Range<usize> {
        let start = gate * self.gate_stride() + self.hidden * (self.hidden + 1);
        start..start + self.hidden
    }

    fn out_weight_range(&self) -> std::ops::Range<usize> {
        let start = GATES * self.gate_stride();
        start..start + self.hidden
    }

    fn out_bias_index(&self) -> usize {
        GATES * self.gate_stride() + self.hidden
    }

    /// Sets the output bias; with all other parameters zero and a tanh,
    /// sigmoid or ReLU activation the network then predicts this constant.
    pub fn set_output_bias(&mut self, b: f64) {
        let k = self.out_bias_index();
        self.values[k] = b;
    }

    /// Prediction in normalised units.
    pub fn forward(&self, window: &[f64]) -> Result<f64, ForecastError> {
        if window.is_empty() {
            return Err(ForecastError::ShapeMismatch("empty input window".into()));
        }
        if self.values.len() != Self::param_count(self.hidden) {
            return Err(ForecastError::ShapeMismatch("parameter vector length".into()));
        }
        let mut trace = Trace::new(self.hidden, window.len());
        Ok(self.forward_trace(window, &mut trace))
    }

    fn forward_trace(&self, x: &[f64], tr: &mut Trace) -> f64 {
        let hd = self.hidden;
        tr.reset(x.len());
        let mut pre = vec![0.0; GATES * hd];
        for (t, &xt) in x.iter().enumerate() {
            let (h_prev, c_prev) = (tr.h(t).to_vec(), tr.c(t).to_vec());
            for g in 0..GATES {
                let w = &self.values[self.weight_range(g)];
                let b = &self.values[self.bias_range(g)];
                for j in 0..hd {
                    let row = &w[j * (hd + 1)..(j + 1) * (hd + 1)];
                    let mut a = b[j] + row[hd] * xt;
                    for (wk, hk) in row[..hd].iter().zip(&h_prev) {
                        a += wk * hk;
                    }
                    pre[g * hd + j] = a;
                }
            }
            let s = t * hd;
            for j in 0..hd {
                tr.f[s + j] = sigmoid(pre[FORGET * hd + j]);
                tr.i[s + j] = sigmoid(pre[INPUT * hd + j]);
                tr.o[s + j] = sigmoid(pre[OUTPUT * hd + j]);
            }
            self.activation
                .apply(&pre[CANDIDATE * hd..(CANDIDATE + 1) * hd], &mut tr.g[s..s + hd]);
            let mut c_new = vec![0.0; hd];
            for j in 0..hd {
                c_new[j] = tr.f[s + j] * c_prev[j] + tr.i[s + j] * tr.g[s + j];
            }
            self.activation.apply(&c_new, &mut tr.m[s..s + hd]);
            let next = (t + 1) * hd;
            tr.c_all[next..next + hd].copy_from_slice(&c_new);
            for j in 0..hd {
                tr.h_all[next + j] = tr.o[s + j] * tr.m[s + j];
            }
        }
        let h_last = tr.h(x.len());
        let wy = &self.values[self.out_weight_range()];
        self.values[self.out_bias_index()] + wy.iter().zip(h_last).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Backpropagation through time for one example. Adds `d(dy·ŷ)/dθ` into
    /// `grad`.
    fn backward(&self, x: &[f64], tr: &Trace, dy: f64, grad: &mut [f64]) {
        let hd = self.hidden;
        let steps = x.len();
        let wy_range = self.out_weight_range();
        grad[self.out_bias_index()] += dy;
        let h_last = tr.h(steps);
        let mut dh: Vec<f64> = vec![0.0; hd];
        for j in 0..hd {
            grad[wy_range.start + j] += dy * h_last[j];
            dh[j] = dy * self.values[wy_range.start + j];
        }
        let mut dc = vec![0.0; hd];
        let mut dm = vec![0.0; hd];
        let mut dg = vec![0.0; hd];
        let mut da = vec![0.0; GATES * hd];

        for t in (0..steps).rev() {
            let s = t * hd;
            let (f, i, o, g, m) = (
                &tr.f[s..s + hd],
                &tr.i[s..s + hd],
                &tr.o[s..s + hd],
                &tr.g[s..s + hd],
                &tr.m[s..s + hd],
            );
            let c_prev = tr.c(t);
            let h_prev = tr.h(t);

            for j in 0..hd {
                dm[j] = dh[j] * o[j];
                da[OUTPUT * hd + j] = dh[j] * m[j] * o[j] * (1.0 - o[j]);
            }
            self.activation.backward(m, &dm, &mut dc);
            for j in 0..hd {
                da[FORGET * hd + j] = dc[j] * c_prev[j] * f[j] * (1.0 - f[j]);
                da[INPUT * hd + j] = dc[j] * g[j] * i[j] * (1.0 - i[j]);
                dg[j] = dc[j] * i[j];
            }
            let cand = &mut da[CANDIDATE * hd..(CANDIDATE + 1) * hd];
            cand.fill(0.0);
            self.activation.backward(g, &dg, cand);

            for j in 0..hd {
                dc[j] *= f[j];
            }
            dh.fill(0.0);
            for gate in 0..GATES {
                let w_start = self.weight_range(gate).start;
                let b_start = self.bias_range(gate).start;
                for j in 0..hd {
                    let d = da[gate * hd + j];
                    if d == 0.0 {
                        continue;
                    }
                    let row = w_start + j * (hd + 1);
                    grad[b_start + j] += d;
                    grad[row + hd] += d * x[t];
                    for k in 0..hd {
                        grad[row + k] += d * h_prev[k];
                        dh[k] += d * self.values[row + k];
                    }
                }
            }
        }
    }

    /// Mean squared error over the whole dataset, normalised units.
    pub fn loss(&self, data: &WindowedDataset, exec: Exec) -> f64 {
        let idx: Vec<usize> = (0..data.len()).collect();
        self.loss_and_gradient(data, &idx, exec).0
    }

    /// Mean squared error over `indices` and its gradient.
    pub fn loss_and_gradient(&self, data: &WindowedDataset, indices: &[usize], exec: Exec) -> (f64, Vec<f64>) {
        let n = indices.len().max(1) as f64;
        let partials = exec.map_chunks(indices, GRAD_CHUNK, |_, chunk| {
            let mut trace = Trace::new(self.hidden, data.window);
            let mut grad = vec![0.0; self.values.len()];
            let mut sse = 0.0;
            for &k in chunk {
                let (x, target) = data.example(k);
                let y = self.forward_trace(x, &mut trace);
                let err = y - target;
                sse += err * err;
                self.backward(x, &trace, 2.0 * err, &mut grad);
            }
            (sse, grad)
        });
        let mut total = 0.0;
        let mut grad = vec![0.0; self.values.len()];
        for (sse, g) in partials {
            total += sse;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        for v in &mut grad {
            *v /= n;
        }
        (total / n, grad)
    }

    /// Normalised predictions for every example.
    pub fn predict_dataset(&self, data: &WindowedDataset, exec: Exec) -> Vec<f64> {
        let idx: Vec<usize> = (0..data.len()).collect();
        exec.map_chunks(&idx, GRAD_CHUNK, |_, chunk| {
            let mut trace = Trace::new(self.hidden, data.window);
            chunk
                .iter()
                .map(|&k| self.forward_trace(data.example(k).0, &mut trace))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }
}

/// Per-step activations kept for the backward pass. `h_all`/`c_all` hold
/// `steps + 1` states, index 0 being the zero initial state.
struct Trace {
    hidden: usize,
    f: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    m: Vec<f64>,
    h_all: Vec<f64>,
    c_all: Vec<f64>,
}

impl Trace {
    fn new(hidden: usize, steps: usize) -> Self {
        let n = hidden * steps;
        Trace {
            hidden,
            f: vec![0.0; n],
            i: vec![0.0; n],
            o: vec![0.0; n],
            g: vec![0.0; n],
            m: vec![0.0; n],
            h_all: vec![0.0; n + hidden],
            c_all: vec![0.0; n + hidden],
        }
    }

    fn reset(&mut self, steps: usize) {
        let n = self.hidden * steps;
        for v in [&mut self.f, &mut self.i, &mut self.o, &mut self.g, &mut self.m] {
            v.resize(n, 0.0);
        }
        self.h_all.resize(n + self.hidden, 0.0);
        self.c_all.resize(n + self.hidden, 0.0);
        self.h_all[..self.hidden].fill(0.0);
        self.c_all[..self.hidden].fill(0.0);
    }

    fn h(&self, t: usize) -> &[f64] {
        &self.h_all[t * self.hidden..(t + 1) * self.hidden]
    }

    fn c(&self, t: usize) -> &[f64] {
        &self.c_all[t * self.hidden..(t + 1) * self.hidden]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::dataset::make_windows;

    #[test]
    fn zero_network_predicts_output_bias() {
        for act in [Activation::Tanh, Activation::Relu, Activation::Sigmoid] {
            let mut p = LstmParams::zeros(3, act);
            assert_eq!(p.forward(&[0.1, 0.5, 0.9]).unwrap(), 0.0);
            p.set_output_bias(0.25);
            assert_eq!(p.forward(&[0.1, 0.5, 0.9]).unwrap(), 0.25);
        }
    }

    /// One hidden unit, tanh, two steps, worked by hand:
    ///
    /// with every gate weight on `h` equal to `u`, on `x` equal to `w`,
    /// biases `b`, output weight 2 and output bias 0.5:
    ///   step 1: a = w·x1 + b (h0 = 0)
    ///           f = i = o = σ(a), g = tanh(a), c1 = σ(a)·tanh(a)
    ///           h1 = σ(a)·tanh(c1)
    ///   step 2: a' = u·h1 + w·x2 + b
    ///           c2 = σ(a')·c1 + σ(a')·tanh(a'), h2 = σ(a')·tanh(c2)
    ///   ŷ = 2·h2 + 0.5
    #[test]
    fn scalar_cell_matches_hand_derivation() {
        let (u, w, b) = (0.4, -0.7, 0.1);
        let (x1, x2) = (0.3, 0.8);
        let mut p = LstmParams::zeros(1, Activation::Tanh);
        for g in 0..GATES {
            let wr = p.weight_range(g);
            p.values[wr.start] = u;
            p.values[wr.start + 1] = w;
            let br = p.bias_range(g);
            p.values[br.start] = b;
        }
        let wy = p.out_weight_range().start;
        p.values[wy] = 2.0;
        p.set_output_bias(0.5);

        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let a1: f64 = w * x1 + b;
        let c1 = s(a1) * a1.tanh();
        let h1 = s(a1) * c1.tanh();
        let a2: f64 = u * h1 + w * x2 + b;
        let c2 = s(a2) * c1 + s(a2) * a2.tanh();
        let h2 = s(a2) * c2.tanh();
        let expected = 2.0 * h2 + 0.5;

        let got = p.forward(&[x1, x2]).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn forward_is_deterministic_and_shape_checked() {
        let p = LstmParams::init(5, Activation::Softmax, 3);
        let w = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(p.forward(&w).unwrap().to_bits(), p.forward(&w).unwrap().to_bits());
        // appending then removing a step restores the prediction
        let mut longer = w.to_vec();
        longer.push(0.9);
        let _ = p.forward(&longer).unwrap();
        longer.pop();
        assert_eq!(p.forward(&longer).unwrap(), p.forward(&w).unwrap());
        assert!(p.forward(&[]).is_err());
        assert!(LstmParams::from_values(2, Activation::Tanh, vec![0.0; 3]).is_err());
    }

    #[test]
    fn param_count() {
        assert_eq!(LstmParams::param_count(1), 4 * 3 + 2);
        assert_eq!(LstmParams::param_count(61), 4 * (61 * 62 + 61) + 62);
    }

    #[test]
    fn loss_and_gradient_mode_independent() {
        let s: Vec<f64> = (0..80).map(|k| (k as f64 * 0.3).sin()).collect();
        let d = make_windows(&s, 9).unwrap();
        let p = LstmParams::init(6, Activation::Tanh, 11);
        let idx: Vec<usize> = (0..d.len()).collect();
        let (l1, g1) = p.loss_and_gradient(&d, &idx, Exec::Sequential);
        let (l2, g2) = p.loss_and_gradient(&d, &idx, Exec::Parallel);
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
