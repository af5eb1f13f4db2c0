//! One-hidden-layer networks with hand-written gradients, and Adam.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{exp, ln, sigmoid, sqrt, tanh};

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + ln(1.0 + exp(-z))
    } else {
        ln(1.0 + exp(z))
    }
}

/// Negative log likelihood of label `y` given logit `z`.
pub(crate) fn logit_nll(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> impl Iterator<Item = f64> + '_ {
    let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..n).map(move |_| rng.random_range(-limit..=limit))
}

fn split(theta: &[f64], d: usize, h: usize) -> (&[f64], &[f64], &[f64], f64) {
    let (w1, rest) = theta.split_at(h * d);
    let (b1, rest) = rest.split_at(h);
    let (w2, rest) = rest.split_at(h);
    (w1, b1, w2, rest[0])
}

/// `out = tanh(W1 x + b1)`; `out.len()` is the hidden width.
fn hidden_into(theta: &[f64], d: usize, x: &[f64], out: &mut [f64]) {
    let h = out.len();
    let (w1, b1, _, _) = split(theta, d, h);
    for (j, a) in out.iter_mut().enumerate() {
        let row = &w1[j * d..(j + 1) * d];
        *a = tanh(b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
    }
}

/// Input -> tanh hidden layer -> sigmoid output.
///
/// Parameters are one flat vector: `w1` (hidden x input, row-major), `b1`,
/// `w2`, then the output bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub theta: Vec<f64>,
}

impl Mlp {
    pub fn new(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut theta: Vec<f64> = glorot(rng, inputs, hidden, hidden * inputs).collect();
        theta.extend(core::iter::repeat_n(0.0, hidden));
        theta.extend(glorot(rng, hidden, 1, hidden));
        theta.push(0.0);
        Mlp { inputs, hidden, theta }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        split(&self.theta, self.inputs, self.hidden)
    }

    fn hidden_into(&self, x: &[f64], out: &mut [f64]) {
        hidden_into(&self.theta, self.inputs, x, out);
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut a = vec![0.0; self.hidden];
        self.hidden_into(x, &mut a);
        let (_, _, w2, b2) = self.split();
        b2 + w2.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Mean negative log likelihood over the batch and its gradient.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let (d, h) = (self.inputs, self.hidden);
        let (_, _, w2, b2) = self.split();
        let mut grad = vec![0.0; self.theta.len()];
        let mut a = vec![0.0; h];
        let mut loss = 0.0;
        let n = xs.len().max(1) as f64;
        for (x, &y) in xs.iter().zip(ys) {
            self.hidden_into(x, &mut a);
            let z = b2 + w2.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
            loss += logit_nll(z, y);
            let dz = (sigmoid(z) - y) / n;
            let (gw1, rest) = grad.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(h);
            gb2[0] += dz;
            for j in 0..h {
                gw2[j] += dz * a[j];
                let da = dz * w2[j] * (1.0 - a[j] * a[j]);
                gb1[j] += da;
                for (g, v) in gw1[j * d..(j + 1) * d].iter_mut().zip(x.iter()) {
                    *g += da * v;
                }
            }
        }
        (loss / n, grad)
    }
}

/// Per-row encoder `tanh(W x + b)`, mean pooling over rows, and a linear
/// decoder with a sigmoid output.
///
/// Parameters are one flat vector: encoder weights (hidden x input), encoder
/// bias, decoder weights, decoder bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeepSets {
    pub inputs: usize,
    pub hidden: usize,
    pub theta: Vec<f64>,
}

impl DeepSets {
    pub fn new(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let Mlp { theta, .. } = Mlp::new(inputs, hidden, rng);
        DeepSets { inputs, hidden, theta }
    }

    /// Encoded rows, `rows x hidden`.
    fn encode(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let h = self.hidden;
        let mut enc = vec![0.0; rows.len() * h];
        for (r, x) in rows.iter().enumerate() {
            hidden_into(&self.theta, self.inputs, x, &mut enc[r * h..(r + 1) * h]);
        }
        enc
    }

    /// Mean over rows per unit. Each unit's values are summed in sorted
    /// order so the result does not depend on row order at all.
    fn pool(&self, enc: &[f64], rows: usize) -> Vec<f64> {
        let h = self.hidden;
        let mut col = Vec::with_capacity(rows);
        (0..h)
            .map(|j| {
                col.clear();
                col.extend((0..rows).map(|r| enc[r * h + j]));
                col.sort_by(f64::total_cmp);
                col.iter().sum::<f64>() / rows.max(1) as f64
            })
            .collect()
    }

    fn forward(&self, rows: &[Vec<f64>]) -> (f64, Vec<f64>, Vec<f64>) {
        let enc = self.encode(rows);
        let pooled = self.pool(&enc, rows.len());
        let (_, _, w2, b2) = split(&self.theta, self.inputs, self.hidden);
        let z = b2 + w2.iter().zip(&pooled).map(|(w, v)| w * v).sum::<f64>();
        (z, pooled, enc)
    }

    pub fn logit(&self, rows: &[Vec<f64>]) -> f64 {
        self.forward(rows).0
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> f64 {
        sigmoid(self.logit(rows))
    }

    pub fn loss_and_grad(&self, sets: &[&[Vec<f64>]], ys: &[f64]) -> (f64, Vec<f64>) {
        let (d, h) = (self.inputs, self.hidden);
        let (_, _, w2, _) = split(&self.theta, d, h);
        let mut grad = vec![0.0; self.theta.len()];
        let mut loss = 0.0;
        let n = sets.len().max(1) as f64;
        for (rows, &y) in sets.iter().zip(ys) {
            let (z, pooled, enc) = self.forward(rows);
            loss += logit_nll(z, y);
            let dz = (sigmoid(z) - y) / n;
            let (gw1, rest) = grad.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(h);
            gb2[0] += dz;
            let per_row = 1.0 / rows.len().max(1) as f64;
            for j in 0..h {
                gw2[j] += dz * pooled[j];
                let dpool = dz * w2[j] * per_row;
                for (r, x) in rows.iter().enumerate() {
                    let a = enc[r * h + j];
                    let da = dpool * (1.0 - a * a);
                    gb1[j] += da;
                    for (g, v) in gw1[j * d..(j + 1) * d].iter_mut().zip(x.iter()) {
                        *g += da * v;
                    }
                }
            }
        }
        (loss / n, grad)
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(self.t));
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= self.lr * mh / (sqrt(vh) + self.eps);
        }
    }
}
