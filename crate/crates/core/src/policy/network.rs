//! A two-hidden-layer ReLU perceptron with sparse inputs and hand-written
//! backpropagation. Only the output rows a node actually needs are evaluated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    /// `in_dim x hidden`, one row per input feature.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `hidden x hidden`, one row per second-layer unit.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// `out_dim x hidden`, one row per output slot.
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Hidden activations kept for the backward pass.
pub struct Activations {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

impl Mlp {
    /// Hidden layers get uniform fan-in scaling; the output layer starts at
    /// zero so a fresh network is uniform at every node.
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, active_inputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (3.0 / active_inputs.max(1) as f64).sqrt();
        let a2 = (6.0 / hidden as f64).sqrt();
        let w1 = (0..in_dim * hidden).map(|_| rng.gen_range(-a1..a1)).collect();
        let w2 = (0..hidden * hidden).map(|_| rng.gen_range(-a2..a2)).collect();
        Mlp {
            in_dim,
            hidden,
            out_dim,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; hidden],
            w3: vec![0.0; out_dim * hidden],
            b3: vec![0.0; out_dim],
        }
    }

    pub fn blocks(&self) -> [&Vec<f64>; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn zeros_like(&self) -> [Vec<f64>; 6] {
        self.blocks().map(|b| vec![0.0; b.len()])
    }

    pub fn hidden_forward(&self, features: &[(usize, f64)]) -> Activations {
        let h = self.hidden;
        let mut a1 = self.b1.clone();
        for &(f, x) in features {
            let row = &self.w1[f * h..(f + 1) * h];
            for (z, w) in a1.iter_mut().zip(row) {
                *z += x * w;
            }
        }
        a1.iter_mut().for_each(|z| *z = z.max(0.0));
        let mut a2 = self.b2.clone();
        for (k, z) in a2.iter_mut().enumerate() {
            let row = &self.w2[k * h..(k + 1) * h];
            *z += dot(row, &a1);
            *z = z.max(0.0);
        }
        Activations { a1, a2 }
    }

    pub fn output(&self, act: &Activations, slot: usize) -> f64 {
        let h = self.hidden;
        let row = &self.w3[slot * h..(slot + 1) * h];
        self.b3[slot] + dot(row, &act.a2)
    }

    /// Adds the parameter gradient of `sum_s dlogit[s] * logit[s]` to `grads`.
    pub fn backward(
        &self,
        features: &[(usize, f64)],
        act: &Activations,
        dlogits: &[(usize, f64)],
        grads: &mut [Vec<f64>; 6],
    ) {
        let h = self.hidden;
        let mut da2 = vec![0.0; h];
        for &(s, d) in dlogits {
            if d == 0.0 {
                continue;
            }
            grads[5][s] += d;
            let row = &self.w3[s * h..(s + 1) * h];
            let grow = &mut grads[4][s * h..(s + 1) * h];
            for k in 0..h {
                grow[k] += d * act.a2[k];
                da2[k] += d * row[k];
            }
        }
        let mut da1 = vec![0.0; h];
        for k in 0..h {
            if act.a2[k] <= 0.0 || da2[k] == 0.0 {
                continue;
            }
            let dz = da2[k];
            grads[3][k] += dz;
            let row = &self.w2[k * h..(k + 1) * h];
            let grow = &mut grads[2][k * h..(k + 1) * h];
            for j in 0..h {
                grow[j] += dz * act.a1[j];
                da1[j] += dz * row[j];
            }
        }
        for j in 0..h {
            if act.a1[j] <= 0.0 {
                da1[j] = 0.0;
            }
        }
        for (j, d) in da1.iter().enumerate() {
            grads[1][j] += d;
        }
        for &(f, x) in features {
            let grow = &mut grads[0][f * h..(f + 1) * h];
            for (g, d) in grow.iter_mut().zip(&da1) {
                *g += x * d;
            }
        }
    }
}

/// Dot product over eight independent partial sums, which the compiler can
/// keep in vector registers.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}
