use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::keyed_rng;
use crate::quadrant::Quadrant;

/// Four-class log-linear model: logits `z = W x + b`, `W` stored row-major
/// (one row per quadrant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: [f64; 4],
}

impl PolicyParams {
    pub fn zeros(dim: usize) -> Self {
        PolicyParams {
            dim,
            weights: vec![0.0; 4 * dim],
            bias: [0.0; 4],
        }
    }

    /// Weights drawn uniformly from `[-scale, scale]`, bias zero.
    pub fn random(dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = keyed_rng(seed, &["policy-init"]);
        let weights = (0..4 * dim)
            .map(|_| if scale > 0.0 { rng.gen_range(-scale..=scale) } else { 0.0 })
            .collect();
        PolicyParams {
            dim,
            weights,
            bias: [0.0; 4],
        }
    }

    /// Number of scalar parameters, weights first then bias.
    pub fn len(&self) -> usize {
        4 * self.dim + 4
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// Flat view: weights then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn from_flat(dim: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != 4 * dim + 4 {
            return Err(Error::Dimension {
                expected: 4 * dim + 4,
                got: flat.len(),
            });
        }
        let mut bias = [0.0; 4];
        bias.copy_from_slice(&flat[4 * dim..]);
        Ok(PolicyParams {
            dim,
            weights: flat[..4 * dim].to_vec(),
            bias,
        })
    }

    /// `self -= step * grad`, with `grad` laid out like [`Self::to_flat`].
    pub(crate) fn descend(&mut self, grad: &[f64], step: f64) {
        let n = self.weights.len();
        for (w, g) in self.weights.iter_mut().zip(&grad[..n]) {
            *w -= step * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad[n..]) {
            *b -= step * g;
        }
    }
}

pub fn logits(params: &PolicyParams, x: &[f64]) -> Result<[f64; 4]> {
    if x.len() != params.dim {
        return Err(Error::Dimension {
            expected: params.dim,
            got: x.len(),
        });
    }
    let mut z = params.bias;
    let d = params.dim;
    // Feature vectors are mostly zeros; skip them.
    for (j, &v) in x.iter().enumerate() {
        if v != 0.0 {
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += params.weights[k * d + j] * v;
            }
        }
    }
    Ok(z)
}

fn log_softmax(z: [f64; 4]) -> [f64; 4] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.map(|v| v - lse)
}

/// Log-softmax of the four logits, in quadrant order.
pub fn class_log_probabilities(params: &PolicyParams, x: &[f64]) -> Result<[f64; 4]> {
    Ok(log_softmax(logits(params, x)?))
}

/// Argmax class; ties go to the earlier quadrant.
pub fn argmax_quadrant(logp: &[f64; 4]) -> Quadrant {
    let mut best = 0;
    for k in 1..4 {
        if logp[k] > logp[best] {
            best = k;
        }
    }
    Quadrant::ALL[best]
}

pub fn predict_quadrant(params: &PolicyParams, x: &[f64]) -> Result<Quadrant> {
    Ok(argmax_quadrant(&class_log_probabilities(params, x)?))
}

/// Log-probability of Q1 and its gradient with respect to the logits,
/// `d log p_1 / d z_k = [k = 1] - p_k`.
pub(crate) fn q1_logp_and_grad(params: &PolicyParams, x: &[f64]) -> Result<(f64, [f64; 4])> {
    let lp = class_log_probabilities(params, x)?;
    let mut g = [0.0; 4];
    for k in 0..4 {
        g[k] = f64::from(u8::from(k == 0)) - lp[k].exp();
    }
    Ok((lp[0], g))
}

/// Adds `scale * dz ⊗ x` to a flat gradient buffer.
pub(crate) fn accumulate(grad: &mut [f64], dim: usize, x: &[f64], dz: &[f64; 4], scale: f64) {
    let c = dz.map(|g| scale * g);
    for (j, &v) in x.iter().enumerate() {
        if v != 0.0 {
            for k in 0..4 {
                grad[k * dim + j] += c[k] * v;
            }
        }
    }
    for k in 0..4 {
        grad[4 * dim + k] += c[k];
    }
}
