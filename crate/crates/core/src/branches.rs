//! Branch scorers: small feed-forward networks mapping precomputed modality
//! features to class logits.
//!
//! Parameters are stored as one flat vector per branch so optimizers and the
//! finite-difference oracle can treat every branch uniformly. Layout is
//! `[W1 (hidden × input), b1 (hidden), W2 (classes × hidden), b2 (classes)]`,
//! or `[W (classes × input), b (classes)]` when `hidden_dim == 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which modality a branch consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Text,
    Image,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub weights: Vec<f64>,
}

/// Hidden pre-activations kept from the forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    hidden_pre: Vec<f64>,
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl BranchParams {
    pub fn param_count(input_dim: usize, hidden_dim: usize, num_classes: usize) -> usize {
        if hidden_dim == 0 {
            num_classes * input_dim + num_classes
        } else {
            hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim + num_classes
        }
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        BranchParams {
            input_dim,
            hidden_dim,
            num_classes,
            weights: vec![0.0; Self::param_count(input_dim, hidden_dim, num_classes)],
        }
    }

    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(input_dim: usize, hidden_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidInput(
                "branch input_dim and num_classes must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(input_dim, hidden_dim, num_classes);
        let layers: Vec<(usize, usize, usize)> = if hidden_dim == 0 {
            vec![(0, input_dim, num_classes)]
        } else {
            vec![
                (0, input_dim, hidden_dim),
                (hidden_dim * input_dim + hidden_dim, hidden_dim, num_classes),
            ]
        };
        for (offset, fan_in, fan_out) in layers {
            let a = glorot_bound(fan_in, fan_out);
            for w in &mut p.weights[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-a..=a);
            }
        }
        Ok(p)
    }

    pub fn check_shape(&self) -> Result<()> {
        let want = Self::param_count(self.input_dim, self.hidden_dim, self.num_classes);
        if self.weights.len() != want {
            return Err(Error::DimMismatch {
                what: "branch parameter vector",
                expected: want,
                got: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("branch parameters"));
        }
        Ok(())
    }

    /// Largest admissible |weight| per layer, in layout order.
    pub fn init_bounds(&self) -> Vec<f64> {
        if self.hidden_dim == 0 {
            vec![glorot_bound(self.input_dim, self.num_classes)]
        } else {
            vec![
                glorot_bound(self.input_dim, self.hidden_dim),
                glorot_bound(self.hidden_dim, self.num_classes),
            ]
        }
    }

    /// `(weight_matrix, bias)` slices for each layer.
    pub fn layers(&self) -> Vec<(&[f64], &[f64])> {
        let (i, h, k) = (self.input_dim, self.hidden_dim, self.num_classes);
        let w = &self.weights;
        if h == 0 {
            vec![(&w[..k * i], &w[k * i..])]
        } else {
            let b1 = h * i;
            let w2 = b1 + h;
            let b2 = w2 + k * h;
            vec![(&w[..b1], &w[b1..w2]), (&w[w2..b2], &w[b2..])]
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimMismatch {
                what: "branch input features",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("branch input features"));
        }
        Ok(())
    }

    /// Forward pass returning class logits.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x).0)
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> (Vec<f64>, ForwardCache) {
        let layers = self.layers();
        if self.hidden_dim == 0 {
            let (w, b) = layers[0];
            let out = affine(w, b, x);
            (out, ForwardCache { hidden_pre: Vec::new() })
        } else {
            let (w1, b1) = layers[0];
            let (w2, b2) = layers[1];
            let pre = affine(w1, b1, x);
            let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
            let out = affine(w2, b2, &act);
            (out, ForwardCache { hidden_pre: pre })
        }
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂logits`.
    pub(crate) fn backward(&self, x: &[f64], cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        let (i, h, k) = (self.input_dim, self.hidden_dim, self.num_classes);
        if h == 0 {
            let (gw, gb) = grad.split_at_mut(k * i);
            outer_accumulate(gw, d_out, x);
            for (g, d) in gb.iter_mut().zip(d_out) {
                *g += d;
            }
            return;
        }
        let w2 = &self.weights[h * i + h..h * i + h + k * h];
        let act: Vec<f64> = cache.hidden_pre.iter().map(|&v| v.max(0.0)).collect();

        let (g_first, g_second) = grad.split_at_mut(h * i + h);
        let (gw2, gb2) = g_second.split_at_mut(k * h);
        outer_accumulate(gw2, d_out, &act);
        for (g, d) in gb2.iter_mut().zip(d_out) {
            *g += d;
        }

        let mut d_hidden = vec![0.0; h];
        for (c, &dc) in d_out.iter().enumerate() {
            if dc == 0.0 {
                continue;
            }
            let row = &w2[c * h..(c + 1) * h];
            for (dh, &w) in d_hidden.iter_mut().zip(row) {
                *dh += dc * w;
            }
        }
        for (dh, &pre) in d_hidden.iter_mut().zip(&cache.hidden_pre) {
            if pre <= 0.0 {
                *dh = 0.0;
            }
        }
        let (gw1, gb1) = g_first.split_at_mut(h * i);
        outer_accumulate(gw1, &d_hidden, x);
        for (g, d) in gb1.iter_mut().zip(&d_hidden) {
            *g += d;
        }
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            let row = &w[r * n..(r + 1) * n];
            bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
        })
        .collect()
}

fn outer_accumulate(g: &mut [f64], rows: &[f64], cols: &[f64]) {
    let n = cols.len();
    for (r, &dr) in rows.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        for (gv, &c) in g[r * n..(r + 1) * n].iter_mut().zip(cols) {
            *gv += dr * c;
        }
    }
}

pub fn init_branch(input_dim: usize, hidden_dim: usize, num_classes: usize, seed: u64) -> Result<BranchParams> {
    BranchParams::init(input_dim, hidden_dim, num_classes, seed)
}

pub fn score_text(t: &[f64], params: &BranchParams) -> Result<Vec<f64>> {
    params.forward(t)
}

pub fn score_image(i: &[f64], params: &BranchParams) -> Result<Vec<f64>> {
    params.forward(i)
}

/// Joint branch over the concatenation `[text, image]`.
pub fn score_joint(t: &[f64], i: &[f64], params: &BranchParams) -> Result<Vec<f64>> {
    params.forward(&concat(t, i))
}

pub fn concat(t: &[f64], i: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(t.len() + i.len());
    v.extend_from_slice(t);
    v.extend_from_slice(i);
    v
}
