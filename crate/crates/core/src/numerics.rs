//! Differentiable primitives shared by the fusion and loss code.
//!
//! Everything here works on plain `f64` slices. The checked entry points
//! reject non-finite input; the `*_unchecked` variants are used on hot paths
//! where the caller already guarantees finiteness.

use crate::error::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

fn ensure_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Max-subtracted softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    ensure_finite(v, "softmax input")?;
    if v.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    Ok(softmax_unchecked(v))
}

pub(crate) fn softmax_unchecked(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn log_softmax_unchecked(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    v.iter().map(|&x| x - lse).collect()
}

/// Numerically stable `log(1 / (1 + e^-x))`.
#[inline]
pub fn log_sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Logistic function, stable on both tails.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise log-sigmoid.
pub fn log_sigmoid(v: &[f64]) -> Result<Vec<f64>> {
    ensure_finite(v, "log_sigmoid input")?;
    Ok(v.iter().map(|&x| log_sigmoid_scalar(x)).collect())
}

/// KL divergence scaled by `1/|Y|`: `(1/n) Σ p log(p/q)`.
///
/// Terms with `p_y == 0` contribute zero. A zero in `q` where `p` has mass
/// is an error.
pub fn kl_mean(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimMismatch {
            what: "kl_mean",
            expected: p.len(),
            got: q.len(),
        });
    }
    ensure_finite(p, "kl_mean p")?;
    ensure_finite(q, "kl_mean q")?;
    let mut acc = 0.0;
    for (y, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::ZeroProbability(y));
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc / p.len() as f64)
}

/// Class-weighted cross-entropy `-w[label] · log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize, weights: &[f64]) -> Result<f64> {
    ensure_finite(logits, "cross_entropy input")?;
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: logits.len(),
        });
    }
    if weights.len() != logits.len() {
        return Err(Error::DimMismatch {
            what: "class weights",
            expected: logits.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("class weights must be positive".into()));
    }
    Ok(cross_entropy_unchecked(logits, label, weights[label]))
}

pub(crate) fn cross_entropy_unchecked(logits: &[f64], label: usize, weight: f64) -> f64 {
    -weight * log_softmax_unchecked(logits)[label]
}

/// Gradient of [`cross_entropy`] with respect to the logits:
/// `w[label] · (softmax(logits) − onehot(label))`.
pub(crate) fn cross_entropy_grad(logits: &[f64], label: usize, weight: f64) -> Vec<f64> {
    let mut g = softmax_unchecked(logits);
    g[label] -= 1.0;
    for gi in &mut g {
        *gi *= weight;
    }
    g
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("finite-difference objective"));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`, falling back to the
/// absolute error when both norms are below `floor`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
