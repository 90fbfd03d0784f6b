//! Label-smoothed cross-entropy.

use qtranspile_core::tokenizer::PAD_ID;

use crate::scalar::Scalar;
use crate::ModelError;

/// Entropy of the smoothed target: `1 − ε` on the true class, `ε/(V−1)`
/// spread over the rest. No model can score below it.
pub fn entropy_floor(vocab: usize, eps: f64) -> f64 {
    let mut h = 0.0;
    if eps < 1.0 {
        h -= (1.0 - eps) * (1.0 - eps).ln();
    }
    if eps > 0.0 {
        h -= eps * (eps / (vocab - 1) as f64).ln();
    }
    h
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    row.iter().map(|&z| z - lse).collect()
}

fn row_loss(logp: &[f64], target: usize, eps: f64) -> f64 {
    let v = logp.len();
    let off = eps / (v - 1) as f64;
    let mut l = 0.0;
    for (i, &lp) in logp.iter().enumerate() {
        let q = if i == target { 1.0 - eps } else { off };
        if q > 0.0 {
            l -= q * lp;
        }
    }
    l
}

fn check(logits_len: usize, targets: &[u32], vocab: usize) -> Result<(), ModelError> {
    if vocab < 2 || logits_len != targets.len() * vocab {
        return Err(ModelError::Shape(format!(
            "{} logits for {} targets over {vocab} classes",
            logits_len,
            targets.len()
        )));
    }
    if let Some(&id) = targets.iter().find(|&&t| t as usize >= vocab) {
        return Err(ModelError::TokenOutOfRange { id, vocab });
    }
    Ok(())
}

/// Mean smoothed cross-entropy over the rows whose target is not `<PAD>`.
/// `logits` is row-major `[targets.len(), vocab]`.
pub fn smoothed_ce<T: Scalar>(logits: &[T], targets: &[u32], vocab: usize, eps: f64) -> Result<f64, ModelError> {
    check(logits.len(), targets, vocab)?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (r, &t) in targets.iter().enumerate() {
        if t == PAD_ID {
            continue;
        }
        let row: Vec<f64> = logits[r * vocab..(r + 1) * vocab].iter().map(|v| v.f64()).collect();
        total += row_loss(&log_softmax(&row), t as usize, eps);
        n += 1;
    }
    if n == 0 {
        return Err(ModelError::EmptyBatch);
    }
    Ok(total / n as f64)
}

/// Per-row smoothed losses and the gradient of `Σ scale[r] · loss[r]` with
/// respect to the logits. `<PAD>` rows get zero loss and gradient.
pub fn ce_rows<T: Scalar>(
    logits: &[T],
    targets: &[u32],
    vocab: usize,
    eps: f64,
    scale: &[f64],
) -> Result<(Vec<f64>, Vec<T>), ModelError> {
    check(logits.len(), targets, vocab)?;
    let off = eps / (vocab - 1) as f64;
    let mut losses = vec![0.0; targets.len()];
    let mut grad = vec![T::zero(); logits.len()];
    for (r, &t) in targets.iter().enumerate() {
        if t == PAD_ID {
            continue;
        }
        let row: Vec<f64> = logits[r * vocab..(r + 1) * vocab].iter().map(|v| v.f64()).collect();
        let logp = log_softmax(&row);
        losses[r] = row_loss(&logp, t as usize, eps);
        for (i, &lp) in logp.iter().enumerate() {
            let q = if i == t as usize { 1.0 - eps } else { off };
            grad[r * vocab + i] = T::of(scale[r] * (lp.exp() - q));
        }
    }
    Ok((losses, grad))
}
