use super::{LoraError, Result};

/// Log-softmax via the max-shifted log-sum-exp.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Mean next-token negative log-likelihood.
pub fn cross_entropy_loss(logits: &[Vec<f64>], targets: &[usize]) -> Result<f64> {
    if logits.is_empty() {
        return Err(LoraError::EmptyInput("logits".into()));
    }
    if logits.len() != targets.len() {
        return Err(LoraError::Shape(format!("{} logit rows for {} targets", logits.len(), targets.len())));
    }
    let mut total = 0.0;
    for (row, &t) in logits.iter().zip(targets) {
        if t >= row.len() {
            return Err(LoraError::Index { target: t, vocab: row.len() });
        }
        total -= log_softmax(row)[t];
    }
    Ok((total / logits.len() as f64).max(0.0))
}
