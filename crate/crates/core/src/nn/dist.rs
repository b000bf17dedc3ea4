//! Categorical distributions over logits.

use rand::Rng;

use crate::error::{Error, Result};

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::invalid("empty logits"));
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("logit {i} is {}", logits[i])));
    }
    Ok(())
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    Ok(super::tape::log_softmax_slice(logits))
}

/// Inverse-CDF draw using one uniform variate from `rng`.
pub fn categorical_sample<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> Result<usize> {
    if probabilities.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding gap above the cumulative sum
    Ok(probabilities
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probabilities.len() - 1))
}

pub fn log_prob(probabilities: &[f64], index: usize) -> Result<f64> {
    probabilities.get(index).map(|p| p.ln()).ok_or_else(|| {
        Error::invalid(format!(
            "index {index} out of range for {} outcomes",
            probabilities.len()
        ))
    })
}

pub fn entropy(probabilities: &[f64]) -> f64 {
    -probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}
