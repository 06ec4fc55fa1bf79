use serde::{Deserialize, Serialize};

use crate::dsp::LogMelSpectrogram;
use crate::error::{Error, Result};

/// Equilibrium controller state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeganState {
    /// Weight of the fake term in the discriminator loss, kept in `[0, 1]`.
    pub k: f64,
    /// Target ratio of fake to real reconstruction loss.
    pub gamma: f64,
    /// Proportional gain.
    pub lambda: f64,
    /// Number of updates applied so far.
    pub step: u64,
}

impl BeganState {
    pub fn new(k0: f64, gamma: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&k0) || !(0.0..=1.0).contains(&gamma) || !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "need k0 and gamma in [0, 1] and lambda > 0 (got {k0}, {gamma}, {lambda})"
            )));
        }
        Ok(Self {
            k: k0,
            gamma,
            lambda,
            step: 0,
        })
    }
}

/// `L_real - k * L_fake`.
pub fn loss_discriminator(l_real: f64, l_fake: f64, k: f64) -> Result<f64> {
    if !(l_real >= 0.0 && l_fake >= 0.0) {
        return Err(Error::validation(format!(
            "reconstruction losses must be non-negative (real {l_real}, fake {l_fake})"
        )));
    }
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::validation(format!("k = {k} outside [0, 1]")));
    }
    Ok(l_real - k * l_fake)
}

/// Mean absolute difference of two equally shaped spectrograms.
pub fn mean_l1(y: &LogMelSpectrogram, y_hat: &LogMelSpectrogram) -> Result<f64> {
    if y.values().dim() != y_hat.values().dim() {
        return Err(Error::validation(format!(
            "target {:?} and output {:?} shapes differ",
            y.values().dim(),
            y_hat.values().dim()
        )));
    }
    let n = y.values().len().max(1) as f64;
    Ok(y.values()
        .iter()
        .zip(y_hat.values())
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .sum::<f64>()
        / n)
}

/// `L_fake + beta * mean|y - y_hat|` with a target, `L_fake` without.
pub fn loss_generator(l_fake: f64, y: Option<&LogMelSpectrogram>, y_hat: &LogMelSpectrogram, beta: f64) -> Result<f64> {
    match y {
        Some(y) => Ok(l_fake + beta * mean_l1(y, y_hat)?),
        None => Ok(l_fake),
    }
}

/// `k + lambda * (gamma * L_real - L_fake)`, clamped to `[0, 1]`.
pub fn update_k(state: BeganState, l_real: f64, l_fake: f64) -> BeganState {
    let raw = state.k + state.lambda * (state.gamma * l_real - l_fake);
    BeganState {
        k: if raw.is_nan() { state.k } else { raw.clamp(0.0, 1.0) },
        step: state.step + 1,
        ..state
    }
}

/// Mean fake loss over mean real loss across a history of steps.
pub fn diversity_ratio_estimate(l_real: &[f64], l_fake: &[f64]) -> Result<f64> {
    if l_real.is_empty() || l_real.len() != l_fake.len() {
        return Err(Error::invalid("loss histories must be non-empty and of equal length"));
    }
    let n = l_real.len() as f64;
    let real = l_real.iter().sum::<f64>() / n;
    let fake = l_fake.iter().sum::<f64>() / n;
    if real == 0.0 {
        return Err(Error::UndefinedMetric("mean real reconstruction loss is zero".into()));
    }
    Ok(fake / real)
}
