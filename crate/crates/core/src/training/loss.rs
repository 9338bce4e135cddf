use super::TrainingError;

/// Probabilities are clamped to `[P_EPS, 1 - P_EPS]` before taking logs.
pub const P_EPS: f64 = 1e-15;

fn check_lengths(a: usize, b: usize) -> Result<(), TrainingError> {
    if a != b {
        return Err(TrainingError::Argument(format!(
            "prediction and label lengths differ: {a} vs {b}"
        )));
    }
    if a == 0 {
        return Err(TrainingError::Argument("loss over an empty batch".into()));
    }
    Ok(())
}

fn check_binary(y: &[f64]) -> Result<(), TrainingError> {
    match y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(v) => Err(TrainingError::Argument(format!("BCE label must be 0 or 1, got {v}"))),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy of probabilities `y_hat` against 0/1 labels.
pub fn bce_loss(y_hat: &[f64], y: &[f64]) -> Result<f64, TrainingError> {
    check_lengths(y_hat.len(), y.len())?;
    check_binary(y)?;
    let total: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(P_EPS, 1.0 - P_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// Mean binary cross-entropy from logits, `max(z,0) - z·y + ln(1 + e^{-|z|})`.
pub fn bce_with_logits_loss(z: &[f64], y: &[f64]) -> Result<f64, TrainingError> {
    check_lengths(z.len(), y.len())?;
    check_binary(y)?;
    let total: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
        .sum();
    Ok(total / y.len() as f64)
}

pub fn mse_loss(y_hat: &[f64], y: &[f64]) -> Result<f64, TrainingError> {
    check_lengths(y_hat.len(), y.len())?;
    let total: f64 = y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / y.len() as f64)
}
