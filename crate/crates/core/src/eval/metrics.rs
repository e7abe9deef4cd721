use crate::error::{CoreError, Result};

fn check(actuals: &[f64], predictions: &[f64]) -> Result<()> {
    if actuals.is_empty() {
        return Err(CoreError::Evaluation("empty forecast".into()));
    }
    if actuals.len() != predictions.len() {
        return Err(CoreError::Evaluation(format!(
            "{} actuals vs {} predictions",
            actuals.len(),
            predictions.len()
        )));
    }
    Ok(())
}

/// Mean of `2|y - f| / (|y| + |f|)`; steps with `y = f = 0` contribute 0.
pub fn smape(actuals: &[f64], predictions: &[f64]) -> Result<f64> {
    check(actuals, predictions)?;
    let total: f64 = actuals
        .iter()
        .zip(predictions)
        .map(|(y, f)| {
            let denom = y.abs() + f.abs();
            if denom == 0.0 {
                0.0
            } else {
                2.0 * (y - f).abs() / denom
            }
        })
        .sum();
    Ok(total / actuals.len() as f64)
}

pub fn mae(actuals: &[f64], predictions: &[f64]) -> Result<f64> {
    check(actuals, predictions)?;
    Ok(actuals
        .iter()
        .zip(predictions)
        .map(|(y, f)| (y - f).abs())
        .sum::<f64>()
        / actuals.len() as f64)
}

pub fn rmse(actuals: &[f64], predictions: &[f64]) -> Result<f64> {
    check(actuals, predictions)?;
    let mse = actuals
        .iter()
        .zip(predictions)
        .map(|(y, f)| (y - f) * (y - f))
        .sum::<f64>()
        / actuals.len() as f64;
    Ok(mse.sqrt())
}

/// `(MAE / std, RMSE / std)`.
pub fn standardized_errors(
    actuals: &[f64],
    predictions: &[f64],
    series_std: f64,
) -> Result<(f64, f64)> {
    if !(series_std > 0.0) {
        return Err(CoreError::Evaluation(format!(
            "series std {series_std} is not positive"
        )));
    }
    Ok((
        mae(actuals, predictions)? / series_std,
        rmse(actuals, predictions)? / series_std,
    ))
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

pub fn truncate(predictions: &[f64]) -> Vec<f64> {
    predictions.iter().map(|p| p.max(0.0)).collect()
}
