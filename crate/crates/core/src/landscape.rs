//! Random-walk statistics of a fitness landscape.

use crate::error::{Error, Result};

/// Lag-`lag` autocorrelation of a fitness series:
///
/// `r = sum_{t < T-lag} (f_t - m)(f_{t+lag} - m) / sum_t (f_t - m)^2`
///
/// where `m` is the series mean.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<f64> {
    if lag == 0 || lag >= series.len() {
        return Err(Error::UndefinedAutocorrelation(format!(
            "lag {lag} needs 1 <= lag < {}",
            series.len()
        )));
    }
    if series.iter().any(|f| !f.is_finite()) {
        return Err(Error::UndefinedAutocorrelation(
            "series has non-finite values".into(),
        ));
    }
    if series.iter().all(|&f| f == series[0]) {
        return Err(Error::UndefinedAutocorrelation("constant series".into()));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let num: f64 = series
        .iter()
        .zip(&series[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum();
    let den: f64 = series.iter().map(|f| (f - mean) * (f - mean)).sum();
    if den == 0.0 {
        return Err(Error::UndefinedAutocorrelation("zero variance".into()));
    }
    Ok(num / den)
}

/// Correlation length `-1 / ln|r1|`.
pub fn correlation_length(r1: f64) -> Result<f64> {
    let a = r1.abs();
    if !a.is_finite() || a == 0.0 || a > 1.0 {
        return Err(Error::UndefinedCorrelationLength(format!("r1 = {r1}")));
    }
    if a == 1.0 {
        return Err(Error::InfiniteCorrelationLength);
    }
    Ok(-1.0 / a.ln())
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
