use super::PreprocessError;

/// `out[t] = ln(x[t+1] + 1) - ln(x[t] + 1)`.
pub fn log_difference(series: &[f64]) -> Result<Vec<f64>, PreprocessError> {
    if series.len() < 2 {
        return Err(PreprocessError::TooShort {
            len: series.len(),
            needed: 1,
        });
    }
    if let Some((index, &value)) = series.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(PreprocessError::Domain { index, value });
    }
    Ok(series.windows(2).map(|w| w[1].ln_1p() - w[0].ln_1p()).collect())
}

/// Inverse of [`log_difference`]: rebuilds the series from its first value.
pub fn integrate_log_difference(first: f64, diffs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(diffs.len() + 1);
    out.push(first);
    let mut level = first.ln_1p();
    for d in diffs {
        level += d;
        out.push(level.exp_m1());
    }
    out
}
