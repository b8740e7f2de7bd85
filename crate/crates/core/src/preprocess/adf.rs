//! Augmented Dickey-Fuller unit-root test (constant, no trend).
//!
//! The regression is `dy_t = c + g*y_{t-1} + sum_j phi_j*dy_{t-j} + e_t`. The
//! number of lagged differences is chosen by AIC over `0..=max_lag` on a
//! common sample, then the chosen regression is re-estimated on all usable
//! observations. The statistic is `g / se(g)`.

use nalgebra::DMatrix;

use super::PreprocessError;
use crate::linalg::least_squares;

/// MacKinnon (2010) response-surface coefficients for the constant-only case:
/// `cv(T) = b0 + b1/T + b2/T^2 + b3/T^3`.
const TAU_C: [(f64, [f64; 4]); 3] = [
    (0.01, [-3.43035, -6.5393, -16.786, -79.433]),
    (0.05, [-2.86154, -2.8903, -4.234, -40.040]),
    (0.10, [-2.56677, -1.5384, -2.809, 0.0]),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfResult {
    pub statistic: f64,
    pub lags: usize,
    pub nobs: usize,
}

/// Schwert's rule `floor(12 * (n/100)^(1/4))`.
pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Critical value at level `alpha` for a regression with `nobs` observations.
/// Levels between the tabulated 1%, 5% and 10% points are interpolated linearly.
pub fn critical_value(alpha: f64, nobs: usize) -> Result<f64, PreprocessError> {
    if !(TAU_C[0].0..=TAU_C[2].0).contains(&alpha) {
        return Err(PreprocessError::UnsupportedAlpha(alpha));
    }
    let t = nobs as f64;
    let surface = |b: &[f64; 4]| b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t);
    for pair in TAU_C.windows(2) {
        let (a0, b0) = pair[0];
        let (a1, b1) = pair[1];
        if alpha <= a1 {
            let w = (alpha - a0) / (a1 - a0);
            return Ok((1.0 - w) * surface(&b0) + w * surface(&b1));
        }
    }
    unreachable!("alpha range checked above")
}

struct Fit {
    statistic: f64,
    rss: f64,
}

fn regress(series: &[f64], lags: usize, start: usize) -> Option<Fit> {
    let n = series.len();
    let rows = n - start;
    let cols = lags + 2;
    if rows <= cols {
        return None;
    }
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DMatrix::zeros(rows, 1);
    for (r, t) in (start..n).enumerate() {
        y[(r, 0)] = series[t] - series[t - 1];
        x[(r, 0)] = 1.0;
        x[(r, 1)] = series[t - 1];
        for j in 1..=lags {
            x[(r, 1 + j)] = series[t - j] - series[t - j - 1];
        }
    }
    let ls = least_squares(&x, &y).ok()?;
    let resid = &y - &x * &ls.coef;
    let rss = resid.norm_squared();
    let sigma2 = rss / (rows - cols) as f64;
    let se = (sigma2 * ls.xtx_inv[(1, 1)]).sqrt();
    if !(se > 0.0) {
        return None;
    }
    Some(Fit {
        statistic: ls.coef[(1, 0)] / se,
        rss,
    })
}

pub fn adf_test(series: &[f64], max_lag: usize) -> Result<AdfResult, PreprocessError> {
    let n = series.len();
    if n <= max_lag + 3 {
        return Err(PreprocessError::TooShort {
            len: n,
            needed: max_lag + 3,
        });
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(PreprocessError::Degenerate);
    }

    // Common sample for the AIC comparison.
    let common_start = max_lag + 1;
    let nobs = (n - common_start) as f64;
    let mut best: Option<(f64, usize)> = None;
    for lags in 0..=max_lag {
        if let Some(fit) = regress(series, lags, common_start) {
            if fit.rss <= 0.0 {
                continue;
            }
            let aic = nobs * (fit.rss / nobs).ln() + 2.0 * (lags + 2) as f64;
            if best.is_none_or(|(b, _)| aic < b) {
                best = Some((aic, lags));
            }
        }
    }
    let (_, lags) = best.ok_or(PreprocessError::TooShort {
        len: n,
        needed: max_lag + 3,
    })?;
    let fit = regress(series, lags, lags + 1).ok_or(PreprocessError::Degenerate)?;
    Ok(AdfResult {
        statistic: fit.statistic,
        lags,
        nobs: n - lags - 1,
    })
}

/// True when the unit-root null is rejected at level `alpha`.
pub fn adf_is_stationary(series: &[f64], alpha: f64, max_lag: usize) -> Result<bool, PreprocessError> {
    let result = adf_test(series, max_lag)?;
    Ok(result.statistic < critical_value(alpha, result.nobs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert_eq!(adf_is_stationary(&[0.0; 50], 0.05, 3), Err(PreprocessError::Degenerate));
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(adf_test(&[1.0, 2.0, 3.0], 1), Err(PreprocessError::TooShort { .. })));
    }

    #[test]
    fn critical_values_match_table_asymptotically() {
        assert!((critical_value(0.05, 1_000_000).unwrap() + 2.86154).abs() < 1e-4);
        assert!((critical_value(0.01, 1_000_000).unwrap() + 3.43035).abs() < 1e-4);
        // Small samples push the value further out.
        assert!(critical_value(0.05, 50).unwrap() < -2.9);
        assert!(critical_value(0.2, 100).is_err());
    }

    #[test]
    fn schwert_rule() {
        assert_eq!(schwert_max_lag(100), 12);
        assert_eq!(schwert_max_lag(200), 14);
        assert_eq!(schwert_max_lag(33), 9);
    }

    #[test]
    fn white_noise_is_stationary() {
        let y = noise(1, 200);
        assert!(adf_is_stationary(&y, 0.05, schwert_max_lag(200)).unwrap());
    }

    #[test]
    fn random_walk_is_not_stationary() {
        let mut acc = 0.0;
        let y: Vec<f64> = noise(2, 200)
            .into_iter()
            .map(|e| {
                acc += e;
                acc
            })
            .collect();
        assert!(!adf_is_stationary(&y, 0.05, schwert_max_lag(200)).unwrap());
    }
}
