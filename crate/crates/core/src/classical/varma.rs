use serde::{Deserialize, Serialize};

use super::var::{fit_var, regress_lags};
use super::{outer_mean, ClassicalError, Mat2, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarmaModel {
    pub p: usize,
    pub q: usize,
    pub ar_coefficients: Vec<Mat2>,
    pub ma_coefficients: Vec<Mat2>,
    pub residual_covariance: Mat2,
    /// Second-stage residuals, aligned to the end of the estimation sample.
    pub residuals: Vec<Vec2>,
}

fn long_order(p: usize, q: usize) -> usize {
    p.max(q) + 4
}

/// Observations needed so that both least-squares stages keep at least five
/// spare degrees of freedom per equation.
pub(crate) fn varma_min_len(p: usize, q: usize) -> usize {
    let r = long_order(p, q);
    (3 * r + 4).max(r + q + 2 * (p + q) + 4)
}

/// Hannan-Rissanen two-stage estimate. A long VAR of order `max(p, q) + 4`
/// supplies shock estimates; `y_t` is then regressed on `p` lags of `y` and
/// `q` lags of those shocks. With `q == 0` this is exactly [`fit_var`].
pub fn fit_varma(series: &[Vec2], p: usize, q: usize) -> Result<VarmaModel, ClassicalError> {
    if p == 0 {
        return Err(ClassicalError::InvalidArgument("AR order must be positive".into()));
    }
    if q == 0 {
        let var = fit_var(series, p)?;
        let residuals = regress_lags(series, p, &[], 0, p)
            .map(|(_, _, r)| r)
            .ok_or(ClassicalError::RankDeficient { p, q })?;
        return Ok(VarmaModel {
            p,
            q,
            ar_coefficients: var.coefficients,
            ma_coefficients: Vec::new(),
            residual_covariance: var.residual_covariance,
            residuals,
        });
    }
    let needed = varma_min_len(p, q);
    if series.len() <= needed {
        return Err(ClassicalError::InsufficientData {
            len: series.len(),
            needed,
            p,
            q,
        });
    }

    let r = long_order(p, q);
    let (_, _, long_resid) = regress_lags(series, r, &[], 0, r).ok_or(ClassicalError::RankDeficient { p, q })?;
    let mut shocks = vec![[0.0; 2]; r];
    shocks.extend(long_resid);

    let (ar, ma, residuals) =
        regress_lags(series, p, &shocks, q, r + q).ok_or(ClassicalError::RankDeficient { p, q })?;
    Ok(VarmaModel {
        p,
        q,
        ar_coefficients: ar,
        ma_coefficients: ma,
        residual_covariance: outer_mean(&residuals),
        residuals,
    })
}
