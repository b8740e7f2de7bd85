use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{outer_mean, ClassicalError, Mat2, Vec2};
use crate::linalg::least_squares;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub p: usize,
    /// `coefficients[j]` multiplies `y_{t-j-1}`.
    pub coefficients: Vec<Mat2>,
    pub residual_covariance: Mat2,
}

/// Minimum-observation rule for a VAR(p).
pub(crate) fn var_min_len(p: usize) -> usize {
    2 * p + 10
}

/// Least-squares VAR(p) without intercept.
pub fn fit_var(series: &[Vec2], p: usize) -> Result<VarModel, ClassicalError> {
    if p == 0 {
        return Err(ClassicalError::InvalidArgument("AR order must be positive".into()));
    }
    if series.len() <= var_min_len(p) {
        return Err(ClassicalError::InsufficientData {
            len: series.len(),
            needed: var_min_len(p),
            p,
            q: 0,
        });
    }
    let (coefficients, _, residuals) = regress_lags(series, p, &[], 0, p).ok_or(ClassicalError::RankDeficient { p, q: 0 })?;
    Ok(VarModel {
        p,
        coefficients,
        residual_covariance: outer_mean(&residuals),
    })
}

/// Regresses `y_t` for `t in start..T` on `p` lags of `y` and `q` lags of
/// `shocks`. Returns (AR matrices, MA matrices, residuals).
pub(crate) fn regress_lags(
    series: &[Vec2],
    p: usize,
    shocks: &[Vec2],
    q: usize,
    start: usize,
) -> Option<(Vec<Mat2>, Vec<Mat2>, Vec<Vec2>)> {
    let rows = series.len().checked_sub(start)?;
    let cols = 2 * (p + q);
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DMatrix::zeros(rows, 2);
    for (r, t) in (start..series.len()).enumerate() {
        y[(r, 0)] = series[t][0];
        y[(r, 1)] = series[t][1];
        for j in 0..p {
            x[(r, 2 * j)] = series[t - j - 1][0];
            x[(r, 2 * j + 1)] = series[t - j - 1][1];
        }
        for i in 0..q {
            x[(r, 2 * (p + i))] = shocks[t - i - 1][0];
            x[(r, 2 * (p + i) + 1)] = shocks[t - i - 1][1];
        }
    }
    let ls = least_squares(&x, &y).ok()?;
    let block = |k: usize| -> Mat2 {
        // Row `eq` of the coefficient matrix is the equation for channel `eq`.
        let mut m = [[0.0; 2]; 2];
        for (eq, row) in m.iter_mut().enumerate() {
            row[0] = ls.coef[(2 * k, eq)];
            row[1] = ls.coef[(2 * k + 1, eq)];
        }
        m
    };
    let ar = (0..p).map(block).collect();
    let ma = (p..p + q).map(block).collect();
    let fitted = &x * &ls.coef;
    let residuals = (0..rows)
        .map(|r| [y[(r, 0)] - fitted[(r, 0)], y[(r, 1)] - fitted[(r, 1)]])
        .collect();
    Some((ar, ma, residuals))
}
