//! Per-entity VAR and VARMA models over the two-channel (social, broadcast)
//! series, without intercept or exogenous terms.

mod forecast;
mod select;
mod var;
mod varma;

pub use forecast::{forecast, forecast_model_space, psi_weights, ForecastResult, ModelSpaceForecast, SeriesTransform};
pub use select::{default_grid, select_order, OrderGrid, Selection, ValidationMode};
pub use var::{fit_var, VarModel};
pub use varma::{fit_varma, VarmaModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::PreprocessError;

/// Observation of both channels at one time step: `[social, broadcast]`.
pub type Vec2 = [f64; 2];
/// Row-major 2x2 matrix.
pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Error, PartialEq)]
pub enum ClassicalError {
    #[error("{len} observations are not enough for order (p={p}, q={q}); need more than {needed}")]
    InsufficientData { len: usize, needed: usize, p: usize, q: usize },
    #[error("regressor matrix is rank deficient for order (p={p}, q={q})")]
    RankDeficient { p: usize, q: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("estimate for order (p={p}, q={q}) is explosive or non-invertible")]
    Inadmissible { p: usize, q: usize },
    #[error("estimation failed for every order in the grid: {0}")]
    EstimationFailed(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// A fitted VAR or VARMA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassicalModel {
    Var(VarModel),
    Varma(VarmaModel),
}

impl ClassicalModel {
    /// Fits a VAR when `q == 0`, otherwise a VARMA.
    pub fn fit(series: &[Vec2], p: usize, q: usize) -> Result<Self, ClassicalError> {
        if q == 0 {
            fit_var(series, p).map(ClassicalModel::Var)
        } else {
            fit_varma(series, p, q).map(ClassicalModel::Varma)
        }
    }

    pub fn p(&self) -> usize {
        match self {
            ClassicalModel::Var(m) => m.p,
            ClassicalModel::Varma(m) => m.p,
        }
    }

    pub fn q(&self) -> usize {
        match self {
            ClassicalModel::Var(_) => 0,
            ClassicalModel::Varma(m) => m.q,
        }
    }

    pub fn ar(&self) -> &[Mat2] {
        match self {
            ClassicalModel::Var(m) => &m.coefficients,
            ClassicalModel::Varma(m) => &m.ar_coefficients,
        }
    }

    pub fn ma(&self) -> &[Mat2] {
        match self {
            ClassicalModel::Var(_) => &[],
            ClassicalModel::Varma(m) => &m.ma_coefficients,
        }
    }

    pub fn residual_covariance(&self) -> Mat2 {
        match self {
            ClassicalModel::Var(m) => m.residual_covariance,
            ClassicalModel::Varma(m) => m.residual_covariance,
        }
    }

    /// True when the MA part is invertible and the AR part is not explosive.
    /// Without a constant term, a model of log levels carries the mean level
    /// through a root at (or within [`MAX_AR_RADIUS`] of) unity, so exact
    /// stationarity is not required.
    pub fn is_admissible(&self) -> bool {
        let neg_ma: Vec<Mat2> = self.ma().iter().map(|m| [[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]]).collect();
        companion_radius(self.ar()) <= MAX_AR_RADIUS && companion_radius(&neg_ma) < 1.0
    }

    /// Residuals of `history` under the model, conditioning on zero
    /// pre-sample shocks and skipping the first `p` steps.
    pub fn conditional_residuals(&self, history: &[Vec2]) -> Vec<Vec2> {
        let (ar, ma) = (self.ar(), self.ma());
        let p = ar.len();
        let mut resid = vec![[0.0; 2]; history.len()];
        for t in p..history.len() {
            let mut pred = [0.0; 2];
            for (j, a) in ar.iter().enumerate() {
                add_assign(&mut pred, mat_vec(a, &history[t - j - 1]));
            }
            for (i, m) in ma.iter().enumerate() {
                if t > i {
                    add_assign(&mut pred, mat_vec(m, &resid[t - i - 1]));
                }
            }
            resid[t] = [history[t][0] - pred[0], history[t][1] - pred[1]];
        }
        resid
    }

    /// Plain-text listing of orders and coefficients at 6 decimals.
    pub fn dump_text(&self) -> String {
        let mut out = format!("p {}\nq {}\n", self.p(), self.q());
        let fmt = |m: &Mat2| {
            format!(
                "  {:.6} {:.6}\n  {:.6} {:.6}\n",
                m[0][0], m[0][1], m[1][0], m[1][1]
            )
        };
        for (j, a) in self.ar().iter().enumerate() {
            out.push_str(&format!("AR{}\n{}", j + 1, fmt(a)));
        }
        for (i, m) in self.ma().iter().enumerate() {
            out.push_str(&format!("MA{}\n{}", i + 1, fmt(m)));
        }
        out.push_str(&format!("SIGMA\n{}", fmt(&self.residual_covariance())));
        out
    }
}

pub(crate) fn mat_vec(m: &Mat2, v: &Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub(crate) fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub(crate) fn mat_add(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

pub(crate) fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub(crate) const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

fn add_assign(acc: &mut Vec2, v: Vec2) {
    acc[0] += v[0];
    acc[1] += v[1];
}

/// Frobenius distance between two 2x2 matrices.
/// Largest AR companion root modulus accepted by [`ClassicalModel::is_admissible`].
pub const MAX_AR_RADIUS: f64 = 1.01;

/// Spectral radius of the companion matrix of `y_t = sum_j C_j y_{t-j}`.
/// Zero for an empty list.
pub fn companion_radius(coeffs: &[Mat2]) -> f64 {
    let k = coeffs.len();
    if k == 0 {
        return 0.0;
    }
    let n = 2 * k;
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (j, c) in coeffs.iter().enumerate() {
        for r in 0..2 {
            for col in 0..2 {
                m[(r, 2 * j + col)] = c[r][col];
            }
        }
    }
    for i in 2..n {
        m[(i, i - 2)] = 1.0;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn frobenius_distance(a: &Mat2, b: &Mat2) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean outer product of residual vectors.
pub(crate) fn outer_mean(resid: &[Vec2]) -> Mat2 {
    let mut s = [[0.0; 2]; 2];
    for e in resid {
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] += e[i] * e[j];
            }
        }
    }
    let n = resid.len().max(1) as f64;
    s.map(|row| row.map(|v| v / n))
}
