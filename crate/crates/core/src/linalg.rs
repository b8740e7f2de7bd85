//! Least-squares helpers shared by the ADF test and the VAR/VARMA estimators.

use nalgebra::DMatrix;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RankDeficient;

/// Solution of `min ||X B - Y||` together with `(X'X)^-1`.
pub(crate) struct LeastSquares {
    pub coef: DMatrix<f64>,
    pub xtx_inv: DMatrix<f64>,
}

pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LeastSquares, RankDeficient> {
    assert_eq!(x.nrows(), y.nrows());
    if x.nrows() < x.ncols() || x.ncols() == 0 {
        return Err(RankDeficient);
    }
    let xtx = x.transpose() * x;
    let svd = xtx.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    if !max_sv.is_finite() || max_sv <= 0.0 {
        return Err(RankDeficient);
    }
    // Conditioning of X'X is the square of X's.
    let min_sv = svd.singular_values.min();
    if min_sv <= max_sv * RANK_TOL * RANK_TOL.sqrt() {
        return Err(RankDeficient);
    }
    let xtx_inv = svd.pseudo_inverse(0.0).map_err(|_| RankDeficient)?;
    let coef = &xtx_inv * (x.transpose() * y);
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(RankDeficient);
    }
    Ok(LeastSquares { coef, xtx_inv })
}
