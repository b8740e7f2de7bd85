use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{mat_add, mat_mul, mat_vec, transpose, ClassicalError, ClassicalModel, Mat2, Vec2, IDENTITY};
use crate::preprocess::log_difference;

/// How raw counts map into the space the model is fitted in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesTransform {
    Identity,
    /// `ln(x + 1)` levels.
    LogLevel,
    /// First differences of `ln(x + 1)`.
    LogDifference,
}

impl SeriesTransform {
    pub fn apply(self, raw: &[Vec2]) -> Result<Vec<Vec2>, ClassicalError> {
        match self {
            SeriesTransform::Identity => Ok(raw.to_vec()),
            SeriesTransform::LogLevel => {
                if let Some((index, v)) = raw.iter().enumerate().find(|(_, v)| !(v[0] >= 0.0 && v[1] >= 0.0)) {
                    let value = if v[0] >= 0.0 { v[1] } else { v[0] };
                    return Err(crate::preprocess::PreprocessError::Domain { index, value }.into());
                }
                Ok(raw.iter().map(|v| [v[0].ln_1p(), v[1].ln_1p()]).collect())
            }
            SeriesTransform::LogDifference => {
                let s: Vec<f64> = raw.iter().map(|v| v[0]).collect();
                let b: Vec<f64> = raw.iter().map(|v| v[1]).collect();
                let ds = log_difference(&s)?;
                let db = log_difference(&b)?;
                Ok(ds.into_iter().zip(db).map(|(a, b)| [a, b]).collect())
            }
        }
    }
}

/// Point forecasts and forecast-error covariance matrices in model space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpaceForecast {
    pub points: Vec<Vec2>,
    pub mse: Vec<Mat2>,
    pub psi: Vec<Mat2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub point: Vec<Vec2>,
    pub lower: Vec<Vec2>,
    pub upper: Vec<Vec2>,
    pub level: f64,
}

/// Moving-average weights `Psi_0..Psi_{n-1}` of the model:
/// `Psi_0 = I`, `Psi_i = M_i + sum_{j=1..min(i,p)} A_j Psi_{i-j}`.
pub fn psi_weights(ar: &[Mat2], ma: &[Mat2], n: usize) -> Vec<Mat2> {
    let mut psi: Vec<Mat2> = Vec::with_capacity(n);
    for i in 0..n {
        let mut w = if i == 0 {
            IDENTITY
        } else {
            ma.get(i - 1).copied().unwrap_or([[0.0; 2]; 2])
        };
        for j in 1..=i.min(ar.len()) {
            w = mat_add(&w, &mat_mul(&ar[j - 1], &psi[i - j]));
        }
        psi.push(w);
    }
    psi
}

fn sandwich(a: &Mat2, sigma: &Mat2) -> Mat2 {
    mat_mul(&mat_mul(a, sigma), &transpose(a))
}

/// Iterated forecasts from the end of `history` (already in model space).
pub fn forecast_model_space(
    model: &ClassicalModel,
    history: &[Vec2],
    horizon: usize,
) -> Result<ModelSpaceForecast, ClassicalError> {
    if horizon == 0 {
        return Err(ClassicalError::InvalidArgument("horizon must be positive".into()));
    }
    let (ar, ma) = (model.ar(), model.ma());
    let order = ar.len().max(ma.len()).max(1);
    if history.len() < order {
        return Err(ClassicalError::InsufficientData {
            len: history.len(),
            needed: order,
            p: ar.len(),
            q: ma.len(),
        });
    }
    let resid = model.conditional_residuals(history);
    let n = history.len();
    let mut path = history.to_vec();
    for h in 0..horizon {
        let t = n + h;
        let mut y = [0.0; 2];
        for (j, a) in ar.iter().enumerate() {
            let v = mat_vec(a, &path[t - j - 1]);
            y[0] += v[0];
            y[1] += v[1];
        }
        for (i, m) in ma.iter().enumerate() {
            // Future shocks have zero expectation.
            let k = t - i - 1;
            if k < n {
                let v = mat_vec(m, &resid[k]);
                y[0] += v[0];
                y[1] += v[1];
            }
        }
        path.push(y);
    }

    let sigma = model.residual_covariance();
    let psi = psi_weights(ar, ma, horizon);
    let mut mse = Vec::with_capacity(horizon);
    let mut acc = [[0.0; 2]; 2];
    for w in &psi {
        acc = mat_add(&acc, &sandwich(w, &sigma));
        mse.push(acc);
    }
    Ok(ModelSpaceForecast {
        points: path.split_off(n),
        mse,
        psi,
    })
}

/// Forecasts `horizon` steps beyond `history` (raw counts), returning point
/// forecasts and Gaussian intervals at `level`, mapped back to raw units.
pub fn forecast(
    model: &ClassicalModel,
    history: &[Vec2],
    transform: SeriesTransform,
    horizon: usize,
    level: f64,
) -> Result<ForecastResult, ClassicalError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(ClassicalError::InvalidArgument(format!("level {level} must lie in (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let transformed = transform.apply(history)?;
    let fc = forecast_model_space(model, &transformed, horizon)?;

    let (centre, var): (Vec<Vec2>, Vec<Vec2>) = match transform {
        SeriesTransform::Identity | SeriesTransform::LogLevel => (
            fc.points.clone(),
            fc.mse.iter().map(|m| [m[0][0], m[1][1]]).collect(),
        ),
        SeriesTransform::LogDifference => {
            // Levels are the last observed log level plus cumulated differences;
            // their errors load on the cumulated weights C_k = Psi_0 + ... + Psi_k.
            let last = history[history.len() - 1];
            let mut level_pt = [last[0].ln_1p(), last[1].ln_1p()];
            let sigma = model.residual_covariance();
            let mut cum = [[0.0; 2]; 2];
            let mut cum_weights = Vec::with_capacity(horizon);
            for w in &fc.psi {
                cum = mat_add(&cum, w);
                cum_weights.push(cum);
            }
            let mut centre = Vec::with_capacity(horizon);
            let mut var = Vec::with_capacity(horizon);
            let mut acc = [[0.0; 2]; 2];
            for (d, c) in fc.points.iter().zip(&cum_weights) {
                level_pt = [level_pt[0] + d[0], level_pt[1] + d[1]];
                acc = mat_add(&acc, &sandwich(c, &sigma));
                centre.push(level_pt);
                var.push([acc[0][0], acc[1][1]]);
            }
            (centre, var)
        }
    };

    let back = |v: f64| match transform {
        SeriesTransform::Identity => v,
        _ => v.exp_m1(),
    };
    let mut point = Vec::with_capacity(horizon);
    let mut lower = Vec::with_capacity(horizon);
    let mut upper = Vec::with_capacity(horizon);
    for (c, v) in centre.iter().zip(&var) {
        let sd = [v[0].max(0.0).sqrt(), v[1].max(0.0).sqrt()];
        point.push([back(c[0]), back(c[1])]);
        lower.push([back(c[0] - z * sd[0]), back(c[1] - z * sd[1])]);
        upper.push([back(c[0] + z * sd[0]), back(c[1] + z * sd[1])]);
    }
    Ok(ForecastResult {
        point,
        lower,
        upper,
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{fit_var, VarModel, VarmaModel};

    fn var1(a: Mat2, sigma: Mat2) -> ClassicalModel {
        ClassicalModel::Var(VarModel {
            p: 1,
            coefficients: vec![a],
            residual_covariance: sigma,
        })
    }

    #[test]
    fn null_dynamics_forecast_zero() {
        let m = var1([[0.0; 2]; 2], IDENTITY);
        let fc = forecast(&m, &[[0.0, 0.0]; 4], SeriesTransform::Identity, 12, 0.95).unwrap();
        assert_eq!(fc.point.len(), 12);
        assert!(fc.point.iter().all(|p| *p == [0.0, 0.0]));
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = var1([[0.5, 0.0], [0.0, 0.5]], IDENTITY);
        assert!(forecast(&m, &[[1.0, 1.0]; 4], SeriesTransform::Identity, 0, 0.95).is_err());
        assert!(forecast(&m, &[[1.0, 1.0]; 4], SeriesTransform::Identity, 3, 1.0).is_err());
        assert!(forecast(&m, &[], SeriesTransform::Identity, 3, 0.9).is_err());
    }

    #[test]
    fn var1_point_and_mse() {
        let a = [[0.5, 0.1], [0.0, 0.3]];
        let sigma = [[1.0, 0.2], [0.2, 0.5]];
        let m = var1(a, sigma);
        let fc = forecast_model_space(&m, &[[2.0, 1.0]], 2).unwrap();
        assert!((fc.points[0][0] - 1.1).abs() < 1e-12);
        assert!((fc.points[0][1] - 0.3).abs() < 1e-12);
        assert!((fc.points[1][0] - (0.5 * 1.1 + 0.1 * 0.3)).abs() < 1e-12);
        assert_eq!(fc.mse[0], sigma);
        let expected = mat_add(&sigma, &sandwich(&a, &sigma));
        for i in 0..2 {
            for j in 0..2 {
                assert!((fc.mse[1][i][j] - expected[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn intervals_ordered_and_widening() {
        let a = [[0.6, 0.1], [0.05, 0.4]];
        let m = var1(a, [[0.3, 0.05], [0.05, 0.2]]);
        let history = vec![[3.0, 1.0], [4.0, 2.0], [6.0, 1.0]];
        for transform in [SeriesTransform::Identity, SeriesTransform::LogLevel, SeriesTransform::LogDifference] {
            let fc = forecast(&m, &history, transform, 10, 0.9).unwrap();
            for h in 0..10 {
                for c in 0..2 {
                    assert!(fc.lower[h][c] <= fc.point[h][c] && fc.point[h][c] <= fc.upper[h][c]);
                    if h > 0 && transform != SeriesTransform::LogLevel {
                        let w0 = fc.upper[h - 1][c] - fc.lower[h - 1][c];
                        let w1 = fc.upper[h][c] - fc.lower[h][c];
                        assert!(w1 >= w0 - 1e-12, "{transform:?} h={h}");
                    }
                }
            }
        }
    }

    #[test]
    fn model_space_widths_grow() {
        let m = var1([[0.6, 0.1], [0.05, 0.4]], [[0.3, 0.05], [0.05, 0.2]]);
        let fc = forecast_model_space(&m, &[[1.0, 1.0]], 20).unwrap();
        for w in fc.mse.windows(2) {
            assert!(w[1][0][0] >= w[0][0][0] && w[1][1][1] >= w[0][1][1]);
        }
    }

    #[test]
    fn stationary_forecast_decays() {
        let m = var1([[0.7, 0.2], [0.1, 0.5]], IDENTITY);
        let fc = forecast_model_space(&m, &[[5.0, -3.0]], 200).unwrap();
        let last = fc.points.last().unwrap();
        assert!(last[0].abs() < 1e-10 && last[1].abs() < 1e-10);
    }

    #[test]
    fn varma_uses_last_shock_for_one_step_only() {
        let m = ClassicalModel::Varma(VarmaModel {
            p: 1,
            q: 1,
            ar_coefficients: vec![[[0.0; 2]; 2]],
            ma_coefficients: vec![[[0.5, 0.0], [0.0, 0.5]]],
            residual_covariance: IDENTITY,
            residuals: vec![],
        });
        // With zero AR, the residual at t equals y_t minus 0.5 * previous residual.
        let history = vec![[0.0, 0.0], [2.0, 4.0]];
        let fc = forecast_model_space(&m, &history, 3).unwrap();
        assert_eq!(fc.points[0], [1.0, 2.0]);
        assert_eq!(fc.points[1], [0.0, 0.0]);
        assert_eq!(fc.psi[1], [[0.5, 0.0], [0.0, 0.5]]);
    }

    #[test]
    fn log_difference_recovers_last_level_with_zero_dynamics() {
        let hist: Vec<Vec2> = (0..30).map(|t| [10.0 + (t % 3) as f64, 2.0 + (t % 2) as f64]).collect();
        let fitted = ClassicalModel::Var(fit_var(&SeriesTransform::LogDifference.apply(&hist).unwrap(), 1).unwrap());
        let zero = ClassicalModel::Var(VarModel {
            p: 1,
            coefficients: vec![[[0.0; 2]; 2]],
            residual_covariance: fitted.residual_covariance(),
        });
        let fc = forecast(&zero, &hist, SeriesTransform::LogDifference, 3, 0.95).unwrap();
        for p in &fc.point {
            assert!((p[0] - hist[29][0]).abs() < 1e-9 && (p[1] - hist[29][1]).abs() < 1e-9);
        }
    }
}
