use serde::{Deserialize, Serialize};

use super::{forecast_model_space, ClassicalError, ClassicalModel, Vec2};

pub type OrderGrid = Vec<(usize, usize)>;

/// p in 1..=4, q in 0..=2.
pub fn default_grid() -> OrderGrid {
    (1..=4).flat_map(|p| (0..=2).map(move |q| (p, q))).collect()
}

/// How validation forecasts are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// 1-step forecasts rolled forward through the validation segment.
    OneStep,
    /// `h`-step forecasts from every origin whose target is in validation.
    HorizonMatched(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub p: usize,
    pub q: usize,
    pub model: ClassicalModel,
    pub valid_mae: f64,
    /// Grid points that could not be fitted or scored, with the reason.
    pub skipped: Vec<((usize, usize), String)>,
}

fn validation_mae(
    model: &ClassicalModel,
    train: &[Vec2],
    valid: &[Vec2],
    mode: ValidationMode,
) -> Result<f64, ClassicalError> {
    let full: Vec<Vec2> = train.iter().chain(valid).copied().collect();
    let h = match mode {
        ValidationMode::OneStep => 1,
        ValidationMode::HorizonMatched(h) => h.max(1),
    };
    let (mut total, mut count) = (0.0, 0usize);
    // Origin `o` means the forecast conditions on `full[..o]`.
    for target in train.len()..full.len() {
        let Some(origin) = (target + 1).checked_sub(h) else { continue };
        if origin == 0 {
            continue;
        }
        let fc = forecast_model_space(model, &full[..origin], h)?;
        let pred = fc.points[h - 1];
        total += (pred[0] - full[target][0]).abs() + (pred[1] - full[target][1]).abs();
        count += 2;
    }
    if count == 0 {
        return Err(ClassicalError::InvalidArgument("validation segment is empty".into()));
    }
    Ok(total / count as f64)
}

/// Fits every grid point on `train` and keeps the one with the lowest
/// validation MAE. Inadmissible estimates are skipped. Ties go to the smaller `p + q`, then the smaller `p`.
pub fn select_order(
    train: &[Vec2],
    valid: &[Vec2],
    grid: &[(usize, usize)],
    mode: ValidationMode,
) -> Result<Selection, ClassicalError> {
    if grid.is_empty() {
        return Err(ClassicalError::InvalidArgument("empty order grid".into()));
    }
    let mut order: Vec<(usize, usize)> = grid.to_vec();
    order.sort_by_key(|&(p, q)| (p + q, p));
    order.dedup();

    let mut skipped = Vec::new();
    let mut best: Option<(f64, usize, usize, ClassicalModel)> = None;
    for (p, q) in order {
        let scored = ClassicalModel::fit(train, p, q).and_then(|m| {
            if !m.is_admissible() {
                return Err(ClassicalError::Inadmissible { p, q });
            }
            let mae = validation_mae(&m, train, valid, mode)?;
            if mae.is_finite() {
                Ok((mae, m))
            } else {
                Err(ClassicalError::InvalidArgument("non-finite validation error".into()))
            }
        });
        match scored {
            Ok((mae, model)) => {
                if best.as_ref().is_none_or(|(b, ..)| mae < *b) {
                    best = Some((mae, p, q, model));
                }
            }
            Err(e) => skipped.push(((p, q), e.to_string())),
        }
    }
    match best {
        Some((valid_mae, p, q, model)) => Ok(Selection {
            p,
            q,
            model,
            valid_mae,
            skipped,
        }),
        None => Err(ClassicalError::EstimationFailed(
            skipped
                .iter()
                .map(|((p, q), e)| format!("({p},{q}): {e}"))
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise_series(n: usize, seed: u64) -> Vec<Vec2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect()
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 12);
        assert_eq!(g[0], (1, 0));
        assert_eq!(*g.last().unwrap(), (4, 2));
    }

    #[test]
    fn single_grid_point_is_returned() {
        let y = noise_series(120, 1);
        let sel = select_order(&y[..100], &y[100..], &[(2, 0)], ValidationMode::OneStep).unwrap();
        assert_eq!((sel.p, sel.q), (2, 0));
    }

    #[test]
    fn zero_validation_ties_resolve_to_smallest_order() {
        let mut train = noise_series(60, 2);
        // A zero tail makes every no-MA forecast exactly zero.
        for v in train.iter_mut().skip(55) {
            *v = [0.0, 0.0];
        }
        let valid = vec![[0.0, 0.0]; 8];
        let grid = [(3, 0), (2, 0), (1, 0)];
        let sel = select_order(&train, &valid, &grid, ValidationMode::OneStep).unwrap();
        assert_eq!((sel.p, sel.q), (1, 0));
        assert_eq!(sel.valid_mae, 0.0);
    }

    #[test]
    fn all_failures_are_reported() {
        let y = vec![[1.0, 0.0]; 30];
        let err = select_order(&y[..20], &y[20..], &[(1, 0), (2, 1)], ValidationMode::OneStep).unwrap_err();
        assert!(matches!(err, ClassicalError::EstimationFailed(_)));
        assert!(select_order(&y, &y, &[], ValidationMode::OneStep).is_err());
    }

    #[test]
    fn infeasible_points_are_skipped() {
        let y = noise_series(40, 3);
        let sel = select_order(&y[..23], &y[23..31], &[(1, 0), (4, 2)], ValidationMode::OneStep).unwrap();
        assert_eq!((sel.p, sel.q), (1, 0));
        assert_eq!(sel.skipped.len(), 1);
        assert_eq!(sel.skipped[0].0, (4, 2));
    }

    #[test]
    fn horizon_matched_scores() {
        let y = noise_series(140, 4);
        let sel = select_order(&y[..100], &y[100..], &[(1, 0), (2, 0)], ValidationMode::HorizonMatched(12)).unwrap();
        assert!(sel.valid_mae.is_finite());
    }
}
