use super::{FeatureLayout, MlError, ModelSpec, Regressor};
use crate::preprocess::{fit_normalization, make_split_plan, SplitLayout, SupervisedDataset};

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    /// Index into the candidate list.
    pub best: usize,
    /// Validation MAE of each candidate, in candidate order.
    pub scores: Vec<f64>,
}

/// Cuts weeks `1..=last_week` into `n_blocks` sequential blocks, trains each
/// candidate on the samples whose target month ends before the last block
/// and scores it by MAE on the samples whose target month ends inside it.
/// Ties keep the earlier candidate.
pub fn tune(
    dataset: &SupervisedDataset,
    layout: FeatureLayout,
    candidates: &[ModelSpec],
    last_week: usize,
    n_blocks: usize,
) -> Result<TuneOutcome, MlError> {
    if candidates.is_empty() {
        return Err(MlError::InvalidConfig("no tuning candidates".into()));
    }
    let plan = make_split_plan(last_week, SplitLayout::Sequential(n_blocks))
        .map_err(|e| MlError::InvalidConfig(e.to_string()))?;
    let m = dataset.month_weeks;
    let target_end = |s: &crate::preprocess::WindowSample| s.target_weeks(m).1;
    let mut train = dataset.filtered(|s| target_end(s) <= plan.train_end_week);
    let valid = dataset.filtered(|s| target_end(s) > plan.train_end_week && target_end(s) <= last_week);
    if train.is_empty() || valid.is_empty() {
        return Err(MlError::InvalidConfig(format!(
            "tuning split leaves {} training and {} validation samples",
            train.len(),
            valid.len()
        )));
    }
    train.normalization = fit_normalization(&train.samples).ok();

    let actual = valid.targets();
    let mut scores = Vec::with_capacity(candidates.len());
    for spec in candidates {
        let pred = spec.fit(&train, layout)?.predict(&valid.samples)?;
        let mae = pred.iter().zip(&actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / actual.len() as f64;
        scores.push(mae);
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(TuneOutcome { best, scores })
}
