//! Regression metrics, breakout labelling and ranking metrics, and the
//! per-model evaluation report.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::WindowSample;

pub const DEFAULT_THRESHOLD: f64 = 1.2;
pub const DEFAULT_K: usize = 500;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predicted and actual lengths differ ({predicted} vs {actual})")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("no values to score")]
    Empty,
    #[error("k must be positive")]
    InvalidK,
    #[error("model `{model}`: {message}")]
    MissingPredictions { model: String, message: String },
    #[error("report: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mean absolute error and root mean squared error.
pub fn mae_rmse(predicted: &[f64], actual: &[f64]) -> Result<(f64, f64), EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = predicted.len() as f64;
    let (abs, sq) = predicted
        .iter()
        .zip(actual)
        .fold((0.0, 0.0), |(a, s), (p, y)| (a + (p - y).abs(), s + (p - y) * (p - y)));
    Ok((abs / n, (sq / n).sqrt()))
}

/// Predicted and realised breakout ratios for one entity. The ratio is the
/// future third month's weekly average over the input window's weekly
/// average; it is undefined when the input average is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakoutAssessment {
    pub entity_id: String,
    pub gamma: f64,
    pub beta_actual: f64,
    pub beta_predicted: f64,
    pub ratio_actual: Option<f64>,
    pub ratio_predicted: Option<f64>,
    pub label_actual: bool,
    pub label_predicted: bool,
}

impl BreakoutAssessment {
    pub fn is_excluded(&self) -> bool {
        self.ratio_actual.is_none()
    }
}

/// Labels one window. Negative predictions are clamped to zero before the
/// ratio is taken.
pub fn assess_breakout(window: &WindowSample, predicted: f64, threshold: f64) -> BreakoutAssessment {
    let gamma = window.input_social_mean();
    let beta_actual = window.target;
    let ratio = |beta: f64| (gamma > 0.0).then(|| beta / gamma);
    let ratio_actual = ratio(beta_actual);
    let ratio_predicted = ratio(predicted.max(0.0));
    BreakoutAssessment {
        entity_id: window.entity_id.clone(),
        gamma,
        beta_actual,
        beta_predicted: predicted,
        ratio_actual,
        ratio_predicted,
        label_actual: ratio_actual.is_some_and(|r| r >= threshold),
        label_predicted: ratio_predicted.is_some_and(|r| r >= threshold),
    }
}

/// A top-K metric value. `used < k` flags that fewer than `k` entities had a
/// defined ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub value: f64,
    pub used: usize,
    pub k: usize,
}

impl AtK {
    pub fn truncated(&self) -> bool {
        self.used < self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecallMode {
    /// Share of the K entities with the highest actual ratio that the model flags.
    #[serde(rename = "topk")]
    TopK,
    /// Share of all actual breakouts that the model flags.
    AllPositives,
}

impl RecallMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RecallMode::TopK => "topk",
            RecallMode::AllPositives => "all-positives",
        }
    }
}

impl std::str::FromStr for RecallMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "topk" => Ok(RecallMode::TopK),
            "all-positives" => Ok(RecallMode::AllPositives),
            other => Err(format!("unknown recall mode '{other}' (expected topk or all-positives)")),
        }
    }
}

impl std::fmt::Display for RecallMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn ranked(
    assessments: &[BreakoutAssessment],
    key: impl Fn(&BreakoutAssessment) -> Option<f64>,
) -> Vec<(&BreakoutAssessment, f64)> {
    let mut v: Vec<_> = assessments.iter().filter_map(|a| key(a).map(|r| (a, r))).collect();
    v.sort_by(|(a, ra), (b, rb)| {
        rb.partial_cmp(ra)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
    v
}

/// Entities sorted by predicted ratio (descending, ties by id).
pub fn rank_by_prediction(assessments: &[BreakoutAssessment]) -> Vec<&BreakoutAssessment> {
    ranked(assessments, |a| a.ratio_predicted).into_iter().map(|(a, _)| a).collect()
}

/// One line of a ranking: entities in order of predicted ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub entity_id: String,
    pub ratio_predicted: f64,
    pub gamma: f64,
    pub beta_predicted: f64,
}

/// The first `k` entities by predicted ratio, ranks starting at 1. Fewer rows
/// come back when fewer entities have a defined ratio.
pub fn top_k(assessments: &[BreakoutAssessment], k: usize) -> Vec<RankRow> {
    ranked(assessments, |a| a.ratio_predicted)
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (a, ratio))| RankRow {
            rank: i + 1,
            entity_id: a.entity_id.clone(),
            ratio_predicted: ratio,
            gamma: a.gamma,
            beta_predicted: a.beta_predicted,
        })
        .collect()
}

/// `rank,entity_id,ratio_predicted,gamma,beta_predicted`
pub fn write_rank_csv<W: Write>(rows: &[RankRow], writer: W) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r)?;
    }
    if rows.is_empty() {
        wtr.write_record(["rank", "entity_id", "ratio_predicted", "gamma", "beta_predicted"])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Fraction of the top `k` by predicted ratio that are actual breakouts.
pub fn precision_at_k(assessments: &[BreakoutAssessment], k: usize) -> Result<AtK, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let top: Vec<_> = ranked(assessments, |a| a.ratio_predicted).into_iter().take(k).collect();
    let hits = top.iter().filter(|(a, _)| a.label_actual).count();
    Ok(AtK {
        value: if top.is_empty() { 0.0 } else { hits as f64 / top.len() as f64 },
        used: top.len(),
        k,
    })
}

pub fn recall_at_k(assessments: &[BreakoutAssessment], k: usize, mode: RecallMode) -> Result<AtK, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let pool: Vec<&BreakoutAssessment> = match mode {
        RecallMode::TopK => ranked(assessments, |a| a.ratio_actual)
            .into_iter()
            .take(k)
            .map(|(a, _)| a)
            .collect(),
        RecallMode::AllPositives => assessments.iter().filter(|a| a.label_actual).collect(),
    };
    let hits = pool.iter().filter(|a| a.label_predicted).count();
    let defined = assessments.iter().filter(|a| a.ratio_actual.is_some()).count();
    Ok(AtK {
        value: if pool.is_empty() { 0.0 } else { hits as f64 / pool.len() as f64 },
        used: defined.min(k),
        k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub mae: f64,
    pub rmse: f64,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub n_predicted_breakouts: usize,
    pub n_excluded_gamma_zero: usize,
    /// Test windows the model produced no prediction for.
    pub n_excluded_missing: usize,
    pub truncated: bool,
}

impl ReportRow {
    pub fn n_excluded(&self) -> usize {
        self.n_excluded_gamma_zero + self.n_excluded_missing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub threshold: f64,
    pub recall_mode: RecallMode,
    pub rows: Vec<ReportRow>,
}

/// Predictions of one model, aligned with the test windows. `None` marks a
/// window the model explicitly declined (e.g. classical estimation failed).
pub type ModelPredictions = (String, Vec<Option<f64>>);

pub fn assess_all(samples: &[WindowSample], predictions: &[Option<f64>], threshold: f64) -> Vec<BreakoutAssessment> {
    samples
        .iter()
        .zip(predictions)
        .filter_map(|(s, p)| p.map(|p| assess_breakout(s, p, threshold)))
        .collect()
}

pub fn build_report(
    model_results: &[ModelPredictions],
    test_samples: &[WindowSample],
    k: usize,
    threshold: f64,
    recall_mode: RecallMode,
) -> Result<EvalReport, EvalError> {
    let mut rows = Vec::with_capacity(model_results.len());
    for (model, preds) in model_results {
        let missing = |message: String| EvalError::MissingPredictions {
            model: model.clone(),
            message,
        };
        if preds.len() != test_samples.len() {
            return Err(missing(format!(
                "{} predictions for {} test windows",
                preds.len(),
                test_samples.len()
            )));
        }
        let (p, a): (Vec<f64>, Vec<f64>) = test_samples
            .iter()
            .zip(preds)
            .filter_map(|(s, p)| p.map(|p| (p, s.target)))
            .unzip();
        if p.is_empty() {
            return Err(missing("no predictions".into()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(missing("non-finite prediction".into()));
        }
        let (mae, rmse) = mae_rmse(&p, &a)?;
        let assessments = assess_all(test_samples, preds, threshold);
        let precision = precision_at_k(&assessments, k)?;
        let recall = recall_at_k(&assessments, k, recall_mode)?;
        rows.push(ReportRow {
            model: model.clone(),
            mae,
            rmse,
            precision_at_k: precision.value,
            recall_at_k: recall.value,
            n_predicted_breakouts: assessments.iter().filter(|a| a.label_predicted).count(),
            n_excluded_gamma_zero: assessments.iter().filter(|a| a.is_excluded()).count(),
            n_excluded_missing: preds.iter().filter(|p| p.is_none()).count(),
            truncated: precision.truncated() || recall.truncated(),
        });
    }
    Ok(EvalReport {
        k,
        threshold,
        recall_mode,
        rows,
    })
}

impl EvalReport {
    /// Aligned plain-text table: errors at two decimals, rates as percentages.
    pub fn to_table(&self) -> String {
        let prec = format!("Precision top {}", self.k);
        let rec = format!("Recall top {}", self.k);
        let name_w = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>8}  {:>8}  {:>prec_w$}  {:>rec_w$}  {:>10}  {:>8}",
            "Model",
            "MAE",
            "RMSE",
            prec,
            rec,
            "Breakouts",
            "Excluded",
            prec_w = prec.len(),
            rec_w = rec.len(),
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>8.2}  {:>8.2}  {:>prec_w$}  {:>rec_w$}  {:>10}  {:>8}{}",
                r.model,
                r.mae,
                r.rmse,
                format!("{:.1}%", 100.0 * r.precision_at_k),
                format!("{:.1}%", 100.0 * r.recall_at_k),
                r.n_predicted_breakouts,
                r.n_excluded(),
                if r.truncated { "  *" } else { "" },
                prec_w = prec.len(),
                rec_w = rec.len(),
            );
        }
        if self.rows.iter().any(|r| r.truncated) {
            let _ = writeln!(out, "* fewer than {} entities with a defined breakout ratio", self.k);
        }
        out
    }

    /// `model,mae,rmse,precision_at_k,recall_at_k,n_predicted_breakouts,n_excluded`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(CSV_HEADER)?;
        for r in &self.rows {
            wtr.write_record([
                r.model.clone(),
                r.mae.to_string(),
                r.rmse.to_string(),
                r.precision_at_k.to_string(),
                r.recall_at_k.to_string(),
                r.n_predicted_breakouts.to_string(),
                r.n_excluded().to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

const CSV_HEADER: [&str; 7] = [
    "model",
    "mae",
    "rmse",
    "precision_at_k",
    "recall_at_k",
    "n_predicted_breakouts",
    "n_excluded",
];

/// One parsed row of a report CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvReportRow {
    pub model: String,
    pub mae: f64,
    pub rmse: f64,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub n_predicted_breakouts: usize,
    pub n_excluded: usize,
}

pub fn read_report_csv<R: Read>(reader: R) -> Result<Vec<CsvReportRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(CSV_HEADER) {
        return Err(EvalError::Format("unexpected report header".into()));
    }
    rdr.deserialize().map(|r| r.map_err(EvalError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window(id: &str, gamma: f64, beta: f64) -> WindowSample {
        WindowSample {
            entity_id: id.into(),
            input_social: vec![gamma; 12],
            input_broadcast: vec![0.0; 12],
            target: beta,
            window_end_week: 12,
        }
    }

    fn assessment(id: &str, pred_ratio: f64, actual_ratio: f64, label_actual: bool, label_predicted: bool) -> BreakoutAssessment {
        BreakoutAssessment {
            entity_id: id.into(),
            gamma: 1.0,
            beta_actual: actual_ratio,
            beta_predicted: pred_ratio,
            ratio_actual: Some(actual_ratio),
            ratio_predicted: Some(pred_ratio),
            label_actual,
            label_predicted,
        }
    }

    #[test]
    fn identical_vectors_score_zero() {
        assert_eq!(mae_rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn hand_computed_errors() {
        let (mae, rmse) = mae_rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!(mae, 3.5);
        assert_eq!(rmse, 12.5f64.sqrt());
    }

    #[test]
    fn metric_errors() {
        assert!(matches!(mae_rmse(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(mae_rmse(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn breakout_boundary_is_inclusive() {
        let a = assess_breakout(&window("e", 100.0, 0.0), 120.0, 1.2);
        assert!((a.ratio_predicted.unwrap() - 1.2).abs() < 1e-15);
        assert!(a.label_predicted);
        let b = assess_breakout(&window("e", 100.0, 0.0), 119.0, 1.2);
        assert!(!b.label_predicted);
    }

    #[test]
    fn exact_threshold_ratio_counts() {
        // 6/5 is not exactly representable; construct the ratio from integers that are.
        let a = assess_breakout(&window("e", 10.0, 12.5), 12.0, 1.2);
        assert_eq!(a.ratio_predicted, Some(1.2));
        assert!(a.label_predicted);
        assert!(a.label_actual);
    }

    #[test]
    fn zero_gamma_is_excluded() {
        let a = assess_breakout(&window("e", 0.0, 5.0), 5.0, 1.2);
        assert_eq!(a.ratio_actual, None);
        assert_eq!(a.ratio_predicted, None);
        assert!(!a.label_actual && !a.label_predicted);
        let report = build_report(&[("m".into(), vec![Some(5.0)])], &[window("e", 0.0, 5.0)], 1, 1.2, RecallMode::TopK).unwrap();
        assert_eq!(report.rows[0].n_excluded_gamma_zero, 1);
        assert!(report.rows[0].truncated);
    }

    #[test]
    fn negative_prediction_is_clamped() {
        let a = assess_breakout(&window("e", 10.0, 5.0), -3.0, 1.2);
        assert_eq!(a.ratio_predicted, Some(0.0));
        assert_eq!(a.beta_predicted, -3.0);
    }

    #[test]
    fn precision_fixtures() {
        let all_true: Vec<_> = (0..4).map(|i| assessment(&format!("e{i}"), 2.0 - i as f64 * 0.1, 2.0, true, true)).collect();
        assert_eq!(precision_at_k(&all_true, 4).unwrap().value, 1.0);

        let mixed = vec![
            assessment("a", 4.0, 0.0, true, true),
            assessment("b", 3.0, 0.0, false, true),
            assessment("c", 2.0, 0.0, true, true),
            assessment("d", 1.5, 0.0, false, true),
            assessment("e", 0.5, 0.0, true, false),
        ];
        assert_eq!(precision_at_k(&mixed, 4).unwrap().value, 0.5);
        assert!(precision_at_k(&mixed, 0).is_err());
        let short = precision_at_k(&mixed, 10).unwrap();
        assert!(short.truncated());
        assert_eq!(short.value, 3.0 / 5.0);
    }

    #[test]
    fn precision_ties_break_on_id() {
        let v = vec![assessment("b", 1.0, 0.0, false, true), assessment("a", 1.0, 0.0, true, true)];
        assert_eq!(precision_at_k(&v, 1).unwrap().value, 1.0);
    }

    #[test]
    fn recall_mode_names() {
        for mode in [RecallMode::TopK, RecallMode::AllPositives] {
            assert_eq!(mode.as_str().parse::<RecallMode>().unwrap(), mode);
            assert_eq!(serde_json::to_string(&mode).unwrap(), format!("\"{mode}\""));
        }
        assert!("top-k".parse::<RecallMode>().is_err());
    }

    #[test]
    fn ranking_rows() {
        let v = vec![
            assessment("c", 1.0, 0.0, false, false),
            assessment("b", 2.5, 0.0, false, true),
            assessment("a", 1.0, 0.0, false, false),
        ];
        let rows = top_k(&v, 10);
        let ids: Vec<_> = rows.iter().map(|r| r.entity_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert_eq!(rows.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(top_k(&v, 1).len(), 1);

        let mut buf = Vec::new();
        write_rank_csv(&rows[..1], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rank,entity_id,ratio_predicted,gamma,beta_predicted\n1,b,2.5,1.0,2.5\n");
        let mut empty = Vec::new();
        write_rank_csv(&[], &mut empty).unwrap();
        assert!(String::from_utf8(empty).unwrap().starts_with("rank,entity_id"));
    }

    #[test]
    fn recall_fixtures() {
        let everyone: Vec<_> = (0..6).map(|i| assessment(&format!("e{i}"), 1.0, i as f64, i > 2, true)).collect();
        assert_eq!(recall_at_k(&everyone, 3, RecallMode::TopK).unwrap().value, 1.0);
        let nobody: Vec<_> = everyone.iter().cloned().map(|mut a| {
            a.label_predicted = false;
            a
        }).collect();
        assert_eq!(recall_at_k(&nobody, 3, RecallMode::TopK).unwrap().value, 0.0);

        // Ten entities, actual ratios 10..1; two of the actual top five flagged.
        let ten: Vec<_> = (0..10)
            .map(|i| {
                let actual = 10.0 - i as f64;
                assessment(&format!("e{i}"), 1.0, actual, true, i == 1 || i == 3 || i == 7)
            })
            .collect();
        assert_eq!(recall_at_k(&ten, 5, RecallMode::TopK).unwrap().value, 0.4);
        assert_eq!(recall_at_k(&ten, 5, RecallMode::AllPositives).unwrap().value, 0.3);
    }

    fn two_models() -> (Vec<ModelPredictions>, Vec<WindowSample>) {
        let samples: Vec<_> = (0..20)
            .map(|i| window(&format!("e{i:02}"), 10.0 + i as f64, 8.0 + 1.3 * i as f64))
            .collect();
        let preds: Vec<Option<f64>> = samples.iter().map(|s| Some(s.target * 1.1 + 1.0)).collect();
        (vec![("A".into(), preds.clone()), ("B".into(), preds)], samples)
    }

    #[test]
    fn identical_models_give_identical_rows() {
        let (models, samples) = two_models();
        let r = build_report(&models, &samples, 5, 1.2, RecallMode::TopK).unwrap();
        let (mut a, mut b) = (r.rows[0].clone(), r.rows[1].clone());
        a.model.clear();
        b.model.clear();
        assert_eq!(a, b);
    }

    #[test]
    fn report_errors_name_model() {
        let (mut models, samples) = two_models();
        models[1].1.pop();
        let err = build_report(&models, &samples, 5, 1.2, RecallMode::TopK).unwrap_err();
        assert!(err.to_string().contains("`B`"));
    }

    #[test]
    fn missing_predictions_are_counted() {
        let (mut models, samples) = two_models();
        models[0].1[3] = None;
        let r = build_report(&models, &samples, 5, 1.2, RecallMode::TopK).unwrap();
        assert_eq!(r.rows[0].n_excluded_missing, 1);
        assert_eq!(r.rows[0].n_excluded(), 1);
    }

    #[test]
    fn table_and_csv() {
        let (models, samples) = two_models();
        let r = build_report(&models, &samples, 500, 1.2, RecallMode::TopK).unwrap();
        let table = r.to_table();
        assert!(table.contains("Precision top 500"));
        assert!(table.contains("Recall top 500"));

        let mut row = r.rows[0].clone();
        row.mae = 11.8;
        let fixed = EvalReport { rows: vec![row], ..r.clone() };
        assert!(fixed.to_table().contains("11.80"));

        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = read_report_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (row, parsed) in r.rows.iter().zip(&back) {
            assert_eq!(parsed.model, row.model);
            assert_eq!(parsed.mae, row.mae);
            assert_eq!(parsed.rmse, row.rmse);
            assert_eq!(parsed.precision_at_k, row.precision_at_k);
            assert_eq!(parsed.recall_at_k, row.recall_at_k);
            assert_eq!(parsed.n_predicted_breakouts, row.n_predicted_breakouts);
            assert_eq!(parsed.n_excluded, row.n_excluded());
        }
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (p, a): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let (mae, rmse) = mae_rmse(&p, &a).unwrap();
            prop_assert!(rmse >= mae - 1e-9 * mae.abs().max(1.0));
        }

        #[test]
        fn ranking_metrics_are_permutation_invariant(
            ratios in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0), 1..40),
            k in 1usize..20,
            seed in any::<u64>(),
        ) {
            let items: Vec<_> = ratios
                .iter()
                .enumerate()
                .map(|(i, (p, a))| assessment(&format!("e{i}"), *p, *a, *a >= 1.2, *p >= 1.2))
                .collect();
            let mut shuffled = items.clone();
            let n = shuffled.len();
            for i in (1..n).rev() {
                let j = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64)) % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            let p1 = precision_at_k(&items, k).unwrap();
            let p2 = precision_at_k(&shuffled, k).unwrap();
            prop_assert_eq!(p1, p2);
            prop_assert!((0.0..=1.0).contains(&p1.value));
            for mode in [RecallMode::TopK, RecallMode::AllPositives] {
                let r1 = recall_at_k(&items, k, mode).unwrap();
                prop_assert_eq!(r1, recall_at_k(&shuffled, k, mode).unwrap());
                prop_assert!((0.0..=1.0).contains(&r1.value));
            }
        }

        #[test]
        fn common_scale_preserves_labels(
            gamma in 0.5f64..100.0,
            beta in 0.0f64..200.0,
            pred in 0.0f64..200.0,
            scale in 0.01f64..100.0,
        ) {
            let a = assess_breakout(&window("e", gamma, beta), pred, 1.2);
            let b = assess_breakout(&window("e", gamma * scale, beta * scale), pred * scale, 1.2);
            // Labels can only differ by rounding at the exact boundary.
            let near = |r: Option<f64>| r.is_some_and(|r| (r - 1.2).abs() < 1e-9);
            if !near(a.ratio_predicted) { prop_assert_eq!(a.label_predicted, b.label_predicted); }
            if !near(a.ratio_actual) { prop_assert_eq!(a.label_actual, b.label_actual); }
            let (m1, r1) = mae_rmse(&[pred], &[beta]).unwrap();
            let (m2, r2) = mae_rmse(&[pred * scale], &[beta * scale]).unwrap();
            prop_assert!((m2 - m1 * scale).abs() <= 1e-9 * m2.max(1.0));
            prop_assert!((r2 - r1 * scale).abs() <= 1e-9 * r2.max(1.0));
        }

        #[test]
        fn raising_threshold_never_adds_breakouts(
            values in prop::collection::vec((0.1f64..50.0, 0.0f64..80.0), 1..40),
            t1 in 0.5f64..3.0,
            dt in 0.0f64..2.0,
        ) {
            let samples: Vec<_> = values.iter().enumerate().map(|(i, (g, _))| window(&format!("e{i}"), *g, 1.0)).collect();
            let preds: Vec<Option<f64>> = values.iter().map(|(_, p)| Some(*p)).collect();
            let count = |t: f64| assess_all(&samples, &preds, t).iter().filter(|a| a.label_predicted).count();
            prop_assert!(count(t1 + dt) <= count(t1));
        }
    }
}
