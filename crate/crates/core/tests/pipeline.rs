//! Synthetic scenario through daily records, weekly panels, training and
//! evaluation.

use breakout_core::eval::{build_report, RecallMode};
use breakout_core::ingest::{aggregate_weekly, filter_outliers, read_panels, write_panels};
use breakout_core::pipeline::{train_model, training_dataset};
use breakout_core::preprocess::test_windows;
use breakout_core::synth::{generate, to_daily_records};
use breakout_core::{FeatureLayout, ModelArtifact, ModelChoice, ModelFamily, PipelineConfig, ScenarioConfig};

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default().with_seed(3);
    cfg.rf.n_trees = 20;
    cfg.gbt.n_rounds = 40;
    cfg.gbt.min_leaf = 5;
    cfg
}

#[test]
fn scenario_round_trips_and_trains() {
    let scenario = ScenarioConfig {
        n_entities: 60,
        seed: 8,
        ..ScenarioConfig::gradual_breakouts()
    };
    let generated = generate(&scenario).unwrap();
    let records = to_daily_records(&generated.panels);
    let panels = aggregate_weekly(&records, scenario.origin, scenario.span_weeks).unwrap();
    assert_eq!(panels, generated.panels);

    let (kept, _) = filter_outliers(&panels, 10, 1_000_000);
    let mut file = Vec::new();
    write_panels(&mut file, &kept).unwrap();
    assert_eq!(read_panels(file.as_slice()).unwrap(), kept);

    let config = small_config();
    let (ds, _) = training_dataset(&kept, 4, 1).unwrap();
    let (windows, _) = test_windows(&kept, 4);
    let mut results = Vec::new();
    for (family, layout) in [
        (ModelFamily::Var, FeatureLayout::WithBroadcast),
        (ModelFamily::Rf, FeatureLayout::WithBroadcast),
        (ModelFamily::Gbt, FeatureLayout::SocialOnly),
    ] {
        let choice = ModelChoice::new(family, layout).unwrap();
        let artifact = train_model(&kept, choice, &config, Some(&ds)).unwrap();
        let mut saved = Vec::new();
        artifact.write(&mut saved).unwrap();
        let loaded = ModelArtifact::read(saved.as_slice()).unwrap();
        let preds = loaded.predictions(&windows).unwrap();
        assert_eq!(preds, artifact.predictions(&windows).unwrap());
        results.push((choice.key(), preds));
    }
    let report = build_report(&results, &windows, 10, 1.2, RecallMode::TopK).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        assert!(row.mae.is_finite() && row.rmse >= row.mae);
        assert!((0.0..=1.0).contains(&row.precision_at_k) && (0.0..=1.0).contains(&row.recall_at_k));
    }
}
