//! Shared fixtures for the model benchmarks.

use breakout_core::classical::Vec2;
use breakout_core::pipeline::training_dataset;
use breakout_core::synth::generate;
use breakout_core::{PanelMap, ScenarioConfig, SupervisedDataset};

/// Weekly panels from the gradual-breakout scenario.
pub fn panels(n_entities: usize, seed: u64) -> PanelMap {
    let config = ScenarioConfig {
        n_entities,
        seed,
        ..ScenarioConfig::gradual_breakouts()
    };
    generate(&config).expect("valid scenario").panels
}

/// Pooled training windows with normalization fitted.
pub fn dataset(panels: &PanelMap) -> SupervisedDataset {
    training_dataset(panels, 4, 1).expect("training windows").0
}

/// One entity's `(social, broadcast)` series on the `ln(1 + x)` scale.
pub fn log_series(panels: &PanelMap) -> Vec<Vec2> {
    let panel = panels.values().next().expect("at least one entity");
    panel
        .social
        .iter()
        .zip(&panel.broadcast)
        .map(|(s, b)| [s.ln_1p(), b.ln_1p()])
        .collect()
}
