//! End-to-end training and prediction shared by the command line and the
//! acceptance suite.
//!
//! Every model predicts the target of each entity's last complete window:
//! the window ends `3 * month_weeks` weeks before the panel does. Classical
//! models are fitted per entity on the weeks up to that point; pooled models
//! are trained on every earlier window whose target also ends by then.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::{
    default_grid, forecast, select_order, ClassicalModel, ForecastResult, OrderGrid, SeriesTransform, ValidationMode,
    Vec2,
};
use crate::ingest::{PanelMap, WeeklyPanel};
use crate::ml::{
    tune, FeatureLayout, ForestConfig, GbtConfig, LstmConfig, MlError, MlnnConfig, ModelSpec, Regressor, SavedModel,
    MODEL_FORMAT_VERSION,
};
use crate::preprocess::{
    adf_is_stationary, build_dataset, fit_normalization, make_split_plan, schwert_max_lag, SkipReport, SplitLayout,
    SupervisedDataset, WindowSample, DEFAULT_MONTH_WEEKS,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown model '{0}' (expected var, varma, rf, gbt, mlnn or lstm)")]
    UnknownModel(String),
    #[error("{0} has no social-only variant")]
    NoSocialOnlyVariant(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("no entity could be fitted with {0}")]
    NothingFitted(String),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Var,
    Varma,
    Rf,
    Gbt,
    Mlnn,
    Lstm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [Self::Var, Self::Varma, Self::Rf, Self::Gbt, Self::Mlnn, Self::Lstm];

    pub fn is_classical(self) -> bool {
        matches!(self, Self::Var | Self::Varma)
    }

    pub fn key(self) -> &'static str {
        match self {
            Self::Var => "var",
            Self::Varma => "varma",
            Self::Rf => "rf",
            Self::Gbt => "gbt",
            Self::Mlnn => "mlnn",
            Self::Lstm => "lstm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Var => "VAR",
            Self::Varma => "VARMA",
            Self::Rf => "RF",
            Self::Gbt => "GBT",
            Self::Mlnn => "MLNN",
            Self::Lstm => "LSTM",
        }
    }
}

impl FromStr for ModelFamily {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.key().eq_ignore_ascii_case(s))
            .ok_or_else(|| PipelineError::UnknownModel(s.to_string()))
    }
}

/// A model family plus the channels it sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelChoice {
    pub family: ModelFamily,
    pub layout: FeatureLayout,
}

impl ModelChoice {
    pub fn new(family: ModelFamily, layout: FeatureLayout) -> Result<Self, PipelineError> {
        if family.is_classical() && layout == FeatureLayout::SocialOnly {
            return Err(PipelineError::NoSocialOnlyVariant(family.label().into()));
        }
        Ok(Self { family, layout })
    }

    pub fn name(&self) -> String {
        crate::ml::model_name(self.family.label(), self.layout)
    }

    /// File-name friendly form, e.g. `rf` or `rf-tw`.
    pub fn key(&self) -> String {
        match self.layout {
            FeatureLayout::WithBroadcast => self.family.key().to_string(),
            FeatureLayout::SocialOnly => format!("{}-tw", self.family.key()),
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ModelChoice {
    type Err = PipelineError;
    /// `rf`, `rf-tw` (social only), case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.strip_suffix("-tw") {
            Some(base) => Self::new(base.parse()?, FeatureLayout::SocialOnly),
            None => Self::new(lower.parse()?, FeatureLayout::WithBroadcast),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    /// Candidate `(p, q)` orders. VAR only uses the `q = 0` points.
    pub grid: OrderGrid,
    pub adf_alpha: f64,
    pub validation: ValidationMode,
    pub split: SplitLayout,
    pub interval_level: f64,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            adf_alpha: 0.05,
            validation: ValidationMode::OneStep,
            split: SplitLayout::PaperHoldout,
            interval_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub enabled: bool,
    /// Sequential blocks the training weeks are cut into; the last one scores.
    pub n_blocks: usize,
    /// Extra candidates; each family is tuned over its own entries plus the
    /// base configuration.
    pub candidates: Vec<ModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub month_weeks: usize,
    pub stride_weeks: usize,
    pub classical: ClassicalConfig,
    pub rf: ForestConfig,
    pub gbt: GbtConfig,
    pub mlnn: MlnnConfig,
    pub lstm: LstmConfig,
    pub tuning: TuningConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            month_weeks: DEFAULT_MONTH_WEEKS,
            stride_weeks: 1,
            classical: ClassicalConfig::default(),
            rf: ForestConfig::default(),
            gbt: GbtConfig::default(),
            mlnn: MlnnConfig::default(),
            lstm: LstmConfig::default(),
            tuning: TuningConfig {
                enabled: false,
                n_blocks: 6,
                candidates: Vec::new(),
            },
        }
    }
}

impl PipelineConfig {
    /// Sets the seed of every pooled model.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rf.seed = seed;
        self.gbt.seed = seed;
        self.mlnn.seed = seed;
        self.lstm.seed = seed;
        for c in &mut self.tuning.candidates {
            match c {
                ModelSpec::RandomForest(x) => x.seed = seed,
                ModelSpec::Gbt(x) => x.seed = seed,
                ModelSpec::Mlnn(x) => x.seed = seed,
                ModelSpec::Lstm(x) => x.seed = seed,
            }
        }
        self
    }

    fn spec_for(&self, family: ModelFamily) -> Option<ModelSpec> {
        match family {
            ModelFamily::Rf => Some(ModelSpec::RandomForest(self.rf.clone())),
            ModelFamily::Gbt => Some(ModelSpec::Gbt(self.gbt.clone())),
            ModelFamily::Mlnn => Some(ModelSpec::Mlnn(self.mlnn.clone())),
            ModelFamily::Lstm => Some(ModelSpec::Lstm(self.lstm.clone())),
            ModelFamily::Var | ModelFamily::Varma => None,
        }
    }
}

/// Last input week (1-based) of the window whose target is the panel's final month.
pub fn forecast_origin(weeks: usize, month_weeks: usize) -> Option<usize> {
    weeks.checked_sub(3 * month_weeks).filter(|&e| e >= 3 * month_weeks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityForecast {
    pub entity_id: String,
    pub transform: SeriesTransform,
    pub p: usize,
    pub q: usize,
    pub valid_mae: f64,
    pub model: ClassicalModel,
    /// Forecast for the `3 * month_weeks` weeks after the origin, raw units.
    pub forecast: ForecastResult,
    /// Mean social forecast over the final month.
    pub prediction: f64,
}

/// ADF on `ln(x + 1)` of each channel. Any non-stationary channel switches
/// both to log differences; constant channels carry no evidence either way.
pub fn choose_transform(history: &[Vec2], alpha: f64) -> Result<SeriesTransform, String> {
    let mut any_tested = false;
    for ch in 0..2 {
        let logs: Vec<f64> = history.iter().map(|v| v[ch].ln_1p()).collect();
        match adf_is_stationary(&logs, alpha, schwert_max_lag(logs.len())) {
            Ok(true) => any_tested = true,
            Ok(false) => return Ok(SeriesTransform::LogDifference),
            Err(crate::preprocess::PreprocessError::Degenerate) => {}
            Err(e) => return Err(format!("stationarity test: {e}")),
        }
    }
    if any_tested {
        Ok(SeriesTransform::LogLevel)
    } else {
        Err("both channels are constant".into())
    }
}

/// Fits one entity: transform choice, order selection on the train/validation
/// split, refit on the full history, then a `3 * month_weeks`-step forecast
/// conditioned on the full history.
pub fn fit_classical_entity(
    panel: &WeeklyPanel,
    family: ModelFamily,
    config: &ClassicalConfig,
    month_weeks: usize,
) -> Result<EntityForecast, String> {
    let origin = forecast_origin(panel.weeks(), month_weeks).ok_or("panel too short")?;
    let history: Vec<Vec2> = (0..origin).map(|t| [panel.social[t], panel.broadcast[t]]).collect();
    let grid: OrderGrid = match family {
        ModelFamily::Var => config.grid.iter().copied().filter(|&(_, q)| q == 0).collect(),
        _ => config.grid.clone(),
    };
    if grid.is_empty() {
        return Err(format!("order grid has no points for {}", family.label()));
    }

    let transform = choose_transform(&history, config.adf_alpha)?;
    let series = transform.apply(&history).map_err(|e| e.to_string())?;
    // Week (1-based) of the first transformed element.
    let first_week = if transform == SeriesTransform::LogDifference { 2 } else { 1 };
    let plan = match config.split {
        SplitLayout::PaperHoldout => make_split_plan(panel.weeks(), config.split),
        SplitLayout::Sequential(_) => make_split_plan(origin, config.split),
    }
    .map_err(|e| e.to_string())?;
    let valid_end = plan.valid_end_week.min(origin);
    if plan.train_end_week < first_week || valid_end <= plan.train_end_week {
        return Err("split leaves no training or validation weeks".into());
    }
    let n_train = plan.train_end_week + 1 - first_week;
    let n_valid = valid_end - plan.train_end_week;
    let selection = select_order(
        &series[..n_train],
        &series[n_train..n_train + n_valid],
        &grid,
        config.validation,
    )
    .map_err(|e| e.to_string())?;

    // An inadmissible full-history refit falls back to the validated estimate.
    let model = match ClassicalModel::fit(&series, selection.p, selection.q) {
        Ok(m) if m.is_admissible() => m,
        _ => {
            debug!("{} {}: refit inadmissible, keeping training-window estimate", family.label(), panel.entity_id);
            selection.model.clone()
        }
    };
    let horizon = 3 * month_weeks;
    let fc = forecast(&model, &history, transform, horizon, config.interval_level).map_err(|e| e.to_string())?;
    let prediction = fc.point[2 * month_weeks..].iter().map(|v| v[0]).sum::<f64>() / month_weeks as f64;
    if !prediction.is_finite() {
        return Err(format!("non-finite forecast from order ({}, {})", selection.p, selection.q));
    }
    info!(
        "{} {}: {:?}, selected (p={}, q={}), validation MAE {:.4}",
        family.label(),
        panel.entity_id,
        transform,
        selection.p,
        selection.q,
        selection.valid_mae
    );
    Ok(EntityForecast {
        entity_id: panel.entity_id.clone(),
        transform,
        p: selection.p,
        q: selection.q,
        valid_mae: selection.valid_mae,
        model,
        forecast: fc,
        prediction,
    })
}

/// Per-entity classical fits; entities that cannot be fitted are listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalRun {
    pub family: ModelFamily,
    pub forecasts: BTreeMap<String, EntityForecast>,
    pub failures: Vec<(String, String)>,
}

impl ClassicalRun {
    pub fn prediction(&self, entity_id: &str) -> Option<f64> {
        self.forecasts.get(entity_id).map(|f| f.prediction)
    }
}

impl Regressor for ClassicalRun {
    fn name(&self) -> String {
        self.family.label().to_string()
    }

    /// Fails if any sample belongs to an entity without a fit.
    fn predict(&self, samples: &[WindowSample]) -> Result<Vec<f64>, MlError> {
        samples
            .iter()
            .map(|s| {
                self.prediction(&s.entity_id)
                    .ok_or_else(|| MlError::InvalidConfig(format!("no {} fit for entity {}", self.name(), s.entity_id)))
            })
            .collect()
    }
}

pub fn run_classical(panels: &PanelMap, family: ModelFamily, config: &ClassicalConfig, month_weeks: usize) -> ClassicalRun {
    let results: Vec<(String, Result<EntityForecast, String>)> = panels
        .par_iter()
        .map(|(id, p)| (id.clone(), fit_classical_entity(p, family, config, month_weeks)))
        .collect();
    let mut run = ClassicalRun {
        family,
        forecasts: BTreeMap::new(),
        failures: Vec::new(),
    };
    for (id, r) in results {
        match r {
            Ok(f) => {
                run.forecasts.insert(id, f);
            }
            Err(e) => {
                debug!("{} {id}: excluded ({e})", family.label());
                run.failures.push((id, e));
            }
        }
    }
    run
}

/// Pooled training windows: every window (step `stride_weeks`) whose target
/// ends no later than the forecast origin, with normalization fitted.
pub fn training_dataset(
    panels: &PanelMap,
    month_weeks: usize,
    stride_weeks: usize,
) -> Result<(SupervisedDataset, SkipReport), PipelineError> {
    let weeks = panels.values().map(WeeklyPanel::weeks).min().unwrap_or(0);
    let origin = forecast_origin(weeks, month_weeks)
        .ok_or_else(|| PipelineError::Config(format!("{weeks} weeks is too short for a forecast origin")))?;
    let (mut ds, skipped) = build_dataset(panels, month_weeks, stride_weeks, origin)?;
    ds.normalization = Some(fit_normalization(&ds.samples)?);
    Ok((ds, skipped))
}

/// A trained model of either kind, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelArtifact {
    Classical(ClassicalRun),
    Pooled(SavedModel),
}

impl ModelArtifact {
    pub fn name(&self) -> String {
        match self {
            Self::Classical(r) => r.name(),
            Self::Pooled(m) => m.name.clone(),
        }
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), MlError> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, MlError> {
        let artifact: Self = serde_json::from_reader(reader)?;
        if let Self::Pooled(m) = &artifact {
            if m.format_version != MODEL_FORMAT_VERSION {
                return Err(MlError::Version(m.format_version));
            }
        }
        Ok(artifact)
    }

    /// One prediction per sample; `None` where a classical fit is missing.
    pub fn predictions(&self, samples: &[WindowSample]) -> Result<Vec<Option<f64>>, MlError> {
        match self {
            Self::Classical(r) => Ok(samples.iter().map(|s| r.prediction(&s.entity_id)).collect()),
            Self::Pooled(m) => Ok(m.model.predict(samples)?.into_iter().map(Some).collect()),
        }
    }
}

/// Trains one model choice. Pooled models are tuned first when enabled.
pub fn train_model(
    panels: &PanelMap,
    choice: ModelChoice,
    config: &PipelineConfig,
    dataset: Option<&SupervisedDataset>,
) -> Result<ModelArtifact, PipelineError> {
    if choice.family.is_classical() {
        let run = run_classical(panels, choice.family, &config.classical, config.month_weeks);
        if run.forecasts.is_empty() {
            return Err(PipelineError::NothingFitted(choice.name()));
        }
        return Ok(ModelArtifact::Classical(run));
    }
    let owned;
    let ds = match dataset {
        Some(d) => d,
        None => {
            owned = training_dataset(panels, config.month_weeks, config.stride_weeks)?.0;
            &owned
        }
    };
    let base = config.spec_for(choice.family).expect("pooled family");
    let spec = if config.tuning.enabled {
        let mut candidates = vec![base.clone()];
        candidates.extend(
            config
                .tuning
                .candidates
                .iter()
                .filter(|c| c.family() == base.family())
                .cloned(),
        );
        if candidates.len() > 1 {
            let last_week = ds.samples.iter().map(|s| s.target_weeks(ds.month_weeks).1).max().unwrap_or(0);
            let out = tune(ds, choice.layout, &candidates, last_week, config.tuning.n_blocks)?;
            info!("{}: tuning scores {:?}, picked candidate {}", choice.name(), out.scores, out.best);
            candidates.swap_remove(out.best)
        } else {
            base
        }
    } else {
        base
    };
    let model = spec.fit(ds, choice.layout)?;
    Ok(ModelArtifact::Pooled(SavedModel::new(spec, model)))
}
