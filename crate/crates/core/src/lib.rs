//! Breakout prediction for entities with social and broadcast mention counts:
//! ingestion, window construction, per-entity VAR/VARMA forecasting, pooled
//! tree and neural regressors, evaluation, and a synthetic data generator.

pub mod classical;
pub mod eval;
pub mod ingest;
mod linalg;
pub mod ml;
pub mod pipeline;
pub mod preprocess;
pub mod synth;

pub use classical::{ClassicalError, ClassicalModel, SeriesTransform};
pub use eval::{BreakoutAssessment, EvalReport, RecallMode};
pub use ingest::{Channel, MentionRecord, PanelMap, WeeklyPanel};
pub use ml::{FeatureLayout, ModelSpec, Regressor, TrainedModel};
pub use pipeline::{ModelArtifact, ModelChoice, ModelFamily, PipelineConfig};
pub use preprocess::{NormalizationParams, SupervisedDataset, WindowSample};
pub use synth::{ScenarioConfig, Scenario};
