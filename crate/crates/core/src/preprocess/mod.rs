//! Transformations from weekly panels to model-ready series and datasets.

mod adf;
mod normalize;
mod split;
mod transform;
mod window;

pub use adf::{adf_is_stationary, adf_test, critical_value, schwert_max_lag, AdfResult};
pub use normalize::{fit_normalization, NormalizationParams};
pub use split::{make_split_plan, SplitLayout, SplitPlan};
pub use transform::{integrate_log_difference, log_difference};
pub use window::{
    build_dataset, test_windows, window_at, write_dataset, SkipReport, SupervisedDataset, WindowSample,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("series is constant; stationarity cannot be tested")]
    Degenerate,
    #[error("series of length {len} is too short (need more than {needed})")]
    TooShort { len: usize, needed: usize },
    #[error("alpha {0} is outside the tabulated range [0.01, 0.10]")]
    UnsupportedAlpha(f64),
    #[error("negative value {value} at index {index}")]
    Domain { index: usize, value: f64 },
    #[error("need at least {needed} samples, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },
    #[error("configuration: {0}")]
    Config(String),
}

/// Weeks per "month" throughout the pipeline.
pub const DEFAULT_MONTH_WEEKS: usize = 4;
