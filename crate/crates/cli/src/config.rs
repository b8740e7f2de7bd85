//! Run configuration: a TOML file whose values command-line flags override.
//! The resolved configuration is written next to every command's output.

use std::path::{Path, PathBuf};

use breakout_core::classical::OrderGrid;
use breakout_core::eval::{RecallMode, DEFAULT_K, DEFAULT_THRESHOLD};
use breakout_core::ingest::RecordFormat;
use breakout_core::{ModelChoice, ModelFamily, PipelineConfig, ScenarioConfig};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, seeds the scenario generator and every pooled model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads; all available cores when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Model keys such as `rf` or `gbt-tw`. `train` fits all ten when unset;
    /// `evaluate` uses every model file it finds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<String>>,
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub pipeline: PipelineConfig,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Daily mention records (`ingest`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    /// Weekly panel file (`train`, `evaluate`, `rank`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub panels: Option<PathBuf>,
    /// Directory of trained model files (`evaluate`, `rank`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models_dir: Option<PathBuf>,
    /// Output directory (`ingest`, `synth`, `train`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub origin: NaiveDate,
    pub span_weeks: usize,
    /// Entities with total social mentions `<= outlier_low` or `>= outlier_high` are dropped.
    pub outlier_low: u64,
    pub outlier_high: u64,
    pub require_broadcast: bool,
    /// `csv` or `jsonl`; taken from the file extension when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            origin: NaiveDate::from_ymd_opt(2019, 3, 10).expect("valid date"),
            span_weeks: 45,
            outlier_low: 10,
            outlier_high: 5000,
            require_broadcast: false,
            format: None,
        }
    }
}

impl DataConfig {
    pub fn record_format(&self, path: &Path) -> Result<RecordFormat, CliError> {
        let name = match &self.format {
            Some(f) => f.to_ascii_lowercase(),
            None => match path.extension().and_then(|e| e.to_str()) {
                Some("jsonl") | Some("json") => "jsonl".into(),
                _ => "csv".into(),
            },
        };
        match name.as_str() {
            "csv" => Ok(RecordFormat::Csv),
            "jsonl" => Ok(RecordFormat::Jsonl),
            other => Err(CliError::Usage(format!("unknown record format '{other}' (expected csv or jsonl)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub threshold: f64,
    pub recall_mode: RecallMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            recall_mode: RecallMode::TopK,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Internal(format!("serializing configuration: {e}")))
    }

    /// Pushes the top-level seed into the scenario and pooled model configs.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.scenario.seed = seed;
            self.pipeline = std::mem::take(&mut self.pipeline).with_seed(seed);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.threads == Some(0) {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        if self.data.span_weeks == 0 || self.pipeline.month_weeks == 0 {
            return Err(CliError::Usage("span_weeks and month_weeks must be positive".into()));
        }
        if self.data.outlier_low >= self.data.outlier_high {
            return Err(CliError::Usage("outlier_low must be below outlier_high".into()));
        }
        if self.eval.k == 0 {
            return Err(CliError::Usage("k must be positive".into()));
        }
        if !self.eval.threshold.is_finite() || self.eval.threshold <= 0.0 {
            return Err(CliError::Usage("threshold must be a positive number".into()));
        }
        if let Some(models) = &self.models {
            parse_models(models)?;
        }
        Ok(())
    }

    /// Selected models in canonical order, defaulting to every variant.
    pub fn model_choices(&self) -> Result<Vec<ModelChoice>, CliError> {
        match &self.models {
            Some(list) => parse_models(list),
            None => Ok(all_choices()),
        }
    }
}

pub fn all_choices() -> Vec<ModelChoice> {
    ModelFamily::ALL
        .iter()
        .flat_map(|&f| {
            let layouts: &[_] = if f.is_classical() {
                &[breakout_core::FeatureLayout::WithBroadcast]
            } else {
                &[breakout_core::FeatureLayout::WithBroadcast, breakout_core::FeatureLayout::SocialOnly]
            };
            layouts.iter().map(move |&l| ModelChoice::new(f, l).expect("valid choice"))
        })
        .collect()
}

/// Parses model keys, dropping duplicates and sorting into canonical order.
pub fn parse_models(keys: &[String]) -> Result<Vec<ModelChoice>, CliError> {
    if keys.is_empty() {
        return Err(CliError::Usage("no models selected".into()));
    }
    let mut out = Vec::new();
    for key in keys {
        let choice: ModelChoice = key.trim().parse().map_err(|e| CliError::Usage(format!("{e}")))?;
        if !out.contains(&choice) {
            out.push(choice);
        }
    }
    out.sort();
    Ok(out)
}

/// Parses `p=1..2,q=0..1` (inclusive ranges; a single value is allowed).
/// A missing axis keeps the default range.
pub fn parse_grid(spec: &str) -> Result<OrderGrid, CliError> {
    let bad = |m: &str| CliError::Usage(format!("invalid grid '{spec}': {m}"));
    let (mut p, mut q) = ((1usize, 4usize), (0usize, 2usize));
    for part in spec.split(',') {
        let (axis, range) = part.split_once('=').ok_or_else(|| bad("expected axis=range"))?;
        let (lo, hi) = match range.split_once("..") {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (range.trim(), range.trim()),
        };
        let lo: usize = lo.parse().map_err(|_| bad("range bounds must be integers"))?;
        let hi: usize = hi.parse().map_err(|_| bad("range bounds must be integers"))?;
        if lo > hi {
            return Err(bad("empty range"));
        }
        match axis.trim() {
            "p" => p = (lo, hi),
            "q" => q = (lo, hi),
            _ => return Err(bad("axes are p and q")),
        }
    }
    if p.0 == 0 {
        return Err(bad("p must be at least 1"));
    }
    Ok((p.0..=p.1).flat_map(|p| (q.0..=q.1).map(move |q| (p, q))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("p=1..2,q=0..1").unwrap(), vec![(1, 0), (1, 1), (2, 0), (2, 1)]);
        assert_eq!(parse_grid("p=3").unwrap(), vec![(3, 0), (3, 1), (3, 2)]);
        assert_eq!(parse_grid("q=0").unwrap().len(), 4);
        for bad in ["p=0..1", "p=2..1", "r=1", "p", "p=a..2"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn model_lists() {
        let keys: Vec<String> = ["varma", "rf", "rf-tw", "rf"].iter().map(|s| s.to_string()).collect();
        let names: Vec<_> = parse_models(&keys).unwrap().iter().map(|c| c.key()).collect();
        assert_eq!(names, ["varma", "rf", "rf-tw"]);
        assert!(parse_models(&["svm".to_string()]).is_err());
        assert_eq!(all_choices().len(), 10);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig {
            seed: Some(3),
            models: Some(vec!["rf".into()]),
            ..Default::default()
        };
        cfg.apply_seed();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.pipeline.rf.seed, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[eval]\nkk = 3").is_err());
        let cfg: RunConfig = toml::from_str("[eval]\nk = 3\nrecall_mode = \"all-positives\"").unwrap();
        assert_eq!((cfg.eval.k, cfg.eval.recall_mode), (3, RecallMode::AllPositives));
    }
}
