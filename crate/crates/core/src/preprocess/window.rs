use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{NormalizationParams, PreprocessError};
use crate::ingest::{PanelMap, WeeklyPanel};

/// An input window of `3 * month_weeks` weeks and its target: the average
/// weekly social count over the third month after the window ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub entity_id: String,
    pub input_social: Vec<f64>,
    pub input_broadcast: Vec<f64>,
    pub target: f64,
    /// 1-based index of the last input week.
    pub window_end_week: usize,
}

impl WindowSample {
    pub fn len(&self) -> usize {
        self.input_social.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_social.is_empty()
    }

    /// Mean weekly social count over the input window.
    pub fn input_social_mean(&self) -> f64 {
        self.input_social.iter().sum::<f64>() / self.input_social.len() as f64
    }

    /// 1-based inclusive range of weeks averaged into the target.
    pub fn target_weeks(&self, month_weeks: usize) -> (usize, usize) {
        (self.window_end_week + 2 * month_weeks + 1, self.window_end_week + 3 * month_weeks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedDataset {
    pub samples: Vec<WindowSample>,
    pub month_weeks: usize,
    pub normalization: Option<NormalizationParams>,
}

impl SupervisedDataset {
    pub fn new(samples: Vec<WindowSample>, month_weeks: usize) -> Self {
        Self {
            samples,
            month_weeks,
            normalization: None,
        }
    }

    pub fn window_len(&self) -> usize {
        3 * self.month_weeks
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    /// Subset with the same horizon and normalization.
    pub fn filtered(&self, keep: impl Fn(&WindowSample) -> bool) -> Self {
        Self {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            month_weeks: self.month_weeks,
            normalization: self.normalization,
        }
    }
}

/// Entities left out of a dataset, with the reason.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkipReport {
    pub skipped: Vec<(String, String)>,
}

/// The window whose last input week is `end_week` (1-based), if it and its
/// target fit inside the panel.
pub fn window_at(panel: &WeeklyPanel, end_week: usize, month_weeks: usize) -> Option<WindowSample> {
    let len = 3 * month_weeks;
    if month_weeks == 0 || end_week < len || end_week + 3 * month_weeks > panel.weeks() {
        return None;
    }
    let input = (end_week - len)..end_week;
    let target_weeks = &panel.social[(end_week + 2 * month_weeks)..(end_week + 3 * month_weeks)];
    Some(WindowSample {
        entity_id: panel.entity_id.clone(),
        input_social: panel.social[input.clone()].to_vec(),
        input_broadcast: panel.broadcast[input].to_vec(),
        target: target_weeks.iter().sum::<f64>() / month_weeks as f64,
        window_end_week: end_week,
    })
}

/// Slides windows over every panel with ends `L, L + stride, ...` while the
/// target stays within `max_end_week`. Panels shorter than six months are
/// skipped and reported.
pub fn build_dataset(
    panels: &PanelMap,
    month_weeks: usize,
    stride_weeks: usize,
    max_end_week: usize,
) -> Result<(SupervisedDataset, SkipReport), PreprocessError> {
    if month_weeks == 0 || stride_weeks == 0 {
        return Err(PreprocessError::Config("month_weeks and stride_weeks must be positive".into()));
    }
    let len = 3 * month_weeks;
    let mut samples = Vec::new();
    let mut report = SkipReport::default();
    for panel in panels.values() {
        if panel.weeks() < 6 * month_weeks {
            report.skipped.push((
                panel.entity_id.clone(),
                format!("{} weeks < {} needed for one window", panel.weeks(), 6 * month_weeks),
            ));
            continue;
        }
        let limit = max_end_week.min(panel.weeks());
        let mut end = len;
        while end + 3 * month_weeks <= limit {
            samples.extend(window_at(panel, end, month_weeks));
            end += stride_weeks;
        }
    }
    Ok((SupervisedDataset::new(samples, month_weeks), report))
}

/// The last complete window of each panel: its target is the final month.
pub fn test_windows(panels: &PanelMap, month_weeks: usize) -> (Vec<WindowSample>, SkipReport) {
    let mut out = Vec::new();
    let mut report = SkipReport::default();
    for panel in panels.values() {
        let end = panel.weeks().checked_sub(3 * month_weeks);
        match end.and_then(|e| window_at(panel, e, month_weeks)) {
            Some(w) => out.push(w),
            None => report
                .skipped
                .push((panel.entity_id.clone(), "panel too short for a test window".into())),
        }
    }
    (out, report)
}

/// `entity_id,window_end_week,target,social_1..L,broadcast_1..L`
pub fn write_dataset<W: Write>(writer: W, samples: &[WindowSample]) -> csv::Result<()> {
    let len = samples.first().map_or(0, WindowSample::len);
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["entity_id".to_string(), "window_end_week".into(), "target".into()];
    header.extend((1..=len).map(|i| format!("social_{i}")));
    header.extend((1..=len).map(|i| format!("broadcast_{i}")));
    wtr.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.entity_id.clone(), s.window_end_week.to_string(), s.target.to_string()];
        row.extend(s.input_social.iter().map(f64::to_string));
        row.extend(s.input_broadcast.iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
