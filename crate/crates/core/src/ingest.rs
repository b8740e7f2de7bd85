//! Raw daily mention records, weekly aggregation and outlier filtering.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line} (row {row}): {message}")]
    Parse {
        line: usize,
        row: usize,
        message: String,
    },
    #[error("line {line} (row {row}): {message}")]
    Validation {
        line: usize,
        row: usize,
        message: String,
    },
    #[error("record for `{entity_id}` on {date} lies outside [{origin}, {end})")]
    OutOfRange {
        entity_id: String,
        date: NaiveDate,
        origin: NaiveDate,
        end: NaiveDate,
    },
    #[error("span_weeks must be positive")]
    EmptySpan,
    #[error("panel file: {0}")]
    PanelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IngestError {
    /// File line number of a row-level error, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Parse { line, .. } | IngestError::Validation { line, .. } => Some(*line),
            _ => None,
        }
    }

    /// 1-based data row of a row-level error, if any.
    pub fn row(&self) -> Option<usize> {
        match self {
            IngestError::Parse { row, .. } | IngestError::Validation { row, .. } => Some(*row),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Social,
    Broadcast,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Social => "social",
            Channel::Broadcast => "broadcast",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "social" => Ok(Channel::Social),
            "broadcast" => Ok(Channel::Broadcast),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Jsonl,
}

/// One entity's mention count on one channel for one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub entity_id: String,
    pub date: NaiveDate,
    pub channel: Channel,
    pub count: u64,
}

/// Per-entity weekly two-channel series. Week `w` (0-based) covers the days
/// `[start_date + 7w, start_date + 7w + 6]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyPanel {
    pub entity_id: String,
    pub start_date: NaiveDate,
    pub social: Vec<f64>,
    pub broadcast: Vec<f64>,
}

impl WeeklyPanel {
    pub fn new(entity_id: impl Into<String>, start_date: NaiveDate, social: Vec<f64>, broadcast: Vec<f64>) -> Self {
        assert_eq!(social.len(), broadcast.len(), "channel lengths differ");
        Self {
            entity_id: entity_id.into(),
            start_date,
            social,
            broadcast,
        }
    }

    pub fn weeks(&self) -> usize {
        self.social.len()
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Social => &self.social,
            Channel::Broadcast => &self.broadcast,
        }
    }

    pub fn total(&self, channel: Channel) -> f64 {
        self.channel(channel).iter().sum()
    }
}

pub type PanelMap = BTreeMap<String, WeeklyPanel>;

/// Parses mention records. Row order is preserved; the first bad row aborts.
pub fn parse_records<R: Read>(reader: R, format: RecordFormat) -> Result<Vec<MentionRecord>, IngestError> {
    match format {
        RecordFormat::Csv => parse_csv(reader),
        RecordFormat::Jsonl => parse_jsonl(reader),
    }
}

const CSV_HEADER: [&str; 4] = ["entity_id", "date", "channel", "count"];

fn parse_csv<R: Read>(reader: R) -> Result<Vec<MentionRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != CSV_HEADER {
        return Err(IngestError::Parse {
            line: 1,
            row: 0,
            message: format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), names.join(",")),
        });
    }

    let mut out = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| IngestError::Parse {
            line: e.position().map_or(row + 1, |p| p.line() as usize),
            row,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(row + 1, |p| p.line() as usize);
        if rec.len() != 4 {
            return Err(IngestError::Parse {
                line,
                row,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        out.push(record_from_fields(&rec[0], &rec[1], &rec[2], &rec[3], line, row)?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonRecord {
    entity_id: String,
    date: String,
    channel: String,
    count: serde_json::Number,
}

fn parse_jsonl<R: Read>(reader: R) -> Result<Vec<MentionRecord>, IngestError> {
    let mut out = Vec::new();
    let mut row = 0;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        row += 1;
        let rec: JsonRecord = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
            line: line_no,
            row,
            message: e.to_string(),
        })?;
        out.push(record_from_fields(
            &rec.entity_id,
            &rec.date,
            &rec.channel,
            &rec.count.to_string(),
            line_no,
            row,
        )?);
    }
    Ok(out)
}

fn record_from_fields(
    entity: &str,
    date: &str,
    channel: &str,
    count: &str,
    line: usize,
    row: usize,
) -> Result<MentionRecord, IngestError> {
    let parse_err = |message: String| IngestError::Parse { line, row, message };
    let invalid = |message: String| IngestError::Validation { line, row, message };

    if entity.is_empty() {
        return Err(parse_err("empty entity_id".into()));
    }
    let date = NaiveDate::parse_from_str(date, DATE_FORMAT)
        .map_err(|e| parse_err(format!("bad date `{date}`: {e}")))?;
    let channel = channel.parse::<Channel>().map_err(invalid)?;
    let signed: i128 = count
        .parse()
        .map_err(|_| parse_err(format!("count `{count}` is not a base-10 integer")))?;
    if signed < 0 {
        return Err(invalid(format!("negative count {signed}")));
    }
    let count = u64::try_from(signed).map_err(|_| invalid(format!("count {signed} overflows")))?;
    Ok(MentionRecord {
        entity_id: entity.to_string(),
        date,
        channel,
        count,
    })
}

/// Sums daily counts into 7-day blocks counted from `origin`. Missing days are
/// zeros and an entity absent from one channel gets an all-zero series there.
pub fn aggregate_weekly(
    records: &[MentionRecord],
    origin: NaiveDate,
    span_weeks: usize,
) -> Result<PanelMap, IngestError> {
    if span_weeks == 0 {
        return Err(IngestError::EmptySpan);
    }
    let end = origin + chrono::Days::new(7 * span_weeks as u64);
    let mut panels = PanelMap::new();
    for rec in records {
        if rec.date < origin || rec.date >= end {
            return Err(IngestError::OutOfRange {
                entity_id: rec.entity_id.clone(),
                date: rec.date,
                origin,
                end,
            });
        }
        let week = ((rec.date - origin).num_days() / 7) as usize;
        let panel = panels
            .entry(rec.entity_id.clone())
            .or_insert_with(|| WeeklyPanel::new(rec.entity_id.clone(), origin, vec![0.0; span_weeks], vec![0.0; span_weeks]));
        match rec.channel {
            Channel::Social => panel.social[week] += rec.count as f64,
            Channel::Broadcast => panel.broadcast[week] += rec.count as f64,
        }
    }
    Ok(panels)
}

/// Keeps entities whose total social mentions lie strictly inside `(low, high)`.
/// Returns the kept panels and the sorted ids of dropped entities.
pub fn filter_outliers(panels: &PanelMap, low: u64, high: u64) -> (PanelMap, Vec<String>) {
    let mut kept = PanelMap::new();
    let mut dropped = Vec::new();
    for (id, panel) in panels {
        let total = panel.total(Channel::Social);
        if total > low as f64 && total < high as f64 {
            kept.insert(id.clone(), panel.clone());
        } else {
            dropped.push(id.clone());
        }
    }
    (kept, dropped)
}

/// Drops entities whose broadcast series is all zero.
pub fn filter_require_broadcast(panels: &PanelMap) -> (PanelMap, Vec<String>) {
    let mut kept = PanelMap::new();
    let mut dropped = Vec::new();
    for (id, panel) in panels {
        if panel.broadcast.iter().any(|&v| v > 0.0) {
            kept.insert(id.clone(), panel.clone());
        } else {
            dropped.push(id.clone());
        }
    }
    (kept, dropped)
}

/// Writes panels as `entity_id,start_date,channel,w1,...,wW`, one row per
/// entity and channel.
pub fn write_panels<W: Write>(writer: W, panels: &PanelMap) -> Result<(), IngestError> {
    let weeks = panels.values().map(WeeklyPanel::weeks).max().unwrap_or(0);
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["entity_id".to_string(), "start_date".into(), "channel".into()];
    header.extend((1..=weeks).map(|w| format!("w{w}")));
    wtr.write_record(&header)?;
    for panel in panels.values() {
        for channel in [Channel::Social, Channel::Broadcast] {
            let mut row = vec![
                panel.entity_id.clone(),
                panel.start_date.format(DATE_FORMAT).to_string(),
                channel.to_string(),
            ];
            row.extend(panel.channel(channel).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_panels<R: Read>(reader: R) -> Result<PanelMap, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut panels = PanelMap::new();
    let mut seen: BTreeMap<(String, Channel), ()> = BTreeMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = idx + 2;
        let bad = |m: String| IngestError::PanelFormat(format!("line {line}: {m}"));
        if rec.len() < 4 {
            return Err(bad("expected at least one week column".into()));
        }
        let id = rec[0].to_string();
        let start = NaiveDate::parse_from_str(&rec[1], DATE_FORMAT).map_err(|e| bad(e.to_string()))?;
        let channel: Channel = rec[2].parse().map_err(bad)?;
        let values = rec
            .iter()
            .skip(3)
            .map(|v| v.parse::<f64>().map_err(|e| bad(format!("`{v}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(bad("weekly values must be finite and non-negative".into()));
        }
        if seen.insert((id.clone(), channel), ()).is_some() {
            return Err(bad(format!("duplicate {channel} row for `{id}`")));
        }
        let n = values.len();
        let panel = panels
            .entry(id.clone())
            .or_insert_with(|| WeeklyPanel::new(id.clone(), start, vec![0.0; n], vec![0.0; n]));
        if panel.weeks() != n || panel.start_date != start {
            return Err(bad(format!("inconsistent rows for `{id}`")));
        }
        match channel {
            Channel::Social => panel.social = values,
            Channel::Broadcast => panel.broadcast = values,
        }
    }
    Ok(panels)
}
