//! Synthetic two-channel mention panels with injected breakouts, plus a
//! brute-force breakout labeller used as a cross-check.
//!
//! Each entity has a latent weekly intensity `base * exp(x_t) * lift_t`, where
//! `x_t` is a zero-mean AR(1) in log space and `lift_t` ramps linearly from 1
//! to `breakout_lift` over the last few weeks for breakout entities (the ramp
//! length is drawn per entity from `ramp_weeks`).
//! Social counts are Poisson draws from the intensity. Broadcast counts are
//! Poisson draws from a scaled copy of the social intensity shifted
//! `broadcast_lead_weeks` ahead, blended with the entity's base level by
//! `broadcast_coupling`.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Channel, MentionRecord, PanelMap, WeeklyPanel};

#[derive(Debug, Error, PartialEq)]
#[error("invalid scenario: {0}")]
pub struct ScenarioError(String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_entities: usize,
    pub span_weeks: usize,
    pub month_weeks: usize,
    pub origin: NaiveDate,
    /// Mean and standard deviation of `ln(base level)`, weekly mentions.
    pub base_log_mean: f64,
    pub base_log_sd: f64,
    /// Range the per-entity AR(1) coefficient is drawn from.
    pub ar_coefficient: (f64, f64),
    /// Innovation standard deviation of the log-space AR(1).
    pub noise_scale: f64,
    pub breakout_fraction: f64,
    pub breakout_lift: f64,
    /// Range (inclusive) the per-entity ramp length is drawn from. The lift
    /// ramps up linearly over that many weeks, ending at the last week.
    pub ramp_weeks: (usize, usize),
    pub broadcast_coupling: f64,
    pub broadcast_lead_weeks: usize,
    /// Broadcast intensity relative to social.
    pub broadcast_scale: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_entities: 500,
            span_weeks: 45,
            month_weeks: 4,
            origin: NaiveDate::from_ymd_opt(2019, 3, 10).expect("valid date"),
            base_log_mean: 30f64.ln(),
            base_log_sd: 0.5,
            ar_coefficient: (0.3, 0.8),
            noise_scale: 0.08,
            breakout_fraction: 0.2,
            breakout_lift: 1.8,
            ramp_weeks: (4, 4),
            broadcast_coupling: 0.5,
            broadcast_lead_weeks: 2,
            // Roughly 52 broadcast vs 662 social mentions per entity.
            broadcast_scale: 0.08,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Scenario where breakouts build up over 28 to 34 weeks and broadcast
    /// leads social by six weeks, so precursors are visible before the
    /// forecast origin. Levels are higher and less dispersed than the default.
    pub fn gradual_breakouts() -> Self {
        Self {
            base_log_mean: 120f64.ln(),
            base_log_sd: 0.2,
            noise_scale: 0.03,
            ramp_weeks: (28, 34),
            broadcast_coupling: 0.8,
            broadcast_lead_weeks: 6,
            broadcast_scale: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |m: &str| Err(ScenarioError(m.into()));
        if self.span_weeks == 0 || self.month_weeks == 0 {
            return fail("span_weeks and month_weeks must be positive");
        }
        if !(0.0..=1.0).contains(&self.breakout_fraction) {
            return fail("breakout_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.broadcast_coupling) {
            return fail("broadcast_coupling must lie in [0, 1]");
        }
        if !(self.breakout_lift > 1.2) {
            return fail("breakout_lift must exceed 1.2");
        }
        let (lo, hi) = self.ar_coefficient;
        if !(lo <= hi && lo > -1.0 && hi < 1.0) {
            return fail("ar_coefficient range must lie inside (-1, 1)");
        }
        if !(self.noise_scale >= 0.0 && self.base_log_sd >= 0.0 && self.broadcast_scale >= 0.0) {
            return fail("scales must be non-negative");
        }
        let (r_lo, r_hi) = self.ramp_weeks;
        if r_lo == 0 || r_lo > r_hi || r_hi > self.span_weeks {
            return fail("ramp_weeks must be an ordered range inside 1..=span_weeks");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub panels: PanelMap,
    pub ground_truth: BTreeMap<String, bool>,
}

pub fn entity_name(index: usize) -> String {
    format!("e{index:05}")
}

/// Generates the scenario. Entity `i` draws from its own ChaCha stream, so the
/// output does not depend on thread scheduling.
pub fn generate(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let n = config.n_entities;
    let n_breakouts = (config.breakout_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut master);
    let mut is_breakout = vec![false; n];
    for &i in &order[..n_breakouts] {
        is_breakout[i] = true;
    }

    let panels: Vec<WeeklyPanel> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            generate_entity(config, &entity_name(i), is_breakout[i], &mut rng)
        })
        .collect();

    Ok(Scenario {
        panels: panels.into_iter().map(|p| (p.entity_id.clone(), p)).collect(),
        ground_truth: (0..n).map(|i| (entity_name(i), is_breakout[i])).collect(),
    })
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(mean.round())
}

fn generate_entity(config: &ScenarioConfig, id: &str, breakout: bool, rng: &mut ChaCha8Rng) -> WeeklyPanel {
    let weeks = config.span_weeks;
    let latent_len = weeks + config.broadcast_lead_weeks;
    let base = (config.base_log_mean + config.base_log_sd * rng.sample::<f64, _>(rand_distr::StandardNormal)).exp();
    let (lo, hi) = config.ar_coefficient;
    let phi = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let innovation = Normal::new(0.0, config.noise_scale).expect("finite scale");
    let ramp = if breakout {
        rng.random_range(config.ramp_weeks.0..=config.ramp_weeks.1)
    } else {
        0
    };

    let stationary_sd = config.noise_scale / (1.0 - phi * phi).sqrt();
    let mut x = stationary_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
    let ramp_start = weeks - ramp;
    let intensity: Vec<f64> = (0..latent_len)
        .map(|t| {
            if t > 0 {
                x = phi * x + innovation.sample(rng);
            }
            let lift = if breakout && t >= ramp_start {
                let j = (t - ramp_start + 1).min(ramp) as f64;
                1.0 + (config.breakout_lift - 1.0) * j / ramp as f64
            } else {
                1.0
            };
            base * x.exp() * lift
        })
        .collect();

    let social: Vec<f64> = intensity[..weeks].iter().map(|&l| poisson(rng, l)).collect();
    let broadcast: Vec<f64> = (0..weeks)
        .map(|t| {
            let led = intensity[t + config.broadcast_lead_weeks];
            let mean = config.broadcast_scale * (config.broadcast_coupling * led + (1.0 - config.broadcast_coupling) * base);
            poisson(rng, mean)
        })
        .collect();
    WeeklyPanel::new(id, config.origin, social, broadcast)
}

/// Breakout labels of each panel's final window, computed straight from the
/// weekly values: `gamma` averages the 3 months ending 3 months before the
/// span ends, `beta` averages the last month. `gamma == 0` yields `false`.
pub fn oracle_breakout_labels(panels: &PanelMap, month_weeks: usize, threshold: f64) -> BTreeMap<String, bool> {
    let mut out = BTreeMap::new();
    for (id, panel) in panels {
        let w = panel.social.len();
        if w < 6 * month_weeks {
            continue;
        }
        let mut past = 0.0;
        for t in (w - 6 * month_weeks)..(w - 3 * month_weeks) {
            past += panel.social[t];
        }
        let mut future = 0.0;
        for t in (w - month_weeks)..w {
            future += panel.social[t];
        }
        let gamma = past / (3 * month_weeks) as f64;
        let beta = future / month_weeks as f64;
        out.insert(id.clone(), gamma > 0.0 && beta / gamma >= threshold);
    }
    out
}

/// Spreads each weekly count evenly over its seven days (remainder to the
/// earliest days) and returns the non-zero daily records.
pub fn to_daily_records(panels: &PanelMap) -> Vec<MentionRecord> {
    let mut out = Vec::new();
    for panel in panels.values() {
        for channel in [Channel::Social, Channel::Broadcast] {
            for (w, &total) in panel.channel(channel).iter().enumerate() {
                let total = total.round().max(0.0) as u64;
                let (each, rem) = (total / 7, total % 7);
                for day in 0..7u64 {
                    let count = each + u64::from(day < rem);
                    if count > 0 {
                        out.push(MentionRecord {
                            entity_id: panel.entity_id.clone(),
                            date: panel.start_date + chrono::Days::new(7 * w as u64 + day),
                            channel,
                            count,
                        });
                    }
                }
            }
        }
    }
    out
}

pub fn write_records_csv<W: Write>(writer: W, records: &[MentionRecord]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["entity_id", "date", "channel", "count"])?;
    for r in records {
        wtr.write_record([
            r.entity_id.as_str(),
            &r.date.format(crate::ingest::DATE_FORMAT).to_string(),
            r.channel.as_str(),
            &r.count.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `entity_id,is_breakout`
pub fn write_ground_truth<W: Write>(writer: W, truth: &BTreeMap<String, bool>) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["entity_id", "is_breakout"])?;
    for (id, flag) in truth {
        wtr.write_record([id.as_str(), if *flag { "true" } else { "false" }])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{assess_breakout, precision_at_k};
    use crate::ingest::aggregate_weekly;
    use crate::preprocess::test_windows;

    fn labels_via_eval(panels: &PanelMap) -> Vec<bool> {
        let (windows, _) = test_windows(panels, 4);
        windows.iter().map(|w| assess_breakout(w, w.target, 1.2).label_actual).collect()
    }

    #[test]
    fn gradual_preset_is_valid() {
        let cfg = ScenarioConfig::gradual_breakouts();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.breakout_lift, ScenarioConfig::default().breakout_lift);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = ScenarioConfig { n_entities: 50, ..Default::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = generate(&ScenarioConfig { seed: 1, ..cfg.clone() }).unwrap();
        assert_ne!(generate(&cfg).unwrap().panels, other.panels);
    }

    #[test]
    fn shapes_and_counts() {
        let cfg = ScenarioConfig { n_entities: 40, ..Default::default() };
        let s = generate(&cfg).unwrap();
        assert_eq!(s.panels.len(), 40);
        assert_eq!(s.ground_truth.values().filter(|b| **b).count(), 8);
        for p in s.panels.values() {
            assert_eq!(p.weeks(), 45);
            assert!(p.social.iter().chain(&p.broadcast).all(|v| *v >= 0.0 && v.fract() == 0.0));
        }
    }

    #[test]
    fn no_injection_gives_few_breakouts() {
        let cfg = ScenarioConfig {
            breakout_fraction: 0.0,
            seed: 3,
            ..Default::default()
        };
        let s = generate(&cfg).unwrap();
        let labels = labels_via_eval(&s.panels);
        let rate = labels.iter().filter(|b| **b).count() as f64 / labels.len() as f64;
        assert!(rate < 0.10, "noise-level breakout rate {rate}");
    }

    #[test]
    fn injected_breakouts_are_detectable() {
        let cfg = ScenarioConfig {
            breakout_lift: 2.0,
            breakout_fraction: 0.2,
            seed: 4,
            ..Default::default()
        };
        let s = generate(&cfg).unwrap();
        let (windows, _) = test_windows(&s.panels, 4);
        let injected: Vec<_> = windows.iter().filter(|w| s.ground_truth[&w.entity_id]).collect();
        let hit = injected.iter().filter(|w| assess_breakout(w, w.target, 1.2).label_actual).count();
        assert!(hit as f64 >= 0.9 * injected.len() as f64, "{hit}/{}", injected.len());
    }

    #[test]
    fn perfect_predictor_has_full_precision() {
        let s = generate(&ScenarioConfig { seed: 5, ..Default::default() }).unwrap();
        let (windows, _) = test_windows(&s.panels, 4);
        let assessments: Vec<_> = windows.iter().map(|w| assess_breakout(w, w.target, 1.2)).collect();
        let positives = assessments.iter().filter(|a| a.label_actual).count();
        assert!(positives > 0);
        assert_eq!(precision_at_k(&assessments, positives).unwrap().value, 1.0);
    }

    #[test]
    fn oracle_agrees_with_eval() {
        let s = generate(&ScenarioConfig { n_entities: 200, seed: 6, ..Default::default() }).unwrap();
        let oracle = oracle_breakout_labels(&s.panels, 4, 1.2);
        let eval = labels_via_eval(&s.panels);
        assert_eq!(oracle.values().copied().collect::<Vec<_>>(), eval);
    }

    #[test]
    fn oracle_degenerate_panels() {
        let mut panels = PanelMap::new();
        let origin = NaiveDate::from_ymd_opt(2019, 3, 10).unwrap();
        panels.insert("flat".into(), WeeklyPanel::new("flat", origin, vec![5.0; 45], vec![0.0; 45]));
        panels.insert("zero".into(), WeeklyPanel::new("zero", origin, vec![0.0; 45], vec![0.0; 45]));
        let labels = oracle_breakout_labels(&panels, 4, 1.2);
        assert!(!labels["flat"] && !labels["zero"]);
    }

    #[test]
    fn broadcast_is_informative_when_coupled() {
        let cfg = ScenarioConfig {
            broadcast_coupling: 1.0,
            broadcast_lead_weeks: 2,
            seed: 7,
            ..Default::default()
        };
        let s = generate(&cfg).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for p in s.panels.values() {
            for t in 0..p.weeks() - 1 {
                xs.push(p.broadcast[t]);
                ys.push(p.social[t + 1]);
            }
        }
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        let mse_linear: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum::<f64>() / n;
        let mse_mean: f64 = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
        assert!(mse_linear < mse_mean);
    }

    #[test]
    fn daily_records_aggregate_back() {
        let s = generate(&ScenarioConfig { n_entities: 10, seed: 8, ..Default::default() }).unwrap();
        let records = to_daily_records(&s.panels);
        let back = aggregate_weekly(&records, s.panels.values().next().unwrap().start_date, 45).unwrap();
        assert_eq!(back, s.panels);
    }

    #[test]
    fn rejects_invalid_configs() {
        for bad in [
            ScenarioConfig { breakout_fraction: 1.5, ..Default::default() },
            ScenarioConfig { breakout_lift: 1.1, ..Default::default() },
            ScenarioConfig { broadcast_coupling: -0.1, ..Default::default() },
            ScenarioConfig { ar_coefficient: (0.5, 1.0), ..Default::default() },
            ScenarioConfig { ramp_weeks: (0, 3), ..Default::default() },
            ScenarioConfig { ramp_weeks: (6, 5), ..Default::default() },
        ] {
            assert!(generate(&bad).is_err());
        }
    }
}
