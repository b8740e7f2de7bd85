//! Invariants checked through the public API on random inputs.

use breakout_core::classical::{fit_var, forecast, frobenius_distance, Mat2, Vec2};
use breakout_core::ingest::{aggregate_weekly, filter_outliers, Channel, MentionRecord};
use breakout_core::pipeline::forecast_origin;
use breakout_core::preprocess::build_dataset;
use breakout_core::{ClassicalModel, PanelMap, SeriesTransform, WeeklyPanel};
use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 3, 10).unwrap()
}

fn records() -> impl Strategy<Value = Vec<MentionRecord>> {
    prop::collection::vec((0usize..6, 0u64..70, any::<bool>(), 0u64..500), 0..120).prop_map(|rows| {
        rows.into_iter()
            .map(|(entity, day, social, count)| MentionRecord {
                entity_id: format!("ent{entity}"),
                date: origin() + Days::new(day),
                channel: if social { Channel::Social } else { Channel::Broadcast },
                count,
            })
            .collect()
    })
}

fn panels() -> impl Strategy<Value = PanelMap> {
    prop::collection::vec(prop::collection::vec(0.0f64..300.0, 24..60), 1..6).prop_map(|series| {
        series
            .into_iter()
            .enumerate()
            .map(|(i, social)| {
                let id = format!("p{i}");
                let broadcast = social.iter().map(|v| (v / 10.0).floor()).collect();
                (id.clone(), WeeklyPanel::new(id, origin(), social, broadcast))
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn weekly_sums_match_daily_sums(recs in records(), seed in any::<u64>()) {
        let panels = aggregate_weekly(&recs, origin(), 10).unwrap();
        for (id, panel) in &panels {
            for channel in [Channel::Social, Channel::Broadcast] {
                let daily: u64 = recs.iter().filter(|r| &r.entity_id == id && r.channel == channel).map(|r| r.count).sum();
                prop_assert_eq!(panel.total(channel), daily as f64);
            }
        }
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(aggregate_weekly(&shuffled, origin(), 10).unwrap(), panels);
    }

    #[test]
    fn outlier_filter_is_idempotent(recs in records(), low in 0u64..500, width in 1u64..3000) {
        let panels = aggregate_weekly(&recs, origin(), 10).unwrap();
        let (once, _) = filter_outliers(&panels, low, low + width);
        let (twice, dropped) = filter_outliers(&once, low, low + width);
        prop_assert_eq!(once, twice);
        prop_assert!(dropped.is_empty());
    }

    #[test]
    fn training_targets_never_pass_the_boundary(panels in panels(), month in 1usize..5, stride in 1usize..4) {
        let weeks = panels.values().map(WeeklyPanel::weeks).min().unwrap();
        prop_assume!(weeks >= 6 * month);
        let boundary = forecast_origin(weeks, month).unwrap_or(weeks);
        let (ds, _) = build_dataset(&panels, month, stride, boundary).unwrap();
        for s in &ds.samples {
            prop_assert!(s.target_weeks(month).1 <= boundary);
            prop_assert_eq!(s.len(), 3 * month);
        }
    }

    #[test]
    fn intervals_bracket_the_point_and_widen(a in -0.6f64..0.6, b in -0.3f64..0.3, c in -0.6f64..0.6, seed in 0u64..1000) {
        let coeffs: Mat2 = [[a, b], [0.0, c]];
        let history = simulate(&[coeffs], 120, seed);
        let model = ClassicalModel::Var(fit_var(&history, 1).unwrap());
        let fc = forecast(&model, &history, SeriesTransform::Identity, 6, 0.95).unwrap();
        for h in 0..6 {
            for ch in 0..2 {
                prop_assert!(fc.lower[h][ch] <= fc.point[h][ch] && fc.point[h][ch] <= fc.upper[h][ch]);
                if h > 0 {
                    let width = |i: usize| fc.upper[i][ch] - fc.lower[i][ch];
                    prop_assert!(width(h) >= width(h - 1) - 1e-12);
                }
            }
        }
    }
}

fn simulate(coeffs: &[Mat2], len: usize, seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<Vec2> = Vec::with_capacity(len + 100);
    for t in 0..len + 100 {
        let mut next: Vec2 = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
        for (j, a) in coeffs.iter().enumerate() {
            if t > j {
                let prev = y[t - j - 1];
                next[0] += a[0][0] * prev[0] + a[0][1] * prev[1];
                next[1] += a[1][0] * prev[0] + a[1][1] * prev[1];
            }
        }
        y.push(next);
    }
    y.split_off(100)
}

#[test]
fn var_error_shrinks_with_more_data() {
    let truth: Mat2 = [[0.5, 0.1], [-0.2, 0.3]];
    let median_error = |len: usize| {
        let mut errs: Vec<f64> = (0..50)
            .map(|seed| frobenius_distance(&fit_var(&simulate(&[truth], len, seed), 1).unwrap().coefficients[0], &truth))
            .collect();
        errs.sort_by(f64::total_cmp);
        0.5 * (errs[24] + errs[25])
    };
    let (short, long) = (median_error(500), median_error(2000));
    assert!(long < short, "median error {long} at T=2000 vs {short} at T=500");
}
