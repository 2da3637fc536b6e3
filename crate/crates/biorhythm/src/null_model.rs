//! Random-day baselines for the event metrics.
//!
//! Each null model evaluates a metric at `n` uniformly sampled days
//! (with replacement, seeded) whose analysis windows fit inside the
//! cohort interval, then summarizes the samples with a mean and a 95%
//! confidence half-width. Days where the metric fails are skipped and
//! counted. All outputs are pure functions of (cohort, parameters, seed).

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data_model::{to_daily_series, to_spike_train, Activity, Cohort, EventSpec, SpikeTrain};
use crate::error::{Error, Result};
use crate::rhythm::{rhythm_shift_at, shift_distribution, RhythmConfig, ShiftDistribution};
use crate::spike_sync::{
    complete_event_trains, full_interval_matrix, growth_from_fractions, oos_analysis_for_trains,
    oos_outlier_fraction, SyncConfig,
};

/// Per-random-day samples of one metric with their summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullSummary {
    pub samples: Vec<f64>,
    pub mean: f64,
    /// 95% half-width; undefined (and flagged as such) below 2 samples.
    pub ci_halfwidth: Option<f64>,
    pub seed: u64,
    pub n_days: usize,
    pub skipped_days: usize,
}

impl NullSummary {
    fn from_samples(samples: Vec<f64>, seed: u64, skipped_days: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::insufficient(
                "every sampled day failed; no null samples",
            ));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let ci_halfwidth = if samples.len() >= 2 {
            let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
            Some(1.96 * (var / n).sqrt())
        } else {
            None
        };
        Ok(NullSummary {
            n_days: samples.len(),
            samples,
            mean,
            ci_halfwidth,
            seed,
            skipped_days,
        })
    }

    /// Standard error of the mean (0 for a single sample).
    pub fn standard_error(&self) -> f64 {
        self.ci_halfwidth.map_or(0.0, |ci| ci / 1.96)
    }

    pub fn percentile(&self, q: f64) -> f64 {
        let mut sorted = self.samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        sorted[rank - 1]
    }

    pub fn to_report(&self, metric: &str) -> NullReport {
        NullReport {
            metric: metric.to_string(),
            n_days: self.n_days,
            seed: self.seed,
            mean: self.mean,
            ci_halfwidth: self.ci_halfwidth,
            skipped_days: self.skipped_days,
        }
    }
}

/// JSON-ready null-model record.
#[derive(Debug, Clone, Serialize)]
pub struct NullReport {
    pub metric: String,
    pub n_days: usize,
    pub seed: u64,
    pub mean: f64,
    pub ci_halfwidth: Option<f64>,
    pub skipped_days: usize,
}

/// Sample `n` days (uniformly, with replacement, seeded) whose `±alpha`
/// neighborhood fits inside the interval and avoids every excluded date.
pub fn sample_random_days(
    interval: &crate::data_model::DateInterval,
    alpha_days: u32,
    n: usize,
    seed: u64,
    exclusions: &BTreeSet<NaiveDate>,
) -> Result<Vec<NaiveDate>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be ≥ 1".into()));
    }
    let a = alpha_days as i64;
    let valid: Vec<NaiveDate> = interval
        .dates()
        .filter(|&d| {
            interval.contains(d - Duration::days(a))
                && interval.contains(d + Duration::days(a))
                && (-a..=a).all(|off| !exclusions.contains(&(d + Duration::days(off))))
        })
        .collect();
    if valid.is_empty() {
        return Err(Error::domain(format!(
            "no day admits a ±{alpha_days}-day window inside [{}, {}] outside the exclusions",
            interval.start, interval.end
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| valid[rng.gen_range(0..valid.len())]).collect())
}

fn day_seed(master: u64, day_index: usize) -> u64 {
    let mut x = master ^ (day_index as u64).wrapping_mul(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn random_event(date: NaiveDate, alpha_days: u32) -> EventSpec {
    EventSpec {
        name: format!("random@{date}"),
        date,
        alpha_days,
    }
}

/// OOS evaluated at `n` random days: the random model's score, expected
/// to average out near zero on a stationary cohort.
pub fn null_oos(
    cohort: &Cohort,
    alpha_days: u32,
    n: usize,
    seed: u64,
    cfg: &SyncConfig,
    exclusions: &BTreeSet<NaiveDate>,
) -> Result<NullSummary> {
    let days = sample_random_days(&cohort.interval(), alpha_days, n, seed, exclusions)?;
    let per_day: Vec<Result<f64>> = days
        .par_iter()
        .enumerate()
        .map(|(i, &date)| {
            let event = random_event(date, alpha_days);
            let trains = complete_event_trains(cohort, &event)?;
            if trains.len() < 2 {
                return Err(Error::insufficient(format!(
                    "{}: {} complete user(s)",
                    event.name,
                    trains.len()
                )));
            }
            let day_cfg = SyncConfig {
                seed: day_seed(cfg.seed, i),
                ..cfg.clone()
            };
            Ok(oos_analysis_for_trains(&trains, cohort, &event, &day_cfg)?.oos)
        })
        .collect();
    let skipped = per_day.iter().filter(|r| r.is_err()).count();
    let samples: Vec<f64> = per_day.into_iter().flatten().collect();
    NullSummary::from_samples(samples, seed, skipped)
}

pub(crate) struct NullSyncOutcome {
    pub oos: NullSummary,
    pub growth: NullSummary,
}

/// Null OOS and OOS-growth in one pass, sharing per-day pair matrices and
/// one full-interval threshold distribution over all users with usable
/// trains.
pub(crate) fn null_sync_with_growth(
    cohort: &Cohort,
    alpha_days: u32,
    n: usize,
    seed: u64,
    cfg: &SyncConfig,
    exclusions: &BTreeSet<NaiveDate>,
) -> Result<NullSyncOutcome> {
    let trains: Vec<(String, SpikeTrain)> = cohort
        .users()
        .filter_map(|u| {
            let t = to_spike_train(cohort, u).ok()?;
            (t.len() >= 2).then(|| (u.to_string(), t))
        })
        .collect();
    if trains.len() < 2 {
        return Err(Error::insufficient(
            "fewer than 2 users with usable spike trains",
        ));
    }
    let threshold = full_interval_matrix(&trains, cohort, cfg)?;
    let days = sample_random_days(&cohort.interval(), alpha_days, n, seed, exclusions)?;
    let per_day: Vec<(Result<f64>, Result<f64>)> = days
        .par_iter()
        .enumerate()
        .map(|(i, &date)| {
            let event = random_event(date, alpha_days);
            let day_cfg = SyncConfig {
                seed: day_seed(cfg.seed, i),
                ..cfg.clone()
            };
            let analysis = complete_event_trains(cohort, &event).and_then(|trains| {
                if trains.len() < 2 {
                    return Err(Error::insufficient(format!(
                        "{}: {} complete user(s)",
                        event.name,
                        trains.len()
                    )));
                }
                oos_analysis_for_trains(&trains, cohort, &event, &day_cfg)
            });
            match analysis {
                Ok(a) => {
                    let growth = oos_outlier_fraction(&a.before_pairs, &threshold)
                        .and_then(|before| {
                            let after = oos_outlier_fraction(&a.after_pairs, &threshold)?;
                            growth_from_fractions(before, after)
                        });
                    (Ok(a.oos), growth)
                }
                Err(e) => {
                    let msg = e.to_string();
                    (Err(e), Err(Error::insufficient(msg)))
                }
            }
        })
        .collect();
    let oos_skipped = per_day.iter().filter(|(o, _)| o.is_err()).count();
    let growth_skipped = per_day.iter().filter(|(_, g)| g.is_err()).count();
    let oos_samples: Vec<f64> = per_day.iter().filter_map(|(o, _)| o.as_ref().ok()).copied().collect();
    let growth_samples: Vec<f64> = per_day.iter().filter_map(|(_, g)| g.as_ref().ok()).copied().collect();
    Ok(NullSyncOutcome {
        oos: NullSummary::from_samples(oos_samples, seed, oos_skipped)?,
        growth: NullSummary::from_samples(growth_samples, seed, growth_skipped)?,
    })
}

/// Rhythm shifts pooled over all users and `n` random days, binned into
/// the shared-null shift distribution.
pub fn null_shift_distribution(
    cohort: &Cohort,
    activity: Activity,
    window_days: usize,
    n: usize,
    seed: u64,
    cfg: &RhythmConfig,
    exclusions: &BTreeSet<NaiveDate>,
) -> Result<ShiftDistribution> {
    let series = cohort_series(cohort, activity);
    let days = sample_random_days(&cohort.interval(), window_days as u32, n, seed, exclusions)?;
    let interval = cohort.interval();
    let pool: Vec<f64> = days
        .par_iter()
        .map(|&date| {
            let idx = interval.index_of(date)?;
            Ok(shifts_at(&series, idx, cfg))
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();
    if pool.is_empty() {
        return Err(Error::domain(
            "no computable rhythm shifts across the sampled days",
        ));
    }
    shift_distribution(
        &pool,
        cfg.bin_width_days,
        cfg.smoothing_mass,
        cfg.max_abs_shift_days(),
    )
}

/// Daily series for every cohort user, computed once and shared.
pub(crate) fn cohort_series(
    cohort: &Cohort,
    activity: Activity,
) -> Vec<(String, crate::data_model::DailySeries)> {
    cohort
        .users()
        .map(|u| (u.to_string(), to_daily_series(cohort, u, activity).unwrap()))
        .collect()
}

/// Per-user rhythm shifts around one day index; users whose windows are
/// not computable are skipped.
pub(crate) fn shifts_at(
    series: &[(String, crate::data_model::DailySeries)],
    idx: usize,
    cfg: &RhythmConfig,
) -> Vec<f64> {
    series
        .par_iter()
        .filter_map(|(_, s)| rhythm_shift_at(s, idx, cfg).ok())
        .collect()
}
