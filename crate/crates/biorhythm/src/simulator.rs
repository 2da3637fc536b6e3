//! Seeded synthetic cohorts with weekly structure and injectable event
//! effects.
//!
//! Draws are split into independent RNG streams per user and per
//! (user, day): each stream is seeded from the master seed by mixing, so
//! adding an event effect changes only the parameters of the affected
//! cells' distributions and never perturbs any other draw. Effects on
//! unaffected users and out-of-window days therefore reproduce the
//! no-effect run bit for bit.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::{ActivityRecord, Cohort, DateInterval, SleepOnset, MINUTES_PER_DAY};
use crate::error::{Error, Result};

/// Parameters for one synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_users: usize,
    pub days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Mean bedtime in minutes since midnight (1410 = 23:30).
    pub onset_mean_min: f64,
    pub onset_sd_min: f64,
    /// Mean nightly sleep in minutes (432 = 7.2 h).
    pub sleep_mean_min: f64,
    pub sleep_sd_min: f64,
    /// Weekend sleep-in: how much longer weekend nights run than weekday
    /// nights, applied as a mean-zero weekly modulation.
    pub sleep_weekend_delta_min: f64,
    pub steps_weekday: f64,
    pub steps_weekend: f64,
    pub steps_sd: f64,
    pub hr_mean_bpm: f64,
    pub hr_sd_bpm: f64,
    /// Probability that any single measurement is dropped.
    pub missing_rate: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_users: 100,
            days: 120,
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2016, 4, 1).unwrap(),
            onset_mean_min: 1410.0,
            onset_sd_min: 30.0,
            sleep_mean_min: 432.0,
            sleep_sd_min: 40.0,
            sleep_weekend_delta_min: 0.0,
            steps_weekday: 7500.0,
            steps_weekend: 5500.0,
            steps_sd: 600.0,
            hr_mean_bpm: 71.0,
            hr_sd_bpm: 5.0,
            missing_rate: 0.0,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < 1 || self.days < 1 {
            return Err(Error::config("n_users and days must be ≥ 1"));
        }
        for (name, sd) in [
            ("onset_sd_min", self.onset_sd_min),
            ("sleep_sd_min", self.sleep_sd_min),
            ("steps_sd", self.steps_sd),
            ("hr_sd_bpm", self.hr_sd_bpm),
        ] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::config(format!("{name} must be ≥ 0, got {sd}")));
            }
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::config(format!(
                "missing_rate {} outside [0, 1)",
                self.missing_rate
            )));
        }
        Ok(())
    }

    pub fn interval(&self) -> DateInterval {
        DateInterval {
            start: self.start_date,
            end: self.start_date + Duration::days(self.days as i64 - 1),
        }
    }
}

/// One injectable event effect over a window of days.
///
/// A period override replaces the activities' baseline temporal structure
/// with a sinusoid of the given period: steps keep their weekday/weekend
/// amplitude, sleep and heart rate are modulated at three times their
/// daily standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEffect {
    pub event_date: NaiveDate,
    pub duration_days: u32,
    /// Multiplies the nightly onset standard deviation (≥ 1 desynchronizes).
    pub onset_jitter_multiplier: f64,
    pub sleep_delta_min: f64,
    pub hr_delta_bpm: f64,
    pub period_override_days: Option<f64>,
    /// Fraction of users the effect touches, chosen by a seeded coin.
    pub affected_fraction: f64,
}

impl EventEffect {
    pub fn new(event_date: NaiveDate, duration_days: u32) -> Self {
        EventEffect {
            event_date,
            duration_days,
            onset_jitter_multiplier: 1.0,
            sleep_delta_min: 0.0,
            hr_delta_bpm: 0.0,
            period_override_days: None,
            affected_fraction: 1.0,
        }
    }

    pub fn validate(&self, spec: &CohortSpec) -> Result<()> {
        if self.duration_days < 1 {
            return Err(Error::config("effect duration_days must be ≥ 1"));
        }
        if !(self.affected_fraction > 0.0 && self.affected_fraction <= 1.0) {
            return Err(Error::config(format!(
                "affected_fraction {} outside (0, 1]",
                self.affected_fraction
            )));
        }
        if self.onset_jitter_multiplier < 1.0 {
            return Err(Error::config(format!(
                "onset_jitter_multiplier {} below 1",
                self.onset_jitter_multiplier
            )));
        }
        if let Some(p) = self.period_override_days {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::config(format!("period_override_days {p} invalid")));
            }
        }
        let interval = spec.interval();
        let last = self.event_date + Duration::days(self.duration_days as i64 - 1);
        if !interval.contains(self.event_date) || !interval.contains(last) {
            return Err(Error::config(format!(
                "effect window [{}, {last}] outside the cohort interval [{}, {}]",
                self.event_date, interval.start, interval.end
            )));
        }
        Ok(())
    }

    fn active_on(&self, date: NaiveDate) -> bool {
        date >= self.event_date
            && date < self.event_date + Duration::days(self.duration_days as i64)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Independent stream seed for a (tag, a, b) coordinate.
fn stream_seed(master: u64, tag: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master ^ splitmix64(tag)) ^ a) ^ b)
}

struct UserBaseline {
    onset_mean: f64,
    sleep_mean: f64,
    hr_mean: f64,
    steps_offset: f64,
}

fn user_baseline(spec: &CohortSpec, user_idx: u64) -> UserBaseline {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 1, user_idx, 0));
    let mut draw = |mean: f64, sd: f64| Normal::new(mean, sd).unwrap().sample(&mut rng);
    UserBaseline {
        onset_mean: draw(spec.onset_mean_min, spec.onset_sd_min),
        sleep_mean: draw(spec.sleep_mean_min, spec.sleep_sd_min),
        hr_mean: draw(spec.hr_mean_bpm, spec.hr_sd_bpm),
        steps_offset: draw(0.0, spec.steps_sd),
    }
}

fn user_affected(spec: &CohortSpec, effect_idx: u64, user_idx: u64, fraction: f64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 3, effect_idx, user_idx));
    rng.gen::<f64>() < fraction
}

/// Generate a deterministic synthetic cohort.
pub fn generate_cohort(spec: &CohortSpec, effects: &[EventEffect]) -> Result<Cohort> {
    spec.validate()?;
    for effect in effects {
        effect.validate(spec)?;
    }
    let interval = spec.interval();
    let width = spec.n_users.to_string().len().max(3);
    let steps_week_mean = (5.0 * spec.steps_weekday + 2.0 * spec.steps_weekend) / 7.0;
    let steps_amplitude = 0.5 * (spec.steps_weekday - spec.steps_weekend);

    let mut records = Vec::with_capacity(spec.n_users * spec.days);
    for u in 0..spec.n_users {
        let user_id = format!("u{:0width$}", u + 1);
        let base = user_baseline(spec, u as u64);
        let affected: Vec<bool> = effects
            .iter()
            .enumerate()
            .map(|(e, eff)| user_affected(spec, e as u64, u as u64, eff.affected_fraction))
            .collect();

        for d in 0..spec.days {
            let date = interval.date_at(d);
            let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);

            // Fold in every active effect; a later override period wins.
            let mut jitter = 1.0;
            let mut sleep_delta = 0.0;
            let mut hr_delta = 0.0;
            let mut override_period: Option<(f64, NaiveDate)> = None;
            for (e, eff) in effects.iter().enumerate() {
                if affected[e] && eff.active_on(date) {
                    jitter *= eff.onset_jitter_multiplier;
                    sleep_delta += eff.sleep_delta_min;
                    hr_delta += eff.hr_delta_bpm;
                    if let Some(p) = eff.period_override_days {
                        override_period = Some((p, eff.event_date));
                    }
                }
            }
            let phase = override_period.map(|(p, start)| {
                let offset = (date - start).num_days() as f64;
                (2.0 * std::f64::consts::PI * offset / p).cos()
            });

            let steps_mean = match phase {
                Some(c) => steps_week_mean + base.steps_offset + steps_amplitude * c,
                None => {
                    base.steps_offset
                        + if weekend {
                            spec.steps_weekend
                        } else {
                            spec.steps_weekday
                        }
                }
            };
            // The override replaces the weekly structure, as for steps.
            let sleep_weekly = match phase {
                Some(c) => 3.0 * spec.sleep_sd_min * c,
                None if weekend => spec.sleep_weekend_delta_min * (5.0 / 7.0),
                None => -spec.sleep_weekend_delta_min * (2.0 / 7.0),
            };
            let sleep_mean = base.sleep_mean + sleep_delta + sleep_weekly;
            let hr_mean =
                base.hr_mean + hr_delta + phase.map_or(0.0, |c| 3.0 * spec.hr_sd_bpm * c);

            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 2, u as u64, d as u64));
            let miss_steps = rng.gen::<f64>() < spec.missing_rate;
            let miss_sleep = rng.gen::<f64>() < spec.missing_rate;
            let miss_hr = rng.gen::<f64>() < spec.missing_rate;
            // Values are affine in a standard normal draw, so parameter
            // changes never shift the stream position.
            let mut draw = |mean: f64, sd: f64| mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            let steps = draw(steps_mean, spec.steps_sd).max(0.0).round() as u32;
            let sleep = draw(sleep_mean, spec.sleep_sd_min).clamp(0.0, MINUTES_PER_DAY);
            let onset_raw = draw(base.onset_mean, spec.onset_sd_min * jitter)
                .clamp(0.0, 2.0 * MINUTES_PER_DAY - 1.0);
            let hr = draw(hr_mean, spec.hr_sd_bpm).clamp(20.5, 249.5);

            let sleep_onset = if miss_sleep {
                None
            } else if onset_raw >= MINUTES_PER_DAY {
                Some(SleepOnset {
                    minutes: onset_raw - MINUTES_PER_DAY,
                    next_day: true,
                })
            } else {
                Some(SleepOnset {
                    minutes: onset_raw,
                    next_day: false,
                })
            };
            records.push(ActivityRecord {
                user_id: user_id.clone(),
                date,
                steps: (!miss_steps).then_some(steps),
                sleep_minutes: (!miss_sleep).then_some(sleep),
                sleep_onset,
                heart_rate: (!miss_hr).then_some(hr),
            });
        }
    }
    Cohort::from_records(records, Some(interval))
}

/// Write the cohort as the canonical CSV; identical cohorts produce
/// byte-identical files.
pub fn export_cohort(cohort: &Cohort, path: &std::path::Path) -> Result<()> {
    cohort.write_csv(path)
}
