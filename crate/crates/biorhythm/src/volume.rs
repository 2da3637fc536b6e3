//! Population-level daily activity averages and event-window summaries.

use chrono::NaiveDate;

use crate::data_model::{Activity, Cohort, EventSpec};
use crate::error::{Error, Result};

/// Daily population mean of one activity with a 95% confidence band.
///
/// The mean on each day is taken over the users with a measurement that
/// day; it is defined from one contributing user, the confidence
/// half-width from two.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSeries {
    pub start_date: NaiveDate,
    pub mean: Vec<Option<f64>>,
    pub ci_halfwidth: Vec<Option<f64>>,
    pub n: Vec<usize>,
}

impl PopulationSeries {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Plot-ready CSV export, header `date,mean,ci_halfwidth,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,mean,ci_halfwidth,n\n");
        for i in 0..self.len() {
            let date = self.start_date + chrono::Duration::days(i as i64);
            let mean = self.mean[i].map(|v| format!("{v}")).unwrap_or_default();
            let ci = self.ci_halfwidth[i]
                .map(|v| format!("{v}"))
                .unwrap_or_default();
            out.push_str(&format!("{date},{mean},{ci},{}\n", self.n[i]));
        }
        out
    }
}

/// Per-day population average `Ā(t)` with `CI = 1.96 × standard error`.
pub fn population_volume(cohort: &Cohort, activity: Activity) -> PopulationSeries {
    let interval = cohort.interval();
    let n_days = interval.n_days();
    let mut mean = vec![None; n_days];
    let mut ci = vec![None; n_days];
    let mut n = vec![0usize; n_days];

    let mut sums = vec![0.0f64; n_days];
    let mut sq_sums = vec![0.0f64; n_days];
    for user in cohort.users() {
        for rec in cohort.user_records(user).unwrap().values() {
            if let Some(v) = rec.value(activity) {
                let i = interval.index_of(rec.date).unwrap();
                sums[i] += v;
                sq_sums[i] += v * v;
                n[i] += 1;
            }
        }
    }
    for i in 0..n_days {
        if n[i] >= 1 {
            let m = sums[i] / n[i] as f64;
            mean[i] = Some(m);
            if n[i] >= 2 {
                let var = ((sq_sums[i] - n[i] as f64 * m * m) / (n[i] as f64 - 1.0)).max(0.0);
                ci[i] = Some(1.96 * (var / n[i] as f64).sqrt());
            }
        }
    }
    PopulationSeries {
        start_date: interval.start,
        mean,
        ci_halfwidth: ci,
        n,
    }
}

/// Mean of `Ā(t)` over the symmetric event window `[t−α, t+α]`, taken
/// over the days where the population mean is defined.
pub fn event_volume_summary(cohort: &Cohort, activity: Activity, event: &EventSpec) -> Result<f64> {
    let series = population_volume(cohort, activity);
    let dates = event.volume_dates(&cohort.interval())?;
    window_volume(&series, cohort, &dates, &event.name)
}

/// Shared window averaging for events and random days.
pub(crate) fn window_volume(
    series: &PopulationSeries,
    cohort: &Cohort,
    dates: &[NaiveDate],
    label: &str,
) -> Result<f64> {
    let interval = cohort.interval();
    let mut sum = 0.0;
    let mut count = 0usize;
    for &d in dates {
        let i = interval.index_of(d)?;
        if let Some(m) = series.mean[i] {
            sum += m;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::domain(format!(
            "window `{label}`: population mean undefined on every day"
        )));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{ActivityRecord, Cohort, DateInterval};
    use chrono::NaiveDate;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn steps_rec(user: &str, d: NaiveDate, steps: u32) -> ActivityRecord {
        ActivityRecord {
            steps: Some(steps),
            ..ActivityRecord::empty(user, d)
        }
    }

    fn three_day_cohort() -> Cohort {
        let iv = DateInterval::new(date("2016-06-01"), date("2016-06-03")).unwrap();
        let records = vec![
            steps_rec("u1", date("2016-06-01"), 6000),
            steps_rec("u2", date("2016-06-01"), 8000),
            steps_rec("u1", date("2016-06-02"), 7000),
            ActivityRecord::empty("u2", date("2016-06-02")),
        ];
        Cohort::from_records(records, Some(iv)).unwrap()
    }

    #[test]
    fn per_day_means_and_counts() {
        let series = population_volume(&three_day_cohort(), Activity::Steps);
        assert_eq!(series.mean[0], Some(7000.0));
        assert_eq!(series.n[0], 2);
        assert!(series.ci_halfwidth[0].unwrap() > 0.0);
        // one contributing user: mean defined, CI not
        assert_eq!(series.mean[1], Some(7000.0));
        assert_eq!(series.ci_halfwidth[1], None);
        assert_eq!(series.n[1], 1);
        // no users at all
        assert_eq!(series.mean[2], None);
        assert_eq!(series.n[2], 0);
    }

    #[test]
    fn constant_cohort_has_flat_series_with_zero_ci() {
        let iv = DateInterval::new(date("2016-06-01"), date("2016-06-05")).unwrap();
        let mut records = Vec::new();
        for u in ["a", "b", "c"] {
            for i in 0..5 {
                records.push(steps_rec(u, iv.date_at(i), 5000));
            }
        }
        let cohort = Cohort::from_records(records, Some(iv)).unwrap();
        let series = population_volume(&cohort, Activity::Steps);
        for i in 0..5 {
            assert_eq!(series.mean[i], Some(5000.0));
            assert_eq!(series.ci_halfwidth[i], Some(0.0));
        }
        let event = EventSpec::new("mid", date("2016-06-03"), 2).unwrap();
        let summary = event_volume_summary(&cohort, Activity::Steps, &event).unwrap();
        assert_eq!(summary, 5000.0);
    }

    #[test]
    fn mean_stays_within_daily_min_max() {
        let series = population_volume(&three_day_cohort(), Activity::Steps);
        assert!(series.mean[0].unwrap() >= 6000.0 && series.mean[0].unwrap() <= 8000.0);
    }

    #[test]
    fn removing_a_user_leaves_their_missing_days_unchanged() {
        let cohort = three_day_cohort();
        let with = population_volume(&cohort, Activity::Steps);
        let keep: std::collections::BTreeSet<String> = ["u1".to_string()].into_iter().collect();
        let without = population_volume(&cohort.restrict_users(&keep), Activity::Steps);
        // u2 has no measurement on day 1, so day 1 must be identical.
        assert_eq!(with.mean[1], without.mean[1]);
    }

    #[test]
    fn window_outside_interval_is_a_domain_error() {
        let cohort = three_day_cohort();
        let event = EventSpec::new("edge", date("2016-06-01"), 7).unwrap();
        assert!(event_volume_summary(&cohort, Activity::Steps, &event).is_err());
    }

    #[test]
    fn random_windows_average_to_the_global_mean() {
        use crate::null_model::sample_random_days;
        use crate::simulator::{generate_cohort, CohortSpec};
        let spec = CohortSpec {
            n_users: 40,
            days: 200,
            seed: 13,
            ..CohortSpec::default()
        };
        let cohort = generate_cohort(&spec, &[]).unwrap();
        let series = population_volume(&cohort, Activity::HeartRate);
        let global =
            series.mean.iter().flatten().sum::<f64>() / series.mean.iter().flatten().count() as f64;
        let days =
            sample_random_days(&cohort.interval(), 7, 100, 3, &Default::default()).unwrap();
        let samples: Vec<f64> = days
            .iter()
            .map(|&d| {
                let event = EventSpec::new("w", d, 7).unwrap();
                event_volume_summary(&cohort, Activity::HeartRate, &event).unwrap()
            })
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let sd = (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let se = sd / n.sqrt();
        assert!(
            (mean - global).abs() < 2.0 * se.max(0.02),
            "window mean {mean} vs global {global} (se {se})"
        );
    }
}
