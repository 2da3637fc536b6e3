//! Core domain types and cohort ingestion.
//!
//! The canonical input is a daily-activity CSV with the exact header
//!
//! ```text
//! user_id,date,steps,sleep_minutes,sleep_onset_min,onset_next_day,heart_rate_bpm
//! ```
//!
//! one row per user per day, ISO-8601 dates, empty fields for missing
//! measurements. [`parse_activity_csv`] validates rows against
//! physiological bounds and reports (rather than silently drops)
//! violations; duplicates of the same (user, date) are a hard error.
//!
//! From a [`Cohort`] the module derives the two working representations
//! used by the metric modules: per-user sleep-onset [`SpikeTrain`]s and
//! per-activity [`DailySeries`].

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: f64 = 1440.0;

/// One of the daily measurement kinds carried by an [`ActivityRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activity {
    Steps,
    SleepMinutes,
    SleepOnset,
    HeartRate,
}

impl Activity {
    pub const ALL: [Activity; 4] = [
        Activity::Steps,
        Activity::SleepMinutes,
        Activity::SleepOnset,
        Activity::HeartRate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Activity::Steps => "steps",
            Activity::SleepMinutes => "sleep_minutes",
            Activity::SleepOnset => "sleep_onset",
            Activity::HeartRate => "heart_rate",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steps" => Ok(Activity::Steps),
            "sleep" | "sleep_minutes" => Ok(Activity::SleepMinutes),
            "sleep_onset" | "onset" => Ok(Activity::SleepOnset),
            "heart_rate" | "hr" => Ok(Activity::HeartRate),
            other => Err(Error::config(format!("unknown activity `{other}`"))),
        }
    }
}

/// Bedtime for one night: minutes after the labeled day's midnight, with
/// post-midnight onsets stored as `next_day = true` and minutes counted
/// from the following midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepOnset {
    pub minutes: f64,
    pub next_day: bool,
}

/// One user-day of measurements. Missing fields are `None`, never
/// sentinel numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub user_id: String,
    pub date: NaiveDate,
    pub steps: Option<u32>,
    pub sleep_minutes: Option<f64>,
    pub sleep_onset: Option<SleepOnset>,
    pub heart_rate: Option<f64>,
}

impl ActivityRecord {
    pub fn empty(user_id: impl Into<String>, date: NaiveDate) -> Self {
        ActivityRecord {
            user_id: user_id.into(),
            date,
            steps: None,
            sleep_minutes: None,
            sleep_onset: None,
            heart_rate: None,
        }
    }

    /// Physiological sanity bounds. A violating row is rejected at
    /// ingestion, not clamped.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if let Some(s) = self.sleep_minutes {
            if !(0.0..=MINUTES_PER_DAY).contains(&s) || !s.is_finite() {
                return Err(format!("sleep_minutes {s} outside [0, 1440]"));
            }
        }
        if let Some(onset) = self.sleep_onset {
            if !(0.0..MINUTES_PER_DAY).contains(&onset.minutes) || !onset.minutes.is_finite() {
                return Err(format!(
                    "sleep_onset_min {} outside [0, 1440)",
                    onset.minutes
                ));
            }
        }
        if let Some(hr) = self.heart_rate {
            if !(hr > 20.0 && hr < 250.0) {
                return Err(format!("heart_rate_bpm {hr} outside (20, 250)"));
            }
        }
        Ok(())
    }

    pub fn value(&self, activity: Activity) -> Option<f64> {
        match activity {
            Activity::Steps => self.steps.map(f64::from),
            Activity::SleepMinutes => self.sleep_minutes,
            Activity::SleepOnset => self.sleep_onset.map(|o| {
                if o.next_day {
                    o.minutes + MINUTES_PER_DAY
                } else {
                    o.minutes
                }
            }),
            Activity::HeartRate => self.heart_rate,
        }
    }

    pub fn has(&self, activity: Activity) -> bool {
        match activity {
            Activity::Steps => self.steps.is_some(),
            Activity::SleepMinutes => self.sleep_minutes.is_some(),
            Activity::SleepOnset => self.sleep_onset.is_some(),
            Activity::HeartRate => self.heart_rate.is_some(),
        }
    }
}

/// Closed calendar interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateInterval {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateInterval {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::domain(format!(
                "interval end {end} precedes start {start}"
            )));
        }
        Ok(DateInterval { start, end })
    }

    pub fn n_days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Day index of `date` within the interval (0 = start).
    pub fn index_of(&self, date: NaiveDate) -> Result<usize> {
        if !self.contains(date) {
            return Err(Error::domain(format!(
                "date {date} outside interval [{}, {}]",
                self.start, self.end
            )));
        }
        Ok((date - self.start).num_days() as usize)
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start + Duration::days(index as i64)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.n_days()).map(|i| self.date_at(i))
    }
}

/// An immutable set of users and their daily records over a fixed
/// observation interval. All reads are shareable across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    interval: DateInterval,
    records: BTreeMap<String, BTreeMap<NaiveDate, ActivityRecord>>,
}

impl Cohort {
    /// Build a cohort from records, validating the duplicate and
    /// containment invariants. With `interval = None` the interval is
    /// inferred as the span of the record dates.
    pub fn from_records(
        records: Vec<ActivityRecord>,
        interval: Option<DateInterval>,
    ) -> Result<Self> {
        let interval = match interval {
            Some(iv) => iv,
            None => {
                let min = records.iter().map(|r| r.date).min();
                let max = records.iter().map(|r| r.date).max();
                match (min, max) {
                    (Some(a), Some(b)) => DateInterval::new(a, b)?,
                    _ => return Err(Error::domain("cannot infer interval of an empty cohort")),
                }
            }
        };
        let mut map: BTreeMap<String, BTreeMap<NaiveDate, ActivityRecord>> = BTreeMap::new();
        let mut duplicates = Vec::new();
        for rec in records {
            if !interval.contains(rec.date) {
                return Err(Error::domain(format!(
                    "record ({}, {}) outside interval [{}, {}]",
                    rec.user_id, rec.date, interval.start, interval.end
                )));
            }
            let user = map.entry(rec.user_id.clone()).or_default();
            match user.entry(rec.date) {
                Entry::Vacant(v) => {
                    v.insert(rec);
                }
                Entry::Occupied(_) => duplicates.push((rec.user_id.clone(), rec.date)),
            }
        }
        if !duplicates.is_empty() {
            return Err(Error::DuplicateRecords {
                offenders: duplicates,
            });
        }
        Ok(Cohort {
            interval,
            records: map,
        })
    }

    pub fn interval(&self) -> DateInterval {
        self.interval
    }

    pub fn n_users(&self) -> usize {
        self.records.len()
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn contains_user(&self, user: &str) -> bool {
        self.records.contains_key(user)
    }

    pub fn n_records(&self) -> usize {
        self.records.values().map(BTreeMap::len).sum()
    }

    pub fn user_records(&self, user: &str) -> Result<&BTreeMap<NaiveDate, ActivityRecord>> {
        self.records
            .get(user)
            .ok_or_else(|| Error::UnknownUser(user.to_string()))
    }

    pub fn record(&self, user: &str, date: NaiveDate) -> Option<&ActivityRecord> {
        self.records.get(user).and_then(|m| m.get(&date))
    }

    /// Restrict to the given users, keeping the interval.
    pub fn restrict_users(&self, keep: &BTreeSet<String>) -> Cohort {
        Cohort {
            interval: self.interval,
            records: self
                .records
                .iter()
                .filter(|(u, _)| keep.contains(*u))
                .map(|(u, m)| (u.clone(), m.clone()))
                .collect(),
        }
    }

    /// Serialize to the canonical CSV, rows sorted by user then date.
    pub fn to_canonical_csv(&self) -> String {
        let mut out = String::from(CANONICAL_HEADER);
        out.push('\n');
        for recs in self.records.values() {
            for rec in recs.values() {
                let (onset, flag) = match rec.sleep_onset {
                    Some(o) => (fmt_f64(o.minutes), if o.next_day { "1" } else { "0" }),
                    None => (String::new(), "0"),
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    rec.user_id,
                    rec.date,
                    rec.steps.map(|s| s.to_string()).unwrap_or_default(),
                    rec.sleep_minutes.map(fmt_f64).unwrap_or_default(),
                    onset,
                    flag,
                    rec.heart_rate.map(fmt_f64).unwrap_or_default(),
                ));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(self.to_canonical_csv().as_bytes())?;
        Ok(())
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip representation; reparsing reproduces the bits.
    format!("{v}")
}

pub const CANONICAL_HEADER: &str =
    "user_id,date,steps,sleep_minutes,sleep_onset_min,onset_next_day,heart_rate_bpm";

/// Column mapping from canonical fields to header names, for inputs whose
/// columns are renamed or reordered.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub user_id: String,
    pub date: String,
    pub steps: String,
    pub sleep_minutes: String,
    pub sleep_onset_min: String,
    pub onset_next_day: String,
    pub heart_rate_bpm: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            user_id: "user_id".into(),
            date: "date".into(),
            steps: "steps".into(),
            sleep_minutes: "sleep_minutes".into(),
            sleep_onset_min: "sleep_onset_min".into(),
            onset_next_day: "onset_next_day".into(),
            heart_rate_bpm: "heart_rate_bpm".into(),
        }
    }
}

/// A row excluded at ingestion for violating record invariants.
#[derive(Debug, Clone, Serialize)]
pub struct RejectedRow {
    pub line: u64,
    pub user_id: String,
    pub date: String,
    pub reason: String,
}

/// What ingestion saw: totals plus the rows it refused.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rejected: Vec<RejectedRow>,
}

/// Parse a daily-activity CSV into a validated [`Cohort`].
///
/// Rows violating physiological bounds are excluded and reported in the
/// [`IngestReport`]; structural problems (bad dates, non-numeric fields,
/// wrong column count) abort with a parse error carrying the line number,
/// and duplicate (user, date) rows abort listing the offenders.
pub fn parse_activity_csv(path: &Path, schema: &CsvSchema) -> Result<(Cohort, IngestReport)> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let path_str = path.display().to_string();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path_str.clone(),
        line,
        message,
    };

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("header column `{name}` not found")))
    };
    let c_user = col(&schema.user_id)?;
    let c_date = col(&schema.date)?;
    let c_steps = col(&schema.steps)?;
    let c_sleep = col(&schema.sleep_minutes)?;
    let c_onset = col(&schema.sleep_onset_min)?;
    let c_flag = col(&schema.onset_next_day)?;
    let c_hr = col(&schema.heart_rate_bpm)?;

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2; // 1-based, after the header
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        report.rows_read += 1;
        let field = |idx: usize| row.get(idx).unwrap_or("").trim();

        let user_id = field(c_user).to_string();
        if user_id.is_empty() {
            return Err(parse_err(line, "empty user_id".into()));
        }
        let date_str = field(c_date);
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date `{date_str}`: {e}")))?;

        let steps = parse_opt::<i64>(field(c_steps), "steps", line, &parse_err)?;
        let sleep_minutes = parse_opt::<f64>(field(c_sleep), "sleep_minutes", line, &parse_err)?;
        let onset_min = parse_opt::<f64>(field(c_onset), "sleep_onset_min", line, &parse_err)?;
        let flag = match field(c_flag) {
            "" | "0" => false,
            "1" => true,
            other => {
                return Err(parse_err(
                    line,
                    format!("onset_next_day must be 0 or 1, got `{other}`"),
                ))
            }
        };
        let heart_rate = parse_opt::<f64>(field(c_hr), "heart_rate_bpm", line, &parse_err)?;

        // Negative counts are a value violation, not a syntax error.
        let steps = match steps {
            Some(s) if s < 0 => {
                report.rejected.push(RejectedRow {
                    line,
                    user_id,
                    date: date_str.to_string(),
                    reason: format!("steps {s} negative"),
                });
                continue;
            }
            Some(s) => Some(s as u32),
            None => None,
        };

        let record = ActivityRecord {
            user_id,
            date,
            steps,
            sleep_minutes,
            sleep_onset: onset_min.map(|minutes| SleepOnset {
                minutes,
                next_day: flag,
            }),
            heart_rate,
        };
        match record.validate() {
            Ok(()) => {
                report.rows_accepted += 1;
                records.push(record);
            }
            Err(reason) => report.rejected.push(RejectedRow {
                line,
                user_id: record.user_id,
                date: date_str.to_string(),
                reason,
            }),
        }
    }
    if records.is_empty() {
        return Err(Error::domain(format!(
            "{path_str}: no valid records after ingestion"
        )));
    }
    let cohort = Cohort::from_records(records, None)?;
    Ok((cohort, report))
}

fn parse_opt<T: FromStr>(
    field: &str,
    name: &str,
    line: u64,
    parse_err: &impl Fn(u64, String) -> Error,
) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<T>()
        .map(Some)
        .map_err(|e| parse_err(line, format!("bad {name} `{field}`: {e}")))
}

/// Keep exactly the users whose fraction of days with a measurement of
/// `activity` over the cohort interval is at least `min_fraction`.
pub fn filter_by_coverage(cohort: &Cohort, activity: Activity, min_fraction: f64) -> Result<Cohort> {
    if !(0.0..=1.0).contains(&min_fraction) {
        return Err(Error::InvalidParameter(format!(
            "min_fraction {min_fraction} outside [0, 1]"
        )));
    }
    let n_days = cohort.interval().n_days() as f64;
    let keep: BTreeSet<String> = cohort
        .users()
        .filter(|u| {
            let covered = cohort
                .user_records(u)
                .map(|recs| recs.values().filter(|r| r.has(activity)).count())
                .unwrap_or(0);
            covered as f64 / n_days >= min_fraction
        })
        .map(String::from)
        .collect();
    Ok(cohort.restrict_users(&keep))
}

/// Ordered sleep-onset timestamps for one user, in fractional days from
/// the interval start.
///
/// The time axis runs over `[0, T]` with `T = n_days + 1`: the extra day
/// holds onsets of the last labeled night that fall past midnight.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    spikes: Vec<f64>,
    t_end: f64,
}

impl SpikeTrain {
    pub fn new(spikes: Vec<f64>, t_end: f64) -> Result<Self> {
        if !t_end.is_finite() || t_end <= 0.0 {
            return Err(Error::domain(format!("spike train end {t_end} invalid")));
        }
        if let Some(bad) = spikes.iter().find(|t| !t.is_finite()) {
            return Err(Error::domain(format!("non-finite spike time {bad}")));
        }
        for w in spikes.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::domain(format!(
                    "spike times not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let (Some(&first), Some(&last)) = (spikes.first(), spikes.last()) {
            if first < 0.0 || last > t_end {
                return Err(Error::domain(format!(
                    "spikes [{first}, {last}] outside [0, {t_end}]"
                )));
            }
        }
        Ok(SpikeTrain { spikes, t_end })
    }

    pub fn spikes(&self) -> &[f64] {
        &self.spikes
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    /// Shift every spike and the interval end by `delta ≥ 0`.
    pub fn shifted(&self, delta: f64) -> Result<SpikeTrain> {
        SpikeTrain::new(
            self.spikes.iter().map(|t| t + delta).collect(),
            self.t_end + delta,
        )
    }
}

/// Convert a user's nightly sleep onsets into a [`SpikeTrain`].
///
/// A night labeled with day index `d` spikes at `d + minutes/1440`, or at
/// `d + 1 + minutes/1440` when flagged next-day. Nights without a recorded
/// onset produce no spike.
pub fn to_spike_train(cohort: &Cohort, user: &str) -> Result<SpikeTrain> {
    let recs = cohort.user_records(user)?;
    let interval = cohort.interval();
    let mut spikes = Vec::new();
    for rec in recs.values() {
        if let Some(onset) = rec.sleep_onset {
            let day = interval.index_of(rec.date)? as f64;
            let offset = if onset.next_day { 1.0 } else { 0.0 };
            let t = day + offset + onset.minutes / MINUTES_PER_DAY;
            if let Some(&prev) = spikes.last() {
                if t <= prev {
                    return Err(Error::domain(format!(
                        "user {user}: onset on {} is not after the previous night's onset",
                        rec.date
                    )));
                }
            }
            spikes.push(t);
        }
    }
    SpikeTrain::new(spikes, interval.n_days() as f64 + 1.0)
}

/// Users with a recorded onset on every night of `[t−α, t)` and `[t, t+α)`.
pub fn filter_complete_trains(cohort: &Cohort, event: &EventSpec) -> Result<BTreeSet<String>> {
    let dates = event.required_nights()?;
    let interval = cohort.interval();
    if !interval.contains(dates[0]) || !interval.contains(*dates.last().unwrap()) {
        return Err(Error::domain(format!(
            "event `{}` window [{}, {}] outside cohort interval [{}, {}]",
            event.name,
            dates[0],
            dates.last().unwrap(),
            interval.start,
            interval.end
        )));
    }
    Ok(cohort
        .users()
        .filter(|u| {
            let recs = cohort.user_records(u).unwrap();
            dates
                .iter()
                .all(|d| recs.get(d).is_some_and(|r| r.sleep_onset.is_some()))
        })
        .map(String::from)
        .collect())
}

/// Regularly sampled daily values with explicit missing markers.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub start_date: NaiveDate,
    pub values: Vec<Option<f64>>,
}

impl DailySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Result<usize> {
        let offset = (date - self.start_date).num_days();
        if offset < 0 || offset as usize >= self.values.len() {
            return Err(Error::domain(format!(
                "date {date} outside series starting {} ({} days)",
                self.start_date,
                self.values.len()
            )));
        }
        Ok(offset as usize)
    }
}

/// One value per day of the cohort interval for the given user and
/// activity; days without a measurement are marked missing.
pub fn to_daily_series(cohort: &Cohort, user: &str, activity: Activity) -> Result<DailySeries> {
    let recs = cohort.user_records(user)?;
    let interval = cohort.interval();
    let mut values = vec![None; interval.n_days()];
    for rec in recs.values() {
        let idx = interval.index_of(rec.date)?;
        values[idx] = rec.value(activity);
    }
    Ok(DailySeries {
        start_date: interval.start,
        values,
    })
}

/// A named collective event: a date plus the analysis buffer window α.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpec {
    pub name: String,
    pub date: NaiveDate,
    pub alpha_days: u32,
}

impl EventSpec {
    pub const DEFAULT_ALPHA_DAYS: u32 = 7;

    pub fn new(name: impl Into<String>, date: NaiveDate, alpha_days: u32) -> Result<Self> {
        if alpha_days == 0 {
            return Err(Error::InvalidParameter("alpha_days must be ≥ 1".into()));
        }
        Ok(EventSpec {
            name: name.into(),
            date,
            alpha_days,
        })
    }

    /// Nights that must carry an onset for a complete train:
    /// `[t−α, t+α−1]`, i.e. the nights of `[t−α, t)` and `[t, t+α)`.
    pub fn required_nights(&self) -> Result<Vec<NaiveDate>> {
        let a = self.alpha_days as i64;
        Ok(((-a)..a)
            .map(|off| self.date + Duration::days(off))
            .collect())
    }

    /// Volume window `[t−α, t+α]`, validated against the interval.
    pub fn volume_dates(&self, interval: &DateInterval) -> Result<Vec<NaiveDate>> {
        let a = self.alpha_days as i64;
        let dates: Vec<NaiveDate> = ((-a)..=a).map(|off| self.date + Duration::days(off)).collect();
        if !interval.contains(dates[0]) || !interval.contains(*dates.last().unwrap()) {
            return Err(Error::domain(format!(
                "event `{}` volume window outside cohort interval",
                self.name
            )));
        }
        Ok(dates)
    }
}
