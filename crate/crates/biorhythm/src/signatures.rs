//! Per-event metric signatures and day clustering.
//!
//! [`build_signature_table`] assembles one row per event — volume, OOS,
//! OOS growth and rhythm disruptions — plus a Random row from the null
//! models, mirroring the per-event summary table. [`day_feature_points`]
//! scores every day of the year in the (volume, rhythm-disruption) plane:
//! each day is treated as a micro-event whose shift distribution is
//! compared against the global random-day null, and both feature columns
//! are z-standardized. [`dbscan`] groups those day points with a
//! deterministic density clustering (border points join their nearest
//! core), and [`silhouette`] scores the clustering quality.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use crate::data_model::{Activity, Cohort, EventSpec};
use crate::error::{Error, Result};
use crate::null_model::{cohort_series, null_shift_distribution, null_sync_with_growth, shifts_at};
use crate::rhythm::{rhythm_disruption, shift_distribution, RhythmConfig, ShiftDistribution};
use crate::spike_sync::{event_sync_report, SyncConfig};
use crate::volume::{population_volume, window_volume, PopulationSeries};

/// Parameters shared by the signature table and the day features.
#[derive(Debug, Clone)]
pub struct SignatureConfig {
    pub sync: SyncConfig,
    pub rhythm: RhythmConfig,
    /// Buffer window for volume summaries and the Random row's OOS.
    pub alpha_days: u32,
    pub null_days: usize,
    pub null_seed: u64,
    /// Dates whose neighborhoods random days must avoid (typically the
    /// configured event windows).
    pub null_exclusions: BTreeSet<NaiveDate>,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
}

impl Default for SignatureConfig {
    fn default() -> Self {
        SignatureConfig {
            sync: SyncConfig::default(),
            rhythm: RhythmConfig::default(),
            alpha_days: EventSpec::DEFAULT_ALPHA_DAYS,
            null_days: 100,
            null_seed: 0,
            null_exclusions: BTreeSet::new(),
            dbscan_eps: 0.5,
            dbscan_min_pts: 5,
        }
    }
}

/// One row of the signature table; cells are `None` where the metric
/// failed (failures are reported alongside, not silently).
#[derive(Debug, Clone, Serialize)]
pub struct EventSignature {
    pub event_name: String,
    pub steps_volume: Option<f64>,
    pub sleep_volume_hours: Option<f64>,
    pub hr_volume_bpm: Option<f64>,
    pub oos_sleep: Option<f64>,
    pub oos_growth_sleep: Option<f64>,
    pub rhythm_disruption_steps: Option<f64>,
    pub rhythm_disruption_sleep: Option<f64>,
    pub rhythm_disruption_hr: Option<f64>,
}

impl EventSignature {
    fn empty(name: &str) -> Self {
        EventSignature {
            event_name: name.to_string(),
            steps_volume: None,
            sleep_volume_hours: None,
            hr_volume_bpm: None,
            oos_sleep: None,
            oos_growth_sleep: None,
            rhythm_disruption_steps: None,
            rhythm_disruption_sleep: None,
            rhythm_disruption_hr: None,
        }
    }
}

/// A metric that could not be computed for one table cell.
#[derive(Debug, Clone, Serialize)]
pub struct MetricFailure {
    pub event: String,
    pub metric: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignatureTable {
    pub rows: Vec<EventSignature>,
    pub failures: Vec<MetricFailure>,
}

impl SignatureTable {
    /// CSV export in table column order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "event,steps_volume,sleep_volume_hours,hr_volume_bpm,oos_sleep,oos_growth_sleep,\
             rhythm_disruption_steps,rhythm_disruption_sleep,rhythm_disruption_hr\n",
        );
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.event_name,
                cell(row.steps_volume),
                cell(row.sleep_volume_hours),
                cell(row.hr_volume_bpm),
                cell(row.oos_sleep),
                cell(row.oos_growth_sleep),
                cell(row.rhythm_disruption_steps),
                cell(row.rhythm_disruption_sleep),
                cell(row.rhythm_disruption_hr),
            ));
        }
        out
    }
}

const TABLE_ACTIVITIES: [Activity; 3] =
    [Activity::Steps, Activity::SleepMinutes, Activity::HeartRate];

fn set_volume(row: &mut EventSignature, activity: Activity, value: f64) {
    match activity {
        Activity::Steps => row.steps_volume = Some(value),
        Activity::SleepMinutes => row.sleep_volume_hours = Some(value / 60.0),
        Activity::HeartRate => row.hr_volume_bpm = Some(value),
        Activity::SleepOnset => {}
    }
}

fn set_disruption(row: &mut EventSignature, activity: Activity, value: f64) {
    match activity {
        Activity::Steps => row.rhythm_disruption_steps = Some(value),
        Activity::SleepMinutes => row.rhythm_disruption_sleep = Some(value),
        Activity::HeartRate => row.rhythm_disruption_hr = Some(value),
        Activity::SleepOnset => {}
    }
}

/// One row per event plus a Random row from the null models. Per-metric
/// failures become missing cells and are listed in the result.
pub fn build_signature_table(
    cohort: &Cohort,
    events: &[EventSpec],
    cfg: &SignatureConfig,
) -> Result<SignatureTable> {
    let mut failures = Vec::new();
    let mut rows = Vec::new();

    // Shared machinery: null shift distribution per activity, population
    // series per activity.
    let mut nulls = Vec::new();
    for activity in TABLE_ACTIVITIES {
        let null = null_shift_distribution(
            cohort,
            activity,
            cfg.rhythm.window_days,
            cfg.null_days,
            cfg.null_seed,
            &cfg.rhythm,
            &cfg.null_exclusions,
        );
        nulls.push((activity, null));
    }
    let volumes: Vec<(Activity, PopulationSeries)> = TABLE_ACTIVITIES
        .iter()
        .map(|&a| (a, population_volume(cohort, a)))
        .collect();

    for event in events {
        let mut row = EventSignature::empty(&event.name);
        let fail = |metric: &str, err: &Error, failures: &mut Vec<MetricFailure>| {
            failures.push(MetricFailure {
                event: event.name.clone(),
                metric: metric.to_string(),
                error: err.to_string(),
            });
        };

        for (activity, series) in &volumes {
            match event
                .volume_dates(&cohort.interval())
                .and_then(|dates| window_volume(series, cohort, &dates, &event.name))
            {
                Ok(v) => set_volume(&mut row, *activity, v),
                Err(e) => fail(&format!("volume_{activity}"), &e, &mut failures),
            }
        }

        match event_sync_report(cohort, event, &cfg.sync) {
            Ok(report) => {
                row.oos_sleep = Some(report.oos);
                match report.oos_growth {
                    Some(g) => row.oos_growth_sleep = Some(g),
                    None => fail(
                        "oos_growth_sleep",
                        &Error::UndefinedGrowth,
                        &mut failures,
                    ),
                }
            }
            Err(e) => fail("oos_sleep", &e, &mut failures),
        }

        for (activity, null) in &nulls {
            let disruption = null.as_ref().map_err(|e| Error::domain(e.to_string())).and_then(|null_dist| {
                event_shift_distribution(cohort, *activity, event, &cfg.rhythm)
                    .and_then(|(event_dist, _)| rhythm_disruption(&event_dist, null_dist))
            });
            match disruption {
                Ok(kl) => set_disruption(&mut row, *activity, kl),
                Err(e) => fail(&format!("rhythm_disruption_{activity}"), &e, &mut failures),
            }
        }
        rows.push(row);
    }

    // Random row: volumes and OOS from random-day evaluations; rhythm
    // disruption of the null against itself is 0 by construction.
    let mut random = EventSignature::empty("random");
    match random_volume_row(cohort, cfg, &volumes) {
        Ok(values) => {
            for (activity, v) in values {
                set_volume(&mut random, activity, v);
            }
        }
        Err(e) => failures.push(MetricFailure {
            event: "random".into(),
            metric: "volume".into(),
            error: e.to_string(),
        }),
    }
    match null_sync_with_growth(
        cohort,
        cfg.alpha_days,
        cfg.null_days,
        cfg.null_seed,
        &cfg.sync,
        &cfg.null_exclusions,
    ) {
        Ok(outcome) => {
            random.oos_sleep = Some(outcome.oos.mean);
            random.oos_growth_sleep = Some(outcome.growth.mean);
        }
        Err(e) => failures.push(MetricFailure {
            event: "random".into(),
            metric: "oos_sleep".into(),
            error: e.to_string(),
        }),
    }
    for (activity, null) in &nulls {
        match null {
            Ok(dist) => set_disruption(&mut random, *activity, rhythm_disruption(dist, dist)?),
            Err(e) => failures.push(MetricFailure {
                event: "random".into(),
                metric: format!("rhythm_disruption_{activity}"),
                error: e.to_string(),
            }),
        }
    }
    rows.push(random);

    Ok(SignatureTable { rows, failures })
}

/// Shift distribution of one event for one activity, together with the
/// number of users that contributed a shift.
pub fn event_shift_distribution(
    cohort: &Cohort,
    activity: Activity,
    event: &EventSpec,
    cfg: &RhythmConfig,
) -> Result<(ShiftDistribution, usize)> {
    let series = cohort_series(cohort, activity);
    let idx = cohort.interval().index_of(event.date)?;
    let shifts = shifts_at(&series, idx, cfg);
    if shifts.is_empty() {
        return Err(Error::insufficient(format!(
            "event `{}`: no user has computable rhythm windows",
            event.name
        )));
    }
    let dist = shift_distribution(
        &shifts,
        cfg.bin_width_days,
        cfg.smoothing_mass,
        cfg.max_abs_shift_days(),
    )?;
    Ok((dist, shifts.len()))
}

fn random_volume_row(
    cohort: &Cohort,
    cfg: &SignatureConfig,
    volumes: &[(Activity, PopulationSeries)],
) -> Result<Vec<(Activity, f64)>> {
    let days = crate::null_model::sample_random_days(
        &cohort.interval(),
        cfg.alpha_days,
        cfg.null_days,
        cfg.null_seed,
        &cfg.null_exclusions,
    )?;
    let mut out = Vec::new();
    for (activity, series) in volumes {
        let mut samples = Vec::new();
        for &d in &days {
            let event = EventSpec {
                name: format!("random@{d}"),
                date: d,
                alpha_days: cfg.alpha_days,
            };
            if let Ok(dates) = event.volume_dates(&cohort.interval()) {
                if let Ok(v) = window_volume(series, cohort, &dates, &event.name) {
                    samples.push(v);
                }
            }
        }
        if samples.is_empty() {
            return Err(Error::insufficient("no computable random volume windows"));
        }
        out.push((*activity, samples.iter().sum::<f64>() / samples.len() as f64));
    }
    Ok(out)
}

/// One day of the year in the standardized volume-by-disruption plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayPoint {
    pub date: NaiveDate,
    pub volume_z: f64,
    pub disruption_z: f64,
    /// Cluster id, or `None` for noise/unclustered.
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct DayFeatures {
    pub points: Vec<DayPoint>,
    /// Days excluded because a window was not computable.
    pub skipped_days: usize,
}

impl DayFeatures {
    /// CSV export, header `date,volume_z,disruption_z,cluster`; noise is
    /// written as −1.
    pub fn to_csv(&self) -> String {
        day_points_csv(&self.points)
    }
}

pub fn day_points_csv(points: &[DayPoint]) -> String {
    let mut out = String::from("date,volume_z,disruption_z,cluster\n");
    for p in points {
        let cluster = p.cluster.map(|c| c as i64).unwrap_or(-1);
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.date, p.volume_z, p.disruption_z, cluster
        ));
    }
    out
}

/// Score every day as a micro-event: window volume and rhythm disruption
/// against the global null, both columns z-standardized. Days whose
/// volume or rhythm windows do not fit are excluded and counted.
pub fn day_feature_points(
    cohort: &Cohort,
    activity: Activity,
    cfg: &SignatureConfig,
) -> Result<DayFeatures> {
    let interval = cohort.interval();
    let n_days = interval.n_days();
    let null = null_shift_distribution(
        cohort,
        activity,
        cfg.rhythm.window_days,
        cfg.null_days,
        cfg.null_seed,
        &cfg.rhythm,
        &cfg.null_exclusions,
    )?;
    let series = cohort_series(cohort, activity);
    let pop = population_volume(cohort, activity);
    let alpha = cfg.alpha_days as usize;
    let w = cfg.rhythm.window_days;

    let candidates: Vec<usize> = (0..n_days)
        .filter(|&d| d >= alpha && d + alpha < n_days && d >= w && d + w <= n_days)
        .collect();
    let skipped_fit = n_days - candidates.len();

    let per_day: Vec<Option<(NaiveDate, f64, f64)>> = candidates
        .par_iter()
        .map(|&d| {
            let date = interval.date_at(d);
            let mut vol_sum = 0.0;
            let mut vol_n = 0usize;
            for i in (d - alpha)..=(d + alpha) {
                if let Some(m) = pop.mean[i] {
                    vol_sum += m;
                    vol_n += 1;
                }
            }
            if vol_n == 0 {
                return None;
            }
            let shifts = shifts_at(&series, d, &cfg.rhythm);
            if shifts.is_empty() {
                return None;
            }
            let dist = shift_distribution(
                &shifts,
                cfg.rhythm.bin_width_days,
                cfg.rhythm.smoothing_mass,
                cfg.rhythm.max_abs_shift_days(),
            )
            .ok()?;
            let kl = rhythm_disruption(&dist, &null).ok()?;
            Some((date, vol_sum / vol_n as f64, kl))
        })
        .collect();

    let skipped = skipped_fit + per_day.iter().filter(|p| p.is_none()).count();
    let mut dates = Vec::new();
    let mut volume = Vec::new();
    let mut disruption = Vec::new();
    for item in per_day.into_iter().flatten() {
        dates.push(item.0);
        volume.push(item.1);
        disruption.push(item.2);
    }
    if dates.is_empty() {
        return Err(Error::insufficient("no day admits both feature windows"));
    }
    if !zscore(&mut volume) {
        log::warn!("volume column is constant; standardized to zeros");
    }
    if !zscore(&mut disruption) {
        log::warn!("disruption column is constant; standardized to zeros");
    }
    let points = dates
        .into_iter()
        .zip(volume)
        .zip(disruption)
        .map(|((date, v), k)| DayPoint {
            date,
            volume_z: v,
            disruption_z: k,
            cluster: None,
        })
        .collect();
    Ok(DayFeatures {
        points,
        skipped_days: skipped,
    })
}

/// In-place z-standardization (population σ). Returns false and zeroes
/// the column when it is constant.
pub fn zscore(values: &mut [f64]) -> bool {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return false;
    }
    let sd = var.sqrt();
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    true
}

fn dist2(a: &DayPoint, b: &DayPoint) -> f64 {
    let dx = a.volume_z - b.volume_z;
    let dy = a.disruption_z - b.disruption_z;
    dx * dx + dy * dy
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Density clustering on the (volume_z, disruption_z) plane with
/// Euclidean distances. Core points (≥ `min_pts` neighbors within `eps`,
/// the point itself included) form clusters as connected components;
/// border points join their nearest core, ties broken by coordinates, so
/// the partition is independent of input order. Points with no core in
/// reach are noise.
pub fn dbscan(points: &[DayPoint], eps: f64, min_pts: usize) -> Result<Vec<DayPoint>> {
    if points.is_empty() {
        return Err(Error::domain("no points to cluster"));
    }
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidParameter("eps must be > 0".into()));
    }
    if min_pts < 1 {
        return Err(Error::InvalidParameter("min_pts must be ≥ 1".into()));
    }
    let n = points.len();
    let eps2 = eps * eps;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| dist2(&points[i], &points[j]) <= eps2)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();

    let mut uf = UnionFind::new(n);
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &neighbors[i] {
            if core[j] {
                uf.union(i, j);
            }
        }
    }

    let mut assignment: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if core[i] {
            assignment[i] = Some(uf.find(i));
        } else {
            // nearest core within eps, ties broken by coordinates
            let best = neighbors[i]
                .iter()
                .filter(|&&j| core[j])
                .min_by(|&&a, &&b| {
                    let da = dist2(&points[i], &points[a]);
                    let db = dist2(&points[i], &points[b]);
                    da.partial_cmp(&db)
                        .unwrap()
                        .then_with(|| {
                            points[a]
                                .volume_z
                                .partial_cmp(&points[b].volume_z)
                                .unwrap()
                        })
                        .then_with(|| {
                            points[a]
                                .disruption_z
                                .partial_cmp(&points[b].disruption_z)
                                .unwrap()
                        })
                });
            assignment[i] = best.map(|&j| uf.find(j));
        }
    }

    // Compact root ids into cluster labels in first-appearance order.
    let mut labels: Vec<(usize, usize)> = Vec::new();
    let mut result = points.to_vec();
    for (i, root) in assignment.iter().enumerate() {
        result[i].cluster = root.map(|r| {
            match labels.iter().find(|(root_id, _)| *root_id == r) {
                Some((_, label)) => *label,
                None => {
                    let label = labels.len();
                    labels.push((r, label));
                    label
                }
            }
        });
    }
    Ok(result)
}

/// Mean silhouette coefficient over clustered points (noise excluded).
pub fn silhouette(points: &[DayPoint]) -> Result<f64> {
    let clustered: Vec<&DayPoint> = points.iter().filter(|p| p.cluster.is_some()).collect();
    let cluster_ids: BTreeSet<usize> = clustered.iter().filter_map(|p| p.cluster).collect();
    if cluster_ids.len() < 2 {
        return Err(Error::UndefinedSilhouette(format!(
            "{} cluster(s), need at least 2",
            cluster_ids.len()
        )));
    }
    let mut total = 0.0;
    for p in &clustered {
        let own = p.cluster.unwrap();
        let mut own_sum = 0.0;
        let mut own_n = 0usize;
        let mut other: Vec<(usize, f64, usize)> =
            cluster_ids.iter().filter(|&&c| c != own).map(|&c| (c, 0.0, 0)).collect();
        for q in &clustered {
            if std::ptr::eq(*p, *q) {
                continue;
            }
            let d = dist2(p, q).sqrt();
            let c = q.cluster.unwrap();
            if c == own {
                own_sum += d;
                own_n += 1;
            } else if let Some(entry) = other.iter_mut().find(|(id, _, _)| *id == c) {
                entry.1 += d;
                entry.2 += 1;
            }
        }
        if own_n == 0 {
            // singleton cluster: silhouette 0 by convention
            continue;
        }
        let a = own_sum / own_n as f64;
        let b = other
            .iter()
            .filter(|(_, _, n)| *n > 0)
            .map(|(_, sum, n)| sum / *n as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / clustered.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_cohort, CohortSpec, EventEffect};
    use chrono::Duration;
    use proptest::prelude::*;

    fn point(x: f64, y: f64) -> DayPoint {
        DayPoint {
            date: "2016-06-01".parse().unwrap(),
            volume_z: x,
            disruption_z: y,
            cluster: None,
        }
    }

    fn blob(cx: f64, cy: f64, k: usize, spread: f64) -> Vec<DayPoint> {
        (0..k)
            .map(|i| {
                let angle = i as f64 * 2.399963; // golden angle, deterministic
                point(
                    cx + spread * angle.cos() * (i as f64 / k as f64),
                    cy + spread * angle.sin() * (i as f64 / k as f64),
                )
            })
            .collect()
    }

    #[test]
    fn two_blobs_two_clusters_no_noise() {
        let mut points = blob(0.0, 0.0, 12, 0.2);
        points.extend(blob(5.0, 5.0, 12, 0.2));
        let labeled = dbscan(&points, 0.5, 5).unwrap();
        let clusters: BTreeSet<usize> = labeled.iter().filter_map(|p| p.cluster).collect();
        assert_eq!(clusters.len(), 2);
        assert!(labeled.iter().all(|p| p.cluster.is_some()));
        let s = silhouette(&labeled).unwrap();
        assert!(s > 0.9, "{s}");
    }

    #[test]
    fn tiny_eps_makes_everything_noise() {
        let points = blob(0.0, 0.0, 10, 0.5);
        let labeled = dbscan(&points, 1e-9, 5).unwrap();
        assert!(labeled.iter().all(|p| p.cluster.is_none()));
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let points: Vec<DayPoint> = (0..6).map(|_| point(1.0, 1.0)).collect();
        let labeled = dbscan(&points, 0.5, 5).unwrap();
        assert!(labeled.iter().all(|p| p.cluster == Some(0)));
        assert!(silhouette(&labeled).is_err());
    }

    #[test]
    fn silhouette_stays_in_range() {
        let mut points = blob(0.0, 0.0, 10, 0.8);
        points.extend(blob(1.5, 0.0, 10, 0.8));
        let labeled = dbscan(&points, 0.7, 4).unwrap();
        if let Ok(s) = silhouette(&labeled) {
            assert!((-1.0..=1.0).contains(&s), "{s}");
        }
    }

    #[test]
    fn standardization_is_definitional_and_idempotent() {
        let mut values = vec![3.0, 9.5, -2.0, 4.25, 8.0, 0.5];
        assert!(zscore(&mut values));
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((sd - 1.0).abs() < 1e-9);
        let before = values.clone();
        zscore(&mut values);
        for (a, b) in before.iter().zip(&values) {
            assert!((a - b).abs() < 1e-9);
        }
        let mut constant = vec![4.0; 8];
        assert!(!zscore(&mut constant));
        assert!(constant.iter().all(|&v| v == 0.0));
    }

    fn signature_cfg() -> SignatureConfig {
        SignatureConfig {
            sync: SyncConfig {
                pair_budget: Some(120),
                seed: 1,
                ..SyncConfig::default()
            },
            null_days: 30,
            null_seed: 2,
            ..SignatureConfig::default()
        }
    }

    #[test]
    fn zero_events_yield_only_the_random_row() {
        let spec = CohortSpec {
            n_users: 15,
            days: 120,
            seed: 12,
            ..CohortSpec::default()
        };
        let cohort = generate_cohort(&spec, &[]).unwrap();
        let table = build_signature_table(&cohort, &[], &signature_cfg()).unwrap();
        assert_eq!(table.rows.len(), 1);
        let random = &table.rows[0];
        assert_eq!(random.event_name, "random");
        assert_eq!(random.rhythm_disruption_steps, Some(0.0));
        assert_eq!(random.rhythm_disruption_sleep, Some(0.0));
        assert_eq!(random.rhythm_disruption_hr, Some(0.0));
        assert!(random.steps_volume.is_some());
        assert!(table.failures.is_empty(), "{:?}", table.failures);
    }

    #[test]
    fn desync_event_has_the_largest_oos() {
        let spec = CohortSpec {
            n_users: 24,
            days: 180,
            seed: 9,
            ..CohortSpec::default()
        };
        let start = spec.start_date;
        let desync = EventEffect {
            onset_jitter_multiplier: 4.0,
            ..EventEffect::new(start + Duration::days(40), 14)
        };
        let sleepy = EventEffect {
            sleep_delta_min: 60.0,
            ..EventEffect::new(start + Duration::days(90), 14)
        };
        let hearty = EventEffect {
            hr_delta_bpm: 4.0,
            ..EventEffect::new(start + Duration::days(140), 14)
        };
        let cohort = generate_cohort(&spec, &[desync, sleepy, hearty]).unwrap();
        let events = vec![
            EventSpec::new("desync", start + Duration::days(40), 7).unwrap(),
            EventSpec::new("sleepy", start + Duration::days(90), 7).unwrap(),
            EventSpec::new("hearty", start + Duration::days(140), 7).unwrap(),
        ];
        let table = build_signature_table(&cohort, &events, &signature_cfg()).unwrap();
        let oos = |name: &str| {
            table
                .rows
                .iter()
                .find(|r| r.event_name == name)
                .unwrap()
                .oos_sleep
                .unwrap()
        };
        assert!(oos("desync") > oos("sleepy"), "{} vs {}", oos("desync"), oos("sleepy"));
        assert!(oos("desync") > oos("hearty"), "{} vs {}", oos("desync"), oos("hearty"));
    }

    #[test]
    fn constant_cohort_degenerates_to_zeroed_features() {
        // missing_rate 0, zero variance everywhere
        let spec = CohortSpec {
            n_users: 6,
            days: 100,
            seed: 1,
            onset_sd_min: 0.0,
            sleep_sd_min: 0.0,
            steps_sd: 0.0,
            steps_weekday: 7000.0,
            steps_weekend: 7000.0,
            hr_sd_bpm: 0.0,
            ..CohortSpec::default()
        };
        let cohort = generate_cohort(&spec, &[]).unwrap();
        let cfg = SignatureConfig {
            null_days: 10,
            ..signature_cfg()
        };
        let features = day_feature_points(&cohort, Activity::HeartRate, &cfg).unwrap();
        assert!(features
            .points
            .iter()
            .all(|p| p.volume_z == 0.0 && p.disruption_z == 0.0));
    }

    #[test]
    fn day_features_are_standardized() {
        let spec = CohortSpec {
            n_users: 10,
            days: 140,
            seed: 4,
            ..CohortSpec::default()
        };
        let cohort = generate_cohort(&spec, &[]).unwrap();
        let cfg = SignatureConfig {
            null_days: 20,
            ..signature_cfg()
        };
        let features = day_feature_points(&cohort, Activity::SleepMinutes, &cfg).unwrap();
        let n = features.points.len() as f64;
        let mean: f64 = features.points.iter().map(|p| p.volume_z).sum::<f64>() / n;
        let sd = (features
            .points
            .iter()
            .map(|p| (p.volume_z - mean) * (p.volume_z - mean))
            .sum::<f64>()
            / n)
            .sqrt();
        assert!(mean.abs() < 1e-9, "{mean}");
        assert!((sd - 1.0).abs() < 1e-9, "{sd}");
        assert!(features.skipped_days > 0); // edge days cannot fit the windows
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn dbscan_partition_is_order_invariant(
            xs in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 5..40),
            rotate in 0usize..40,
        ) {
            let points: Vec<DayPoint> = xs.iter().map(|&(x, y)| point(x, y)).collect();
            let mut shuffled = points.clone();
            let split = rotate % shuffled.len().max(1);
            shuffled.rotate_left(split);
            let a = dbscan(&points, 1.0, 3).unwrap();
            let b = dbscan(&shuffled, 1.0, 3).unwrap();
            let partition = |labeled: &[DayPoint]| {
                let mut clusters: std::collections::BTreeMap<usize, BTreeSet<(u64, u64)>> =
                    std::collections::BTreeMap::new();
                for p in labeled {
                    if let Some(c) = p.cluster {
                        clusters
                            .entry(c)
                            .or_default()
                            .insert((p.volume_z.to_bits(), p.disruption_z.to_bits()));
                    }
                }
                let mut sets: Vec<BTreeSet<(u64, u64)>> = clusters.into_values().collect();
                sets.sort();
                sets
            };
            prop_assert_eq!(partition(&a), partition(&b));
        }
    }
}
