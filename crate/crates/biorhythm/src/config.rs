//! Flat key-value configuration files.
//!
//! All configuration uses one format: `[block]` headers followed by
//! `key = value` lines, `#` comment lines, blank lines between blocks.
//! Unknown keys and unknown block names are rejected by name, so a typo
//! cannot silently fall back to a default.
//!
//! Three file kinds are read:
//!
//! - event lists — repeated `[event]` blocks with `name`, `date` and
//!   optional `alpha_days`;
//! - simulator specs — one `[cohort]` block and any number of `[effect]`
//!   blocks;
//! - run configs — one `[run]` block driving `analyze` / `nullmodel`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::data_model::{Activity, EventSpec};
use crate::error::{Error, Result};
use crate::rhythm::{default_bin_width, RhythmConfig};
use crate::simulator::{CohortSpec, EventEffect};
use crate::spike_sync::{EdgeHandling, SpikeDistanceConfig, SpikeVariant};

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub line: usize,
    entries: Vec<(String, String, usize)>,
}

/// Parse a block file; syntax errors name the line.
pub fn parse_blocks(path: &Path) -> Result<Vec<Block>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config(format!("{}: {e}", path.display()))
    })?;
    let mut blocks: Vec<Block> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            blocks.push(Block {
                name: name.trim().to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(format!(
                "{}:{line_no}: expected `key = value` or `[block]`, got `{line}`",
                path.display()
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(block) = blocks.last_mut() else {
            return Err(Error::config(format!(
                "{}:{line_no}: `{key}` appears before any [block] header",
                path.display()
            )));
        };
        if block.entries.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::config(format!(
                "{}:{line_no}: duplicate key `{key}` in [{}]",
                path.display(),
                block.name
            )));
        }
        block.entries.push((key, value, line_no));
    }
    Ok(blocks)
}

/// Typed, unknown-key-rejecting access to one block's entries.
pub struct BlockReader<'a> {
    path: &'a Path,
    block: &'a Block,
    taken: Vec<bool>,
}

impl<'a> BlockReader<'a> {
    pub fn new(path: &'a Path, block: &'a Block) -> Self {
        BlockReader {
            path,
            block,
            taken: vec![false; block.entries.len()],
        }
    }

    fn get(&mut self, key: &str) -> Option<String> {
        for (i, (k, v, _)) in self.block.entries.iter().enumerate() {
            if k == key {
                self.taken[i] = true;
                return Some(v.clone());
            }
        }
        None
    }

    pub fn required(&mut self, key: &str) -> Result<String> {
        self.get(key).ok_or_else(|| {
            Error::config(format!(
                "{}:{}: [{}] is missing required key `{key}`",
                self.path.display(),
                self.block.line,
                self.block.name
            ))
        })
    }

    pub fn string(&mut self, key: &str) -> Option<String> {
        self.get(key)
    }

    pub fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| {
                Error::config(format!(
                    "{}: [{}] key `{key}`: bad value `{v}`: {e}",
                    self.path.display(),
                    self.block.name
                ))
            }),
        }
    }

    pub fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn date(&mut self, key: &str) -> Result<Option<NaiveDate>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => NaiveDate::parse_from_str(&v, "%Y-%m-%d").map(Some).map_err(|e| {
                Error::config(format!(
                    "{}: [{}] key `{key}`: bad date `{v}`: {e}",
                    self.path.display(),
                    self.block.name
                ))
            }),
        }
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.get(key).as_deref() {
            None => Ok(default),
            Some("1") | Some("true") => Ok(true),
            Some("0") | Some("false") => Ok(false),
            Some(v) => Err(Error::config(format!(
                "{}: [{}] key `{key}`: expected 0/1/true/false, got `{v}`",
                self.path.display(),
                self.block.name
            ))),
        }
    }

    /// Reject every key that was never read.
    pub fn finish(self) -> Result<()> {
        for (i, (k, _, line)) in self.block.entries.iter().enumerate() {
            if !self.taken[i] {
                return Err(Error::config(format!(
                    "{}:{line}: unknown key `{k}` in [{}]",
                    self.path.display(),
                    self.block.name
                )));
            }
        }
        Ok(())
    }
}

/// Load an event list: repeated `[event]` blocks.
pub fn load_events(path: &Path) -> Result<Vec<EventSpec>> {
    let blocks = parse_blocks(path)?;
    let mut events = Vec::new();
    for block in &blocks {
        if block.name != "event" {
            return Err(Error::config(format!(
                "{}:{}: unknown block [{}], expected [event]",
                path.display(),
                block.line,
                block.name
            )));
        }
        let mut r = BlockReader::new(path, block);
        let name = r.required("name")?;
        let date = r.date("date")?.ok_or_else(|| {
            Error::config(format!("{}: [event] `{name}` is missing `date`", path.display()))
        })?;
        let alpha_days = r.parse_or("alpha_days", EventSpec::DEFAULT_ALPHA_DAYS)?;
        r.finish()?;
        let event = EventSpec::new(name, date, alpha_days)
            .map_err(|e| Error::config(e.to_string()))?;
        if events.iter().any(|e: &EventSpec| e.name == event.name) {
            return Err(Error::config(format!(
                "{}: duplicate event name `{}`",
                path.display(),
                event.name
            )));
        }
        events.push(event);
    }
    if events.is_empty() {
        return Err(Error::config(format!(
            "{}: no [event] blocks found",
            path.display()
        )));
    }
    Ok(events)
}

/// Load a simulator spec: one `[cohort]` block plus `[effect]` blocks.
pub fn load_sim_spec(path: &Path) -> Result<(CohortSpec, Vec<EventEffect>)> {
    let blocks = parse_blocks(path)?;
    let mut cohort: Option<CohortSpec> = None;
    let mut effects = Vec::new();
    for block in &blocks {
        match block.name.as_str() {
            "cohort" => {
                if cohort.is_some() {
                    return Err(Error::config(format!(
                        "{}:{}: more than one [cohort] block",
                        path.display(),
                        block.line
                    )));
                }
                let defaults = CohortSpec::default();
                let mut r = BlockReader::new(path, block);
                let spec = CohortSpec {
                    n_users: r.parse_or("n_users", defaults.n_users)?,
                    days: r.parse_or("days", defaults.days)?,
                    seed: r.parse_or("seed", defaults.seed)?,
                    start_date: r.date("start_date")?.unwrap_or(defaults.start_date),
                    onset_mean_min: r.parse_or("onset_mean_min", defaults.onset_mean_min)?,
                    onset_sd_min: r.parse_or("onset_sd_min", defaults.onset_sd_min)?,
                    sleep_mean_min: r.parse_or("sleep_mean_min", defaults.sleep_mean_min)?,
                    sleep_sd_min: r.parse_or("sleep_sd_min", defaults.sleep_sd_min)?,
                    sleep_weekend_delta_min: r
                        .parse_or("sleep_weekend_delta_min", defaults.sleep_weekend_delta_min)?,
                    steps_weekday: r.parse_or("steps_weekday", defaults.steps_weekday)?,
                    steps_weekend: r.parse_or("steps_weekend", defaults.steps_weekend)?,
                    steps_sd: r.parse_or("steps_sd", defaults.steps_sd)?,
                    hr_mean_bpm: r.parse_or("hr_mean_bpm", defaults.hr_mean_bpm)?,
                    hr_sd_bpm: r.parse_or("hr_sd_bpm", defaults.hr_sd_bpm)?,
                    missing_rate: r.parse_or("missing_rate", defaults.missing_rate)?,
                };
                r.finish()?;
                cohort = Some(spec);
            }
            "effect" => {
                let mut r = BlockReader::new(path, block);
                let date = r.date("event_date")?.ok_or_else(|| {
                    Error::config(format!(
                        "{}:{}: [effect] is missing `event_date`",
                        path.display(),
                        block.line
                    ))
                })?;
                let duration_days = r.parse_or("duration_days", 1u32)?;
                let mut effect = EventEffect::new(date, duration_days);
                effect.onset_jitter_multiplier =
                    r.parse_or("onset_jitter_multiplier", effect.onset_jitter_multiplier)?;
                effect.sleep_delta_min = r.parse_or("sleep_delta_min", effect.sleep_delta_min)?;
                effect.hr_delta_bpm = r.parse_or("hr_delta_bpm", effect.hr_delta_bpm)?;
                effect.period_override_days = r.parse("period_override_days")?;
                effect.affected_fraction =
                    r.parse_or("affected_fraction", effect.affected_fraction)?;
                r.finish()?;
                effects.push(effect);
            }
            other => {
                return Err(Error::config(format!(
                    "{}:{}: unknown block [{other}], expected [cohort] or [effect]",
                    path.display(),
                    block.line
                )))
            }
        }
    }
    let cohort = cohort.ok_or_else(|| {
        Error::config(format!("{}: missing [cohort] block", path.display()))
    })?;
    cohort.validate()?;
    for effect in &effects {
        effect.validate(&cohort)?;
    }
    Ok((cohort, effects))
}

/// Everything `analyze` and `nullmodel` need, from the `[run]` block.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub events_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub alpha_days: u32,
    pub rhythm: RhythmConfig,
    pub spike: SpikeDistanceConfig,
    pub pair_budget: Option<usize>,
    pub null_days: usize,
    /// Keep random days away from the configured event windows.
    pub null_exclude_events: bool,
    pub coverage: Option<(Activity, f64)>,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub day_points_activities: Vec<Activity>,
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let blocks = parse_blocks(path)?;
    let [block] = blocks.as_slice() else {
        return Err(Error::config(format!(
            "{}: expected exactly one [run] block, found {}",
            path.display(),
            blocks.len()
        )));
    };
    if block.name != "run" {
        return Err(Error::config(format!(
            "{}:{}: unknown block [{}], expected [run]",
            path.display(),
            block.line,
            block.name
        )));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut r = BlockReader::new(path, block);

    let input = dir.join(r.required("input")?);
    let events_path = r.string("events").map(|e| dir.join(e));
    let out_dir = dir.join(r.parse_or("out_dir", "out".to_string())?);
    let seed = r.parse_or("seed", 0u64)?;
    let alpha_days: u32 = r.parse_or("alpha_days", EventSpec::DEFAULT_ALPHA_DAYS)?;

    let segment_days = r.parse_or("segment_days", 14usize)?;
    let rhythm = RhythmConfig {
        window_days: r.parse_or("rhythm_window_days", 28usize)?,
        segment_days,
        overlap_fraction: r.parse_or("overlap_fraction", 0.5)?,
        bin_width_days: r.parse_or("bin_width_days", default_bin_width(segment_days))?,
        smoothing_mass: r.parse_or("smoothing_mass", 1e-9)?,
    };

    let variant = match r.string("spike_variant") {
        Some(v) => v.parse::<SpikeVariant>()?,
        None => SpikeVariant::StandardNormalized,
    };
    let edge_handling = match r.string("edge_handling").as_deref() {
        None | Some("auxiliary") => EdgeHandling::AuxiliaryEndpointSpikes,
        Some("clip") => EdgeHandling::Clip,
        Some(other) => {
            return Err(Error::config(format!(
                "{}: edge_handling must be auxiliary or clip, got `{other}`",
                path.display()
            )))
        }
    };
    let spike = SpikeDistanceConfig {
        variant,
        grid_points_per_mean_isi: r.parse_or("grid_points_per_isi", 200usize)?,
        edge_handling,
    };

    let pair_budget = r.parse::<usize>("pair_budget")?;
    let null_days: usize = r.parse_or("null_days", 100usize)?;
    let null_exclude_events = r.bool_or("null_exclude_events", false)?;

    let coverage = match (r.string("coverage_activity"), r.parse::<f64>("coverage_min_fraction")?) {
        (Some(a), Some(f)) => Some((a.parse::<Activity>()?, f)),
        (None, None) => None,
        _ => {
            return Err(Error::config(format!(
                "{}: coverage_activity and coverage_min_fraction must be set together",
                path.display()
            )))
        }
    };

    let dbscan_eps = r.parse_or("dbscan_eps", 0.5)?;
    let dbscan_min_pts = r.parse_or("dbscan_min_pts", 5usize)?;
    let day_points_activities = match r.string("day_points_activities") {
        None => vec![Activity::Steps, Activity::SleepMinutes],
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<Activity>())
            .collect::<Result<Vec<_>>>()?,
    };
    r.finish()?;

    let cfg = RunConfig {
        input,
        events_path,
        out_dir,
        seed,
        alpha_days,
        rhythm,
        spike,
        pair_budget,
        null_days,
        null_exclude_events,
        coverage,
        dbscan_eps,
        dbscan_min_pts,
        day_points_activities,
    };
    validate_run_config(&cfg)?;
    Ok(cfg)
}

fn validate_run_config(cfg: &RunConfig) -> Result<()> {
    let as_config = |e: Error| Error::config(e.to_string());
    if cfg.alpha_days == 0 {
        return Err(Error::config("alpha_days must be ≥ 1"));
    }
    if cfg.null_days == 0 {
        return Err(Error::config("null_days must be ≥ 1"));
    }
    cfg.rhythm.validate().map_err(as_config)?;
    cfg.spike.validate().map_err(as_config)?;
    if cfg.pair_budget == Some(0) {
        return Err(Error::config("pair_budget must be ≥ 1"));
    }
    if let Some((_, fraction)) = cfg.coverage {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::config(format!(
                "coverage_min_fraction {fraction} outside [0, 1]"
            )));
        }
    }
    if !cfg.dbscan_eps.is_finite() || cfg.dbscan_eps <= 0.0 {
        return Err(Error::config("dbscan_eps must be > 0"));
    }
    if cfg.dbscan_min_pts == 0 {
        return Err(Error::config("dbscan_min_pts must be ≥ 1"));
    }
    if cfg.day_points_activities.is_empty() {
        return Err(Error::config("day_points_activities must not be empty"));
    }
    Ok(())
}

/// Dates covered by the events' volume windows, for null-model exclusion.
pub fn event_exclusion_dates(events: &[EventSpec]) -> BTreeSet<NaiveDate> {
    let mut dates = BTreeSet::new();
    for event in events {
        let a = event.alpha_days as i64;
        for off in -a..=a {
            dates.insert(event.date + chrono::Duration::days(off));
        }
    }
    dates
}
