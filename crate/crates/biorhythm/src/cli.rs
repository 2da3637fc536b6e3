//! Command implementations behind the `biorhythm` binary.
//!
//! `simulate` generates a cohort CSV from a spec file; `analyze` runs the
//! full metric pipeline and writes a deterministic report bundle (CSV and
//! JSON artifacts plus a manifest listing every file, the config hash and
//! the seed); `nullmodel` evaluates the random-day baselines alone. Exit
//! codes: 0 success, 2 config error, 3 data error, 4 metric failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{self, RunConfig};
use crate::data_model::{filter_by_coverage, parse_activity_csv, Activity, Cohort, CsvSchema, EventSpec};
use crate::error::{Error, Result};
use crate::null_model::{null_oos, null_shift_distribution};
use crate::rhythm::{rhythm_disruption, shift_distribution_csv, DisruptionReport};
use crate::signatures::{
    build_signature_table, day_feature_points, dbscan, event_shift_distribution, silhouette,
    SignatureConfig,
};
use crate::simulator::{export_cohort, generate_cohort};
use crate::spike_sync::{event_sync_report, SyncConfig, SpikeVariant};
use crate::volume::population_volume;

#[derive(Parser)]
#[command(name = "biorhythm", version, about = "Population biorhythm analytics")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Parser, Default)]
pub struct Overrides {
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the pair sampling budget.
    #[arg(long)]
    pub pair_budget: Option<usize>,
    /// Override the event buffer window α in days.
    #[arg(long)]
    pub alpha_days: Option<u32>,
    /// Override the rhythm window length in days.
    #[arg(long)]
    pub rhythm_window_days: Option<usize>,
    /// Spike-distance variant: paper or standard.
    #[arg(long, value_parser = parse_variant)]
    pub spike_variant: Option<SpikeVariant>,
}

fn parse_variant(s: &str) -> std::result::Result<SpikeVariant, String> {
    s.parse::<SpikeVariant>().map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort CSV from a simulator spec file.
    Simulate {
        /// Simulator spec ([cohort] plus [effect] blocks).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override the spec seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full metric pipeline and write a report bundle.
    Analyze {
        /// Run config ([run] block).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate only the random-day baselines.
    Nullmodel {
        /// Run config ([run] block).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) => 2,
        Error::Parse { .. } | Error::DuplicateRecords { .. } | Error::UnknownUser(_) | Error::Io(_) => 3,
        Error::InsufficientData(_)
        | Error::Domain(_)
        | Error::UndefinedGrowth
        | Error::UndefinedSilhouette(_) => 4,
    }
}

/// Parse CLI arguments and run; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, out, seed } => {
            cmd_simulate(&config, &out, seed).map(|summary| println!("{summary}"))
        }
        Command::Analyze { config, overrides } => cmd_analyze(&config, &overrides).map(|summary| {
            println!("{summary}");
            if summary.metric_failures > 0 {
                std::process::exit(4);
            }
        }),
        Command::Nullmodel { config, overrides } => {
            cmd_nullmodel(&config, &overrides).map(|summary| println!("{summary}"))
        }
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[derive(Debug)]
pub struct SimulateSummary {
    pub out: PathBuf,
    pub n_users: usize,
    pub n_records: usize,
    pub seed: u64,
}

impl std::fmt::Display for SimulateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "wrote {} ({} users, {} records, seed {})",
            self.out.display(),
            self.n_users,
            self.n_records,
            self.seed
        )
    }
}

pub fn cmd_simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<SimulateSummary> {
    let (mut spec, effects) = config::load_sim_spec(config)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let cohort = generate_cohort(&spec, &effects)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    export_cohort(&cohort, out)?;
    Ok(SimulateSummary {
        out: out.to_path_buf(),
        n_users: cohort.n_users(),
        n_records: cohort.n_records(),
        seed: spec.seed,
    })
}

/// Collects artifacts in a fresh output directory and guarantees the
/// manifest lists exactly what was written.
struct Bundle {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Bundle {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::domain(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }
}

#[derive(Debug, Serialize)]
struct Manifest {
    config_sha256: String,
    seed: u64,
    artifacts: Vec<String>,
    metric_failures: Vec<ManifestFailure>,
}

#[derive(Debug, Clone, Serialize)]
struct ManifestFailure {
    scope: String,
    error: String,
}

fn config_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn file_token(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug)]
pub struct AnalyzeSummary {
    pub out_dir: PathBuf,
    pub artifacts: usize,
    pub metric_failures: usize,
}

impl std::fmt::Display for AnalyzeSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "wrote {} artifact(s) to {} ({} metric failure(s))",
            self.artifacts,
            self.out_dir.display(),
            self.metric_failures
        )
    }
}

struct LoadedRun {
    cfg: RunConfig,
    cohort: Cohort,
    events: Vec<EventSpec>,
    exclusions: BTreeSet<chrono::NaiveDate>,
    config_sha256: String,
}

fn load_run(config_path: &Path, overrides: &Overrides) -> Result<LoadedRun> {
    let mut cfg = config::load_run_config(config_path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.out_dir = out.clone();
    }
    if let Some(budget) = overrides.pair_budget {
        cfg.pair_budget = Some(budget);
    }
    if let Some(alpha) = overrides.alpha_days {
        cfg.alpha_days = alpha;
    }
    if let Some(window) = overrides.rhythm_window_days {
        cfg.rhythm.window_days = window;
    }
    if let Some(variant) = overrides.spike_variant {
        cfg.spike.variant = variant;
    }

    let (cohort, ingest) = parse_activity_csv(&cfg.input, &CsvSchema::default())?;
    if !ingest.rejected.is_empty() {
        log::warn!(
            "ingestion rejected {} row(s); first: line {} ({})",
            ingest.rejected.len(),
            ingest.rejected[0].line,
            ingest.rejected[0].reason
        );
    }
    let cohort = match cfg.coverage {
        Some((activity, fraction)) => filter_by_coverage(&cohort, activity, fraction)?,
        None => cohort,
    };
    let events = match &cfg.events_path {
        Some(path) => config::load_events(path)?,
        None => Vec::new(),
    };
    let exclusions = if cfg.null_exclude_events {
        config::event_exclusion_dates(&events)
    } else {
        BTreeSet::new()
    };
    let config_sha256 = config_hash(config_path)?;
    Ok(LoadedRun {
        cfg,
        cohort,
        events,
        exclusions,
        config_sha256,
    })
}

fn sync_config(cfg: &RunConfig) -> SyncConfig {
    SyncConfig {
        distance: cfg.spike,
        pair_budget: cfg.pair_budget,
        seed: cfg.seed,
    }
}

fn signature_config(run: &LoadedRun) -> SignatureConfig {
    SignatureConfig {
        sync: sync_config(&run.cfg),
        rhythm: run.cfg.rhythm.clone(),
        alpha_days: run.cfg.alpha_days,
        null_days: run.cfg.null_days,
        null_seed: run.cfg.seed,
        null_exclusions: run.exclusions.clone(),
        dbscan_eps: run.cfg.dbscan_eps,
        dbscan_min_pts: run.cfg.dbscan_min_pts,
    }
}

const REPORT_ACTIVITIES: [Activity; 3] =
    [Activity::Steps, Activity::SleepMinutes, Activity::HeartRate];

pub fn cmd_analyze(config_path: &Path, overrides: &Overrides) -> Result<AnalyzeSummary> {
    let run = load_run(config_path, overrides)?;
    let cfg = &run.cfg;
    let cohort = &run.cohort;
    let mut bundle = Bundle::create(&cfg.out_dir)?;
    let mut failures: Vec<ManifestFailure> = Vec::new();
    let fail = |scope: String, e: &Error, failures: &mut Vec<ManifestFailure>| {
        failures.push(ManifestFailure {
            scope,
            error: e.to_string(),
        });
    };

    // Volume series per activity.
    for activity in REPORT_ACTIVITIES {
        let series = population_volume(cohort, activity);
        bundle.write(&format!("volume_{activity}.csv"), &series.to_csv())?;
    }

    // Null shift distributions, shared across events per activity.
    let sync = sync_config(cfg);
    let mut null_dists = Vec::new();
    for activity in REPORT_ACTIVITIES {
        let dist = null_shift_distribution(
            cohort,
            activity,
            cfg.rhythm.window_days,
            cfg.null_days,
            cfg.seed,
            &cfg.rhythm,
            &run.exclusions,
        );
        if let Err(e) = &dist {
            fail(format!("null_shift_{activity}"), e, &mut failures);
        }
        null_dists.push((activity, dist));
    }

    // Per-event synchronicity and rhythm metrics.
    for event in &run.events {
        let token = file_token(&event.name);
        match event_sync_report(cohort, event, &sync) {
            Ok(report) => {
                if let Some(err) = &report.growth_error {
                    failures.push(ManifestFailure {
                        scope: format!("oos_growth[{}]", event.name),
                        error: err.clone(),
                    });
                }
                bundle.write_json(&format!("oos_{token}.json"), &report)?;
            }
            Err(e) => fail(format!("oos[{}]", event.name), &e, &mut failures),
        }
        for (activity, null_dist) in &null_dists {
            let Ok(null_dist) = null_dist else { continue };
            match event_shift_distribution(cohort, *activity, event, &cfg.rhythm)
                .and_then(|(event_dist, n_users)| {
                    let kl = rhythm_disruption(&event_dist, null_dist)?;
                    Ok((event_dist, kl, n_users))
                }) {
                Ok((event_dist, kl, n_users)) => {
                    let report = DisruptionReport {
                        event: event.name.clone(),
                        activity: activity.to_string(),
                        kl,
                        n_users,
                        window_days: cfg.rhythm.window_days,
                    };
                    bundle.write_json(&format!("rhythm_{token}_{activity}.json"), &report)?;
                    bundle.write(
                        &format!("shift_dist_{token}_{activity}.csv"),
                        &shift_distribution_csv(&event_dist, null_dist)?,
                    )?;
                }
                Err(e) => fail(
                    format!("rhythm_disruption[{} {activity}]", event.name),
                    &e,
                    &mut failures,
                ),
            }
        }
    }

    // Null OOS summary.
    match null_oos(cohort, cfg.alpha_days, cfg.null_days, cfg.seed, &sync, &run.exclusions) {
        Ok(summary) => bundle.write_json("null_oos.json", &summary.to_report("oos"))?,
        Err(e) => fail("null_oos".into(), &e, &mut failures),
    }

    // Signature table.
    let sig_cfg = signature_config(&run);
    match build_signature_table(cohort, &run.events, &sig_cfg) {
        Ok(table) => {
            for f in &table.failures {
                failures.push(ManifestFailure {
                    scope: format!("signature[{} {}]", f.event, f.metric),
                    error: f.error.clone(),
                });
            }
            bundle.write("signature_table.csv", &table.to_csv())?;
        }
        Err(e) => fail("signature_table".into(), &e, &mut failures),
    }

    // Day feature points with DBSCAN labels and silhouette.
    for activity in &cfg.day_points_activities {
        match day_feature_points(cohort, *activity, &sig_cfg).and_then(|features| {
            let labeled = dbscan(&features.points, cfg.dbscan_eps, cfg.dbscan_min_pts)?;
            Ok((features.skipped_days, labeled))
        }) {
            Ok((skipped, labeled)) => {
                bundle.write(
                    &format!("day_points_{activity}.csv"),
                    &crate::signatures::day_points_csv(&labeled),
                )?;
                let sil = silhouette(&labeled);
                let clusters: BTreeSet<usize> = labeled.iter().filter_map(|p| p.cluster).collect();
                #[derive(Serialize)]
                struct ClusteringReport {
                    activity: String,
                    n_points: usize,
                    skipped_days: usize,
                    n_clusters: usize,
                    n_noise: usize,
                    silhouette: Option<f64>,
                    eps: f64,
                    min_pts: usize,
                }
                let report = ClusteringReport {
                    activity: activity.to_string(),
                    n_points: labeled.len(),
                    skipped_days: skipped,
                    n_clusters: clusters.len(),
                    n_noise: labeled.iter().filter(|p| p.cluster.is_none()).count(),
                    silhouette: sil.ok(),
                    eps: cfg.dbscan_eps,
                    min_pts: cfg.dbscan_min_pts,
                };
                bundle.write_json(&format!("clustering_{activity}.json"), &report)?;
            }
            Err(e) => fail(format!("day_points[{activity}]"), &e, &mut failures),
        }
    }

    // Manifest last, listing itself.
    let mut artifacts = bundle.artifacts.clone();
    artifacts.push("manifest.json".to_string());
    artifacts.sort();
    let manifest = Manifest {
        config_sha256: run.config_sha256.clone(),
        seed: cfg.seed,
        artifacts,
        metric_failures: failures.clone(),
    };
    bundle.write_json("manifest.json", &manifest)?;

    Ok(AnalyzeSummary {
        out_dir: cfg.out_dir.clone(),
        artifacts: bundle.artifacts.len(),
        metric_failures: failures.len(),
    })
}

#[derive(Debug)]
pub struct NullmodelSummary {
    pub out_dir: PathBuf,
    pub oos_mean: f64,
    pub n_days: usize,
}

impl std::fmt::Display for NullmodelSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "null OOS mean {:.6e} over {} day(s); reports in {}",
            self.oos_mean,
            self.n_days,
            self.out_dir.display()
        )
    }
}

pub fn cmd_nullmodel(config_path: &Path, overrides: &Overrides) -> Result<NullmodelSummary> {
    let run = load_run(config_path, overrides)?;
    let cfg = &run.cfg;
    let mut bundle = Bundle::create(&cfg.out_dir)?;

    let sync = sync_config(cfg);
    let summary = null_oos(
        &run.cohort,
        cfg.alpha_days,
        cfg.null_days,
        cfg.seed,
        &sync,
        &run.exclusions,
    )?;
    bundle.write_json("null_oos.json", &summary.to_report("oos"))?;

    for activity in REPORT_ACTIVITIES {
        let dist = null_shift_distribution(
            &run.cohort,
            activity,
            cfg.rhythm.window_days,
            cfg.null_days,
            cfg.seed,
            &cfg.rhythm,
            &run.exclusions,
        )?;
        #[derive(Serialize)]
        struct NullShiftReport {
            metric: String,
            n_days: usize,
            seed: u64,
            mean: f64,
            bin_width_days: f64,
            n_bins: usize,
        }
        bundle.write_json(
            &format!("null_shift_{activity}.json"),
            &NullShiftReport {
                metric: format!("rhythm_shift_{activity}"),
                n_days: cfg.null_days,
                seed: cfg.seed,
                mean: dist.mean(),
                bin_width_days: dist.bin_width(),
                n_bins: dist.n_bins(),
            },
        )?;
    }

    Ok(NullmodelSummary {
        out_dir: cfg.out_dir.clone(),
        oos_mean: summary.mean,
        n_days: summary.n_days,
    })
}
