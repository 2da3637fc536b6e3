//! Day clustering: score every day in the standardized
//! volume-by-disruption plane, cluster with DBSCAN and report the
//! silhouette.
//!
//! ```bash
//! cargo run --example day_clustering
//! ```

use std::collections::BTreeSet;

use biorhythm::data_model::Activity;
use biorhythm::signatures::{day_feature_points, dbscan, silhouette, SignatureConfig};
use biorhythm::simulator::{generate_cohort, CohortSpec, EventEffect};
use biorhythm::spike_sync::SyncConfig;
use chrono::Duration;

fn main() -> biorhythm::Result<()> {
    let spec = CohortSpec {
        n_users: 40,
        days: 365,
        seed: 31,
        sleep_sd_min: 30.0,
        ..CohortSpec::default()
    };
    let start = spec.start_date;
    // Two very different kinds of sleep events.
    let effects = vec![
        EventEffect {
            sleep_delta_min: -150.0,
            ..EventEffect::new(start + Duration::days(100), 15)
        },
        EventEffect {
            period_override_days: Some(3.5),
            ..EventEffect::new(start + Duration::days(250), 28)
        },
    ];
    let cohort = generate_cohort(&spec, &effects)?;

    let cfg = SignatureConfig {
        sync: SyncConfig::default(),
        null_days: 60,
        null_seed: 9,
        ..SignatureConfig::default()
    };
    let features = day_feature_points(&cohort, Activity::SleepMinutes, &cfg)?;
    println!(
        "{} day points ({} days skipped at the edges)",
        features.points.len(),
        features.skipped_days
    );

    let labeled = dbscan(&features.points, cfg.dbscan_eps, cfg.dbscan_min_pts)?;
    let clusters: BTreeSet<usize> = labeled.iter().filter_map(|p| p.cluster).collect();
    let noise = labeled.iter().filter(|p| p.cluster.is_none()).count();
    println!("{} cluster(s), {} noise day(s)", clusters.len(), noise);
    match silhouette(&labeled) {
        Ok(s) => println!("silhouette: {s:.3}"),
        Err(e) => println!("silhouette undefined: {e}"),
    }

    let out = std::env::temp_dir().join("day_points.csv");
    std::fs::write(&out, biorhythm::signatures::day_points_csv(&labeled))?;
    println!("day points written to {}", out.display());
    Ok(())
}
