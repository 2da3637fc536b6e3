//! The per-event signature table: volume, OOS, OOS growth and rhythm
//! disruptions for every configured event plus the Random baseline row.
//!
//! ```bash
//! cargo run --example event_signatures
//! ```

use biorhythm::data_model::EventSpec;
use biorhythm::signatures::{build_signature_table, SignatureConfig};
use biorhythm::simulator::{generate_cohort, CohortSpec, EventEffect};
use biorhythm::spike_sync::SyncConfig;
use chrono::Duration;

fn main() -> biorhythm::Result<()> {
    let spec = CohortSpec {
        n_users: 30,
        days: 240,
        seed: 23,
        ..CohortSpec::default()
    };
    let start = spec.start_date;
    let effects = vec![
        EventEffect {
            onset_jitter_multiplier: 3.0,
            ..EventEffect::new(start + Duration::days(60), 14)
        },
        EventEffect {
            sleep_delta_min: 75.0,
            ..EventEffect::new(start + Duration::days(130), 14)
        },
        EventEffect {
            hr_delta_bpm: 5.0,
            sleep_delta_min: -40.0,
            ..EventEffect::new(start + Duration::days(190), 14)
        },
    ];
    let cohort = generate_cohort(&spec, &effects)?;
    let events = vec![
        EventSpec::new("desync", start + Duration::days(60), 7)?,
        EventSpec::new("long_sleep", start + Duration::days(130), 7)?,
        EventSpec::new("racing_hearts", start + Duration::days(190), 7)?,
    ];

    let cfg = SignatureConfig {
        sync: SyncConfig {
            pair_budget: Some(300),
            seed: 1,
            ..SyncConfig::default()
        },
        null_days: 50,
        null_seed: 4,
        ..SignatureConfig::default()
    };
    let table = build_signature_table(&cohort, &events, &cfg)?;
    print!("{}", table.to_csv());
    if !table.failures.is_empty() {
        println!("-- {} metric failure(s):", table.failures.len());
        for f in &table.failures {
            println!("   {} / {}: {}", f.event, f.metric, f.error);
        }
    }
    let out = std::env::temp_dir().join("signature_table.csv");
    std::fs::write(&out, table.to_csv())?;
    println!("table written to {}", out.display());
    Ok(())
}
