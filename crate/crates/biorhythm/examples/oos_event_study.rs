//! Out-of-sync event study: OOS and OOS growth for an injected
//! desynchronization, contrasted with the random-day null model.
//!
//! ```bash
//! cargo run --example oos_event_study
//! ```

use std::collections::BTreeSet;

use biorhythm::data_model::EventSpec;
use biorhythm::null_model::null_oos;
use biorhythm::simulator::{generate_cohort, CohortSpec, EventEffect};
use biorhythm::spike_sync::{event_sync_report, SyncConfig};
use chrono::Duration;

fn main() -> biorhythm::Result<()> {
    let spec = CohortSpec {
        n_users: 40,
        days: 120,
        seed: 17,
        ..CohortSpec::default()
    };
    let event_date = spec.start_date + Duration::days(60);
    // Bedtime jitter triples for two weeks after the event.
    let effect = EventEffect {
        onset_jitter_multiplier: 3.0,
        ..EventEffect::new(event_date, 14)
    };
    let cohort = generate_cohort(&spec, &[effect])?;

    let event = EventSpec::new("shock", event_date, 7)?;
    let cfg = SyncConfig {
        pair_budget: Some(400),
        seed: 1,
        ..SyncConfig::default()
    };
    let report = event_sync_report(&cohort, &event, &cfg)?;
    println!(
        "event `{}`: OOS = {:.3e} over {} users / {} pairs ({} variant)",
        report.event, report.oos, report.n_users, report.n_pairs, report.variant
    );
    if let Some(growth) = report.oos_growth {
        println!("heavily out-of-sync pair fraction grew by {:.1}%", growth * 100.0);
    }

    // Random-day baseline, keeping draws away from the event window.
    let exclusions: BTreeSet<_> = (-21..21).map(|d| event_date + Duration::days(d)).collect();
    let null = null_oos(&cohort, 7, 100, 5, &cfg, &exclusions)?;
    println!(
        "null OOS over {} random days: {:.3e} ± {:.3e} (95% CI)",
        null.n_days,
        null.mean,
        null.ci_halfwidth.unwrap_or(f64::NAN)
    );
    println!(
        "event is {} the null 95th percentile ({:.3e})",
        if report.oos > null.percentile(0.95) { "above" } else { "below" },
        null.percentile(0.95)
    );
    Ok(())
}
