//! Rhythm disruption: per-user rhythm shifts around a period-switch
//! event, binned into a distribution and scored with KL divergence
//! against the random-day null.
//!
//! ```bash
//! cargo run --example rhythm_disruption_study
//! ```

use std::collections::BTreeSet;

use biorhythm::data_model::{Activity, EventSpec};
use biorhythm::null_model::null_shift_distribution;
use biorhythm::rhythm::{rhythm_disruption, shift_distribution_csv, RhythmConfig};
use biorhythm::signatures::event_shift_distribution;
use biorhythm::simulator::{generate_cohort, CohortSpec, EventEffect};
use chrono::Duration;

fn main() -> biorhythm::Result<()> {
    let spec = CohortSpec {
        n_users: 40,
        days: 180,
        seed: 11,
        steps_sd: 300.0,
        ..CohortSpec::default()
    };
    let event_date = spec.start_date + Duration::days(90);
    // The weekly step cycle collapses to a 3.5-day cycle for four weeks.
    let effect = EventEffect {
        period_override_days: Some(3.5),
        ..EventEffect::new(event_date, 28)
    };
    let cohort = generate_cohort(&spec, &[effect])?;
    let cfg = RhythmConfig::default();

    let exclusions: BTreeSet<_> = (-28..56).map(|d| event_date + Duration::days(d)).collect();
    let null = null_shift_distribution(
        &cohort,
        Activity::Steps,
        cfg.window_days,
        100,
        2,
        &cfg,
        &exclusions,
    )?;

    let event = EventSpec::new("period_switch", event_date, 7)?;
    let (event_dist, n_users) = event_shift_distribution(&cohort, Activity::Steps, &event, &cfg)?;
    let kl = rhythm_disruption(&event_dist, &null)?;
    println!(
        "rhythm disruption (steps) for `{}`: KL = {kl:.3} over {n_users} users",
        event.name
    );
    println!("mean shift at the event: {:+.2} days (null {:+.3})", event_dist.mean(), null.mean());

    let out = std::env::temp_dir().join("shift_distribution.csv");
    std::fs::write(&out, shift_distribution_csv(&event_dist, &null)?)?;
    println!("event/null distribution written to {}", out.display());
    Ok(())
}
