//! Population volume: daily averages with confidence bands and the
//! symmetric event-window summary.
//!
//! ```bash
//! cargo run --example volume_curves
//! ```

use biorhythm::data_model::{Activity, EventSpec};
use biorhythm::simulator::{generate_cohort, CohortSpec, EventEffect};
use biorhythm::volume::{event_volume_summary, population_volume};

fn main() -> biorhythm::Result<()> {
    let spec = CohortSpec {
        n_users: 80,
        days: 120,
        seed: 7,
        ..CohortSpec::default()
    };
    let event_date = spec.start_date + chrono::Duration::days(60);
    // A week of markedly less sleep.
    let effect = EventEffect {
        sleep_delta_min: -60.0,
        ..EventEffect::new(event_date, 7)
    };
    let cohort = generate_cohort(&spec, &[effect])?;

    let series = population_volume(&cohort, Activity::SleepMinutes);
    let out = std::env::temp_dir().join("volume_sleep_minutes.csv");
    std::fs::write(&out, series.to_csv())?;
    println!("plot-ready daily averages written to {}", out.display());

    let event = EventSpec::new("short_sleep", event_date, 7)?;
    let during = event_volume_summary(&cohort, Activity::SleepMinutes, &event)?;
    let baseline = EventSpec::new("baseline", spec.start_date + chrono::Duration::days(20), 7)?;
    let before = event_volume_summary(&cohort, Activity::SleepMinutes, &baseline)?;
    println!("sleep around the event: {:.1} min/night (baseline window {:.1})", during, before);
    println!("steps on a typical day: {:?}", population_volume(&cohort, Activity::Steps).mean[30]);
    Ok(())
}
