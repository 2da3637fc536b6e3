//! Spectral rhythm extraction: Welch PSD on the period axis and the
//! characteristic rhythm of a weekly step pattern.
//!
//! ```bash
//! cargo run --example rhythm_psd
//! ```

use biorhythm::data_model::{to_daily_series, Activity};
use biorhythm::rhythm::{characteristic_rhythm, welch_psd, RhythmConfig};
use biorhythm::simulator::{generate_cohort, CohortSpec};

fn main() -> biorhythm::Result<()> {
    let spec = CohortSpec {
        n_users: 1,
        days: 112,
        seed: 3,
        steps_sd: 400.0,
        ..CohortSpec::default()
    };
    let cohort = generate_cohort(&spec, &[])?;
    let user = cohort.users().next().unwrap().to_string();
    let series = to_daily_series(&cohort, &user, Activity::Steps)?;

    let psd = welch_psd(&series, 0..112, 14, 0.5)?;
    println!("period (days)   power");
    for (p, w) in psd.periods.iter().zip(&psd.power) {
        println!("{p:>12.3}   {w:.1}");
    }
    let out = std::env::temp_dir().join("steps_psd.csv");
    std::fs::write(&out, psd.to_csv())?;
    println!("PSD written to {}", out.display());

    let cfg = RhythmConfig::default();
    let rhythm = characteristic_rhythm(&series, 0..112, &cfg)?;
    println!("characteristic rhythm of weekday/weekend steps: {rhythm} days");
    Ok(())
}
