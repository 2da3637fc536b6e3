//! SPIKE-distance basics: the instantaneous spike function, bivariate
//! distances in both variants, and the multivariate pair matrix.
//!
//! ```bash
//! cargo run --example spike_distance
//! ```

use biorhythm::data_model::SpikeTrain;
use biorhythm::spike_sync::{
    bivariate_spike_distance, multivariate_spike_distance, spike_function_at,
    SpikeDistanceConfig, SpikeVariant,
};

fn nightly(n_days: usize, phase: f64, drift: f64) -> biorhythm::Result<SpikeTrain> {
    let spikes = (0..n_days)
        .map(|d| d as f64 + phase + drift * (d as f64 / n_days as f64))
        .collect();
    SpikeTrain::new(spikes, n_days as f64 + 1.0)
}

fn main() -> biorhythm::Result<()> {
    let early_bird = nightly(28, 0.94, 0.0)?; // bed at ~22:34 every night
    let night_owl = nightly(28, 0.99, 0.03)?; // ~23:45, drifting later

    for variant in [SpikeVariant::StandardNormalized, SpikeVariant::PaperVerbatim] {
        let cfg = SpikeDistanceConfig {
            variant,
            ..SpikeDistanceConfig::default()
        };
        let s = spike_function_at(14.5, &early_bird, &night_owl, &cfg)?;
        let d = bivariate_spike_distance(&early_bird, &night_owl, (0.0, 28.0), &cfg)?;
        println!("{:<9} S(14.5) = {s:.5}   D_S = {d:.5}", variant.name());
    }

    // Identical trains are at distance zero.
    let cfg = SpikeDistanceConfig::default();
    let self_d = bivariate_spike_distance(&early_bird, &early_bird, (0.0, 28.0), &cfg)?;
    println!("identical trains: D_S = {self_d:.2e}");

    // Multivariate: average over all pairs of a small population.
    let trains: Vec<(String, SpikeTrain)> = (0..6)
        .map(|i| {
            let phase = 0.90 + 0.015 * i as f64;
            Ok((format!("u{i}"), nightly(28, phase, 0.0)?))
        })
        .collect::<biorhythm::Result<_>>()?;
    let (mean, matrix) = multivariate_spike_distance(&trains, (0.0, 28.0), &cfg, None, 0)?;
    println!("population mean D_S over {} pairs: {mean:.5}", matrix.n_pairs());
    let out = std::env::temp_dir().join("pair_distances.csv");
    std::fs::write(&out, matrix.to_csv())?;
    println!("pair matrix written to {}", out.display());
    Ok(())
}
