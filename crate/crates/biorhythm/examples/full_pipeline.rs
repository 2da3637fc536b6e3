//! The whole pipeline through the library API, exactly as the
//! `biorhythm` binary drives it: simulate → write spec/config files →
//! analyze → inspect the report bundle.
//!
//! ```bash
//! cargo run --example full_pipeline
//! ```

use biorhythm::cli::{cmd_analyze, cmd_simulate, Overrides};

fn main() -> biorhythm::Result<()> {
    let dir = std::env::temp_dir().join("biorhythm_full_pipeline");
    std::fs::create_dir_all(&dir)?;

    let sim_spec = dir.join("sim.conf");
    std::fs::write(
        &sim_spec,
        "[cohort]\n\
         n_users = 30\n\
         days = 150\n\
         seed = 42\n\
         \n\
         [effect]\n\
         event_date = 2016-06-14\n\
         duration_days = 14\n\
         onset_jitter_multiplier = 3\n",
    )?;
    let cohort_csv = dir.join("cohort.csv");
    let sim = cmd_simulate(&sim_spec, &cohort_csv, None)?;
    println!("{sim}");

    std::fs::write(
        dir.join("events.conf"),
        "[event]\nname = shock\ndate = 2016-06-14\nalpha_days = 7\n",
    )?;
    let run_conf = dir.join("run.conf");
    std::fs::write(
        &run_conf,
        "[run]\n\
         input = cohort.csv\n\
         events = events.conf\n\
         out_dir = report\n\
         seed = 5\n\
         pair_budget = 300\n\
         null_days = 40\n\
         null_exclude_events = 1\n",
    )?;
    let analysis = cmd_analyze(&run_conf, &Overrides::default())?;
    println!("{analysis}");

    let manifest = std::fs::read_to_string(dir.join("report/manifest.json"))?;
    println!("manifest:\n{manifest}");
    Ok(())
}
