//! End-to-end behavior of the `biorhythm` binary: exit codes, config
//! validation, determinism and report structure.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_biorhythm"))
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn small_sim_spec() -> &'static str {
    "[cohort]\nn_users = 20\ndays = 90\nseed = 4\n\n\
     [effect]\nevent_date = 2016-05-15\nduration_days = 14\nonset_jitter_multiplier = 2\n"
}

#[test]
fn simulate_writes_identical_files_for_identical_seeds() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("sim.conf"), small_sim_spec());
    for out in ["a.csv", "b.csv"] {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(dir.path().join("sim.conf"))
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);

    // A different seed changes the bytes.
    let status = bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("sim.conf"))
        .arg("--out")
        .arg(dir.path().join("c.csv"))
        .args(["--seed", "5"])
        .status()
        .unwrap();
    assert!(status.success());
    let c = std::fs::read(dir.path().join("c.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn unknown_config_key_is_named_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("sim.conf"),
        "[cohort]\nn_users = 5\ndays = 30\nseeed = 1\n",
    );
    let output = bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("sim.conf"))
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unknown key `seeed`"), "{stderr}");
}

#[test]
fn missing_input_names_the_path_and_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("run.conf"),
        "[run]\ninput = does_not_exist.csv\n",
    );
    let output = bin()
        .args(["analyze", "--config"])
        .arg(dir.path().join("run.conf"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("does_not_exist.csv"), "{stderr}");
}

#[test]
fn zero_null_days_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("sim.conf"), small_sim_spec());
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("sim.conf"))
        .arg("--out")
        .arg(dir.path().join("cohort.csv"))
        .status()
        .unwrap()
        .success());
    write(
        &dir.path().join("run.conf"),
        "[run]\ninput = cohort.csv\nnull_days = 0\n",
    );
    let output = bin()
        .args(["nullmodel", "--config"])
        .arg(dir.path().join("run.conf"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("null_days"));
}

#[test]
fn nullmodel_defaults_to_100_days_and_echoes_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("sim.conf"), small_sim_spec());
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("sim.conf"))
        .arg("--out")
        .arg(dir.path().join("cohort.csv"))
        .status()
        .unwrap()
        .success());
    write(
        &dir.path().join("run.conf"),
        "[run]\ninput = cohort.csv\nout_dir = nulls\nseed = 77\npair_budget = 40\n",
    );
    let status = bin()
        .args(["nullmodel", "--config"])
        .arg(dir.path().join("run.conf"))
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("nulls/null_oos.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["metric"], "oos");
    assert_eq!(report["n_days"], 100);
    assert_eq!(report["seed"], 77);
    assert!(report["mean"].is_number());
    for activity in ["steps", "sleep_minutes", "heart_rate"] {
        assert!(dir.path().join(format!("nulls/null_shift_{activity}.json")).exists());
    }
}

#[test]
fn analyze_manifest_lists_exactly_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("sim.conf"), small_sim_spec());
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("sim.conf"))
        .arg("--out")
        .arg(dir.path().join("cohort.csv"))
        .status()
        .unwrap()
        .success());
    write(
        &dir.path().join("events.conf"),
        "[event]\nname = shock\ndate = 2016-05-15\n",
    );
    write(
        &dir.path().join("run.conf"),
        "[run]\ninput = cohort.csv\nevents = events.conf\nout_dir = report\n\
         null_days = 10\nseed = 2\n",
    );
    let status = bin()
        .args(["analyze", "--config"])
        .arg(dir.path().join("run.conf"))
        .status()
        .unwrap();
    assert!(status.success());

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("report/manifest.json")).unwrap(),
    )
    .unwrap();
    let mut listed: Vec<String> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path().join("report"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    listed.sort();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    assert!(listed.contains(&"oos_shock.json".to_string()));
    assert!(listed.contains(&"signature_table.csv".to_string()));

    // The OOS report carries the run parameters.
    let oos: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("report/oos_shock.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(oos["event"], "shock");
    assert_eq!(oos["variant"], "standard");
    assert_eq!(oos["seed"], 2);
    assert!(oos["n_pairs"].is_number());
}

#[test]
fn analyze_accepts_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("sim.conf"), small_sim_spec());
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("sim.conf"))
        .arg("--out")
        .arg(dir.path().join("cohort.csv"))
        .status()
        .unwrap()
        .success());
    write(
        &dir.path().join("events.conf"),
        "[event]\nname = shock\ndate = 2016-05-15\n",
    );
    write(
        &dir.path().join("run.conf"),
        "[run]\ninput = cohort.csv\nevents = events.conf\nout_dir = unused\n\
         null_days = 10\n",
    );
    let status = bin()
        .args(["analyze", "--config"])
        .arg(dir.path().join("run.conf"))
        .arg("--out")
        .arg(dir.path().join("elsewhere"))
        .args([
            "--seed",
            "9",
            "--pair-budget",
            "150",
            "--alpha-days",
            "5",
            "--rhythm-window-days",
            "28",
            "--spike-variant",
            "paper",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let oos: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("elsewhere/oos_shock.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(oos["variant"], "paper");
    assert_eq!(oos["seed"], 9);
}
