use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn devia(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_devia"))
        .args(args)
        .current_dir(dir)
        .env("DEVIA_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn lemma_suite_passes_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = devia(&["lemma-suite", "--report", "lemma.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.lines().filter(|l| l.starts_with("PASS ")).count() > 10);
    assert!(!out.contains("FAIL"));
    assert!(dir.path().join("lemma.json").exists());
    assert!(dir.path().join("lemma.json.runtime.json").exists());
}

#[test]
fn failing_criterion_sets_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.toml"),
        "kind = \"exactness\"\nreplicas = 200\nm_grid = [2]\n[tolerances]\nexactness_tv = 1e-9\n",
    )
    .unwrap();
    let o = devia(&["run", "spec.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL largest total variation"));
}

#[test]
fn bad_specs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), "kind = \"lln\"\nbogus = 1\n").unwrap();
    let o = devia(&["run", "spec.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn run_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.toml"),
        format!(
            "kind = \"lln\"\nreplicas = 30\nm_grid = [50, 100]\nmodel_file = {:?}\n[output]\nreport = \"out/r.json\"\ncsv = \"out/r.csv\"\n",
            cfg("two_state.toml")
        ),
    )
    .unwrap();
    let o = devia(&["run", "spec.toml"], dir.path());
    assert!(o.status.code().unwrap() <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/r.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "lln");
    assert_eq!(report["per_m"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("out/r.csv").exists());
}

#[test]
fn jump_sim_plain_and_tilted() {
    let dir = tempfile::tempdir().unwrap();
    let o = devia(
        &[
            "jump-sim",
            "--model",
            &cfg("two_state.toml"),
            "--m",
            "50",
            "--T",
            "1",
            "--seed",
            "3",
            "--out",
            "p.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "time,state_1,state_2");
    assert!(csv.lines().nth(1).unwrap().starts_with("0.0,1.0,0.0"));

    let o = devia(
        &[
            "jump-sim",
            "--model",
            &cfg("two_state.toml"),
            "--m",
            "50",
            "--T",
            "1",
            "--control",
            &cfg("control.toml"),
            "--out",
            "t.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.csv.json")).unwrap()).unwrap();
    assert!(side["cost"].as_f64().unwrap() >= 0.0);
}

#[test]
fn jump_rate_of_the_zero_path_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..=10).map(|n| format!("{},0.0,0.0\n", n as f64 / 10.0)).collect();
    std::fs::write(dir.path().join("eta.csv"), format!("time,state_1,state_2\n{rows}")).unwrap();
    let o = devia(
        &[
            "jump-rate",
            "--model",
            &cfg("two_state.toml"),
            "--eta",
            "eta.csv",
            "--out",
            "r.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["feasible"], true);
    assert_eq!(r["value"].as_f64().unwrap(), 0.0);
}

#[test]
fn diff_sim_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = devia(
        &[
            "diff-sim",
            "--kernels",
            &cfg("kernels.toml"),
            "--m",
            "200",
            "--T",
            "0.5",
            "--dt",
            "0.01",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run_summary.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "time,mean,var,pair_1,pair_2");
    assert_eq!(csv.lines().count(), 52);
}

#[test]
fn diff_rate_of_the_zero_field_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let xs: Vec<String> = (0..100).map(|k| format!("{}", -5.0 + (k as f64 + 0.5) * 0.1)).collect();
    let mut text = format!("time,{}\n", xs.join(","));
    for n in 0..=200 {
        text.push_str(&format!("{}{}\n", n as f64 / 200.0, ",0.0".repeat(100)));
    }
    std::fs::write(dir.path().join("eta.csv"), text).unwrap();
    let o = devia(
        &[
            "diff-rate",
            "--kernels",
            &cfg("kernels.toml"),
            "--eta",
            "eta.csv",
            "--out",
            "r.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["feasible"], true);
    assert_eq!(r["value"].as_f64().unwrap(), 0.0);
}
