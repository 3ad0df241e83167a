//! End-to-end runs of the installed binary: output contracts, exit codes,
//! and determinism. Everything here sticks to small arrays and short grids
//! so the whole file stays in the seconds.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ris-sense"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ris-sense-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn solve_prints_the_same_design_for_the_same_seed() {
    let args = [
        "solve",
        "--algorithm",
        "passive",
        "--seed",
        "7",
        "--m",
        "3",
        "--n",
        "2",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(stdout(&first), stdout(&second));

    let sol: serde_json::Value = serde_json::from_str(&stdout(&first)).expect("valid json");
    assert!(sol["pd"].as_f64().is_some());
    assert!(sol["epsilon"].as_f64().unwrap() > 0.0);
    assert_eq!(sol["theta"].as_array().unwrap().len(), 2);

    let other = run(&[
        "solve",
        "--algorithm",
        "passive",
        "--seed",
        "8",
        "--m",
        "3",
        "--n",
        "2",
    ]);
    assert_ne!(stdout(&first), stdout(&other), "seed must matter");
}

#[test]
fn sweep_writes_csv_manifest_and_plot() {
    let dir = tmp_dir("sweep");
    let out = run(&[
        "sweep",
        "--axis",
        "p",
        "--from",
        "5dBm",
        "--to",
        "30dBm",
        "--points",
        "6",
        "--algorithm",
        "passive",
        "--realizations",
        "2",
        "--out",
        dir.to_str().unwrap(),
        "--emit-plots",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = read(&dir.join("sweep_p_passive.csv"));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "p,analytic_pf,analytic_pd,empirical_pf,empirical_pd,stderr_pf,stderr_pd,realizations,trials"
    );
    assert_eq!(lines.count(), 6);

    // dBm endpoints land as watts spaced evenly in dB: 5 dBm step 5 dB.
    let first_axis: f64 = csv.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((first_axis - 10f64.powf((5.0 - 30.0) / 10.0)).abs() < 1e-12);

    let manifest: serde_json::Value =
        serde_json::from_str(&read(&dir.join("sweep_p_passive_manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["axis"], "p");
    assert_eq!(manifest["config"]["scenario"]["algorithm"], "passive");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));

    let svg = read(&dir.join("sweep_p_passive.svg"));
    assert!(svg.contains("<svg") && svg.contains("polyline"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_file_round_trips_through_the_manifest() {
    let dir = tmp_dir("roundtrip");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("run.toml");
    std::fs::write(
        &cfg_path,
        "axis = \"n\"\ngrid = [2, 4]\nrealizations = 2\n\n[scenario]\nm = 3\nn = 2\nchannel_seed = 9\n\n[scenario.prm]\ntau = 1e-4\n",
    )
    .unwrap();
    let out = run(&[
        "sweep",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let manifest = read(&dir.join("sweep_n_passive_manifest.json"));
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    let echoed = parsed["config"].clone();
    assert_eq!(echoed["grid"], serde_json::json!([2.0, 4.0]));
    assert_eq!(echoed["scenario"]["channel_seed"], 9);
    assert_eq!(echoed["scenario"]["prm"]["tau"], 1e-4);

    // The echoed config reruns to byte-identical curves.
    let rerun_cfg = dir.join("echo.json");
    std::fs::write(&rerun_cfg, echoed.to_string()).unwrap();
    let rerun_dir = dir.join("rerun");
    let rerun = run(&[
        "sweep",
        "--config",
        rerun_cfg.to_str().unwrap(),
        "--out",
        rerun_dir.to_str().unwrap(),
    ]);
    assert!(rerun.status.success(), "{}", String::from_utf8_lossy(&rerun.stderr));
    assert_eq!(
        read(&dir.join("sweep_n_passive.csv")),
        read(&rerun_dir.join("sweep_n_passive.csv"))
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn size_reports_fewer_amplifying_elements_for_one_antenna() {
    let out = run(&["size", "--m", "1"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let n_active = report["n_active"].as_u64().unwrap();
    let n_passive = report["n_passive"].as_u64().unwrap();
    assert!(n_active >= 1);
    assert!(n_active < n_passive);
    assert_eq!(report["equal_count"]["winner"], "active_wins");
}

#[test]
fn size_splits_a_total_budget() {
    let out = run(&["size", "--m", "1", "--p-total", "5dBm"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let aff = &report["affordable"];
    assert!((aff["p_total_watts"].as_f64().unwrap() - 10f64.powf(-2.5)).abs() < 1e-12);
    assert!(aff["n_active"].as_u64().unwrap() <= aff["n_passive"].as_u64().unwrap());
}

#[test]
fn exit_codes_follow_the_contract() {
    let unknown = run(&["sweep", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));

    let dir = tmp_dir("badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "scenario = [broken\n").unwrap();
    assert_eq!(
        run(&["solve", "--config", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let typo = dir.join("typo.toml");
    std::fs::write(&typo, "[scenario]\nantennas = 4\n").unwrap();
    assert_eq!(
        run(&["solve", "--config", typo.to_str().unwrap()]).status.code(),
        Some(2)
    );

    assert_eq!(run(&["sweep", "--figure", "13"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--algorithm", "passive", "--m", "0"]).status.code(), Some(2));
    assert_eq!(
        run(&["sweep", "--axis", "tau", "--from", "1dBm", "--to", "2dBm", "--points", "2"])
            .status
            .code(),
        Some(2)
    );

    // A run that fails after configuration: unwritable output directory.
    let unwritable = run(&[
        "sweep",
        "--axis",
        "n",
        "--from",
        "2",
        "--to",
        "4",
        "--points",
        "2",
        "--algorithm",
        "no-ris",
        "--realizations",
        "1",
        "--out",
        "/proc/nonexistent/out",
    ]);
    assert_eq!(unwritable.status.code(), Some(3));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn figure_presets_write_their_curve_families() {
    let dir = tmp_dir("figure");
    let out = run(&[
        "sweep",
        "--figure",
        "5",
        "--realizations",
        "2",
        "--out",
        dir.to_str().unwrap(),
        "--emit-plots",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for stem in [
        "fig05_passive_distance_rayleigh",
        "fig05_passive_distance_rician_3db",
    ] {
        let csv = read(&dir.join(format!("{stem}.csv")));
        assert_eq!(csv.lines().count(), 5, "{stem}: header plus four distances");
        assert!(dir.join(format!("{stem}_manifest.json")).exists());
    }
    let svg = read(&dir.join("fig05_passive_distance.svg"));
    assert!(svg.matches("<polyline").count() >= 2);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn validate_reports_all_checks_green() {
    let out = run(&["validate"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}
