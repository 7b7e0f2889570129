use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clearing"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("clearing-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn fixture_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/two_bus.json")
}

#[test]
fn clear_writes_the_four_csv_files() {
    let dir = scratch("clear");
    let out = run(&["--format", "csv", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["dispatch.csv", "prices.csv", "settlement.csv", "profits.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let prices = std::fs::read_to_string(dir.join("prices.csv")).unwrap();
    assert!(prices.starts_with("entity,period,scenario,price_kind,value"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = scratch("env");
    let out = bin().args(["--format", "csv"]).env("CLEARING_OUT_DIR", &dir).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.join("dispatch.csv").exists());
}

#[test]
fn json_output_reports_the_objective() {
    let out = run(&["--instance", fixture_file().to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((doc["objective"].as_f64().unwrap() - 391.6).abs() < 1e-6);
}

#[test]
fn table_output_is_rounded() {
    let out = run(&["--backend", "tableau", "--pivot", "bland"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("expected cost 391.600"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("WT1") && l.contains("6.875")));
}

#[test]
fn verify_passes_on_the_fixture() {
    let out = run(&["--mode", "verify", "--fd-oracle", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["pass"], true);
}

#[test]
fn zero_tolerance_fails_verification() {
    let out = run(&["--mode", "verify", "--tol", "0"]);
    assert_eq!(code(&out), 5);
}

#[test]
fn fuzz_mode_verifies_a_seed_range() {
    let out = run(&["--mode", "verify", "--fuzz", "10", "--seed", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn invalid_instance_exits_with_2() {
    let dir = scratch("invalid");
    let mut inst: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture_file()).unwrap()).unwrap();
    inst["scenarios"][0]["probability"] = serde_json::json!(0.7);
    let path = dir.join("bad.json");
    std::fs::write(&path, inst.to_string()).unwrap();
    let out = run(&["--instance", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario probabilities exceed 1"));

    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(code(&run(&["--instance", path.to_str().unwrap()])), 2);
}

#[test]
fn infeasible_case_b_exits_with_3() {
    assert_eq!(code(&run(&["--res-reserve", "off"])), 3);
    assert_eq!(code(&run(&["--mode", "compare-ab"])), 3);
}

#[test]
fn iteration_cap_exits_with_4() {
    assert_eq!(code(&run(&["--max-iterations", "1"])), 4);
}

#[test]
fn sweep_needs_the_synthetic_system() {
    assert_eq!(code(&run(&["--mode", "sweep"])), 2);
}

#[test]
fn lp_dump_is_written() {
    let dir = scratch("dump");
    let out = run(&["--dump-lp", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.join("lp.txt")).unwrap();
    assert!(text.starts_with("# rows"));
}
