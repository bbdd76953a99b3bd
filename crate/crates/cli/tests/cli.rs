use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpo")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, algo: &str, extra: &str) -> String {
    let text = format!(
        r#"{{"env": {{"kind": "random_mdp", "num_states": 2, "num_actions": 2, "seed": 1, "gamma": 0.95, "h_max": 20}},
            "algo": {algo}, "seeds": [0, 1], "output": {{"dir": {:?}, "log_every": 5}}{extra}}}"#,
        dir.join("out")
    );
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const MPO: &str = r#"{"algorithm": "mpo", "step_size": {"constant": 0.1}, "episodes": 20}"#;

#[test]
fn run_writes_csvs_and_honours_offset_and_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", MPO, r#", "oracle_logging": true"#);
    let out = mpo(&["run", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/seed_1.csv").exists());
    assert!(dir.path().join("out/aggregate.csv").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean final exact J"));

    let alt = dir.path().join("alt");
    let out = mpo(&["run", &cfg, "--seed-offset", "10", "--out", alt.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(alt.join("seed_11.csv").exists());
    assert!(!alt.join("seed_1.csv").exists());

    let again = dir.path().join("again");
    assert_eq!(code(&mpo(&["run", &cfg, "--out", again.to_str().unwrap()])), 0);
    for f in ["seed_0.csv", "seed_1.csv", "aggregate.csv", "summary.csv"] {
        assert_eq!(fs::read(dir.path().join("out").join(f)).unwrap(), fs::read(again.join(f)).unwrap());
    }
}

#[test]
fn grid_runs_every_step_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", MPO, "");
    let out = mpo(&["run", &cfg, "--grid"]);
    assert_eq!(code(&out), 0);
    let grid = fs::read_to_string(dir.path().join("out/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 6);
    assert!(String::from_utf8_lossy(&out.stdout).contains("<- best"));
}

#[test]
fn sweep_p_uses_the_given_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", MPO, "");
    let out = mpo(&["sweep-p", &cfg, "--p-grid", "1.5,2,3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/sweep_p.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("out/p_1.5/seed_0.csv").exists());
    assert_eq!(code(&mpo(&["sweep-p", &cfg, "--p-grid", "0.5"])), 1);
}

#[test]
fn compare_aligns_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    let algos = format!(
        r#"[{MPO}, {{"algorithm": "vpg", "step_size": {{"constant": 0.1}}, "episodes": 20}},
            {{"algorithm": "vrmpo", "step_size": {{"constant": 0.1}}, "vrmpo": {{"n1": 4, "n2": 2, "m": 3, "epochs": 2}}}}]"#
    );
    let cfg = write_config(dir.path(), "c.json", &algos, r#", "oracle_logging": true"#);
    let out = mpo(&["compare", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/compare.csv")).unwrap();
    assert!(csv.starts_with("trajectories,mpo_mean,mpo_std,vpg_mean,vpg_std,vrmpo_mean,vrmpo_std\n"));
    // several algorithms are a compare-only config
    assert_eq!(code(&mpo(&["run", &cfg])), 1);
}

#[test]
fn oracle_prints_or_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", MPO, "");
    let out = mpo(&["oracle", &cfg]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["exact_return"].is_f64());
    let file = dir.path().join("report.json");
    assert_eq!(code(&mpo(&["oracle", &cfg, "--out", file.to_str().unwrap()])), 0);
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap();
    assert_eq!(written, report);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // 1: bad arguments, unknown keys, invalid values
    assert_eq!(code(&mpo(&["frobnicate"])), 1);
    assert_eq!(code(&mpo(&["run"])), 1);
    assert_eq!(code(&mpo(&["--help"])), 0);
    let unknown = write_config(dir.path(), "u.json", MPO, r#", "colour": "blue""#);
    assert_eq!(code(&mpo(&["run", &unknown])), 1);
    let invalid = write_config(dir.path(), "i.json", r#"{"algorithm": "mpo", "step_size": {"constant": -1}, "episodes": 5}"#, "");
    let out = mpo(&["run", &invalid]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("step_size"));

    // 2: the oracle cannot evaluate a policy that never terminates
    let diverge = dir.path().join("d.json");
    fs::write(
        &diverge,
        r#"{"env": {"kind": "short_corridor"},
            "algo": {"algorithm": "mpo", "step_size": {"constant": 0.1}, "episodes": 5, "theta0": [800.0, 0.0]},
            "seeds": [0], "output": {"dir": "unused"}}"#,
    )
    .unwrap();
    assert_eq!(code(&mpo(&["oracle", diverge.to_str().unwrap()])), 2);

    // 3: missing input, unwritable output
    assert_eq!(code(&mpo(&["run", dir.path().join("missing.json").to_str().unwrap()])), 3);
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let cfg = write_config(dir.path(), "c.json", MPO, "");
    let inside = blocker.join("out");
    assert_eq!(code(&mpo(&["run", &cfg, "--out", inside.to_str().unwrap()])), 3);
}

#[test]
fn enumeration_capacity_is_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.json");
    fs::write(
        &path,
        r#"{"env": {"kind": "random_mdp", "num_states": 3, "num_actions": 3, "seed": 0, "gamma": 0.99, "h_max": 60},
            "algo": {"algorithm": "mpo", "step_size": {"constant": 0.1}, "episodes": 5}, "seeds": [0], "output": {"dir": "unused"}}"#,
    )
    .unwrap();
    let out = mpo(&["oracle", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("capacity"));
}
