use std::path::Path;
use std::process::{Command, Output};

fn lqgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scenario_file(dir: &Path, edit: impl Fn(String) -> String) -> String {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/contact_robot.toml"
    ))
    .unwrap();
    let path = dir.join("scenario.toml");
    std::fs::write(&path, edit(text)).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn nash_prints_equilibrium_gains() {
    let v = json(&lqgame(&["nash", "--config", "contact_robot"]));
    let k1: Vec<f64> = serde_json::from_value(v["k1_star"][0].clone()).unwrap();
    let k2: Vec<f64> = serde_json::from_value(v["k2_star"][0].clone()).unwrap();
    assert!(
        (k1[0] - 13.81).abs() < 0.05 && (k1[1] - 12.05).abs() < 0.05,
        "{k1:?}"
    );
    assert!(
        (k2[0] - 2.69).abs() < 0.05 && (k2[1] - 1.37).abs() < 0.05,
        "{k2:?}"
    );
    assert!(v["residuals"][0].as_f64().unwrap() < 1e-8);
}

#[test]
fn run_exports_files_and_certify_reproduces_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_string_lossy();
    let v = json(&lqgame(&[
        "run",
        "--config",
        "contact_robot",
        "--out",
        &out_s,
        "--max-iters",
        "10",
    ]));
    assert_eq!(v["iterations"].as_u64(), Some(10));
    for f in [
        "summary.json",
        "gains.csv",
        "volume.csv",
        "trajectory.csv",
        "polytopes/iter_0.json",
        "polytopes/iter_10.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let gains = std::fs::read_to_string(out.join("gains.csv")).unwrap();
    assert_eq!(gains.lines().count(), 12);

    let record = out.join("summary.json");
    let cert = json(&lqgame(&["certify", "--record", &record.to_string_lossy()]));
    let eps = v["epsilon"].as_f64().unwrap();
    assert!((cert["epsilon"].as_f64().unwrap() - eps).abs() <= 1e-9 * eps.max(1.0));
}

#[test]
fn runs_are_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        json(&lqgame(&[
            "run",
            "--config",
            "contact_robot",
            "--out",
            &d.to_string_lossy(),
            "--seed",
            "3",
            "--max-iters",
            "8",
        ]));
    }
    let read = |d: &Path| std::fs::read(d.join("summary.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn compare_ls_writes_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let v = json(&lqgame(&[
        "compare-ls",
        "--config",
        "contact_robot",
        "--seed",
        "0",
        "--sweep",
        "3",
        "--out",
        &out,
    ]));
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["robust_all_stable"] == true));
    assert!(dir.path().join("comparison.json").is_file());
}

#[test]
fn bad_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_file(dir.path(), |t| {
        t.replace("dt_sample = 0.01", "dt_sample = -0.01")
    });
    let out = lqgame(&["nash", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    let out = lqgame(&["nash", "--config", "no_such_scenario"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn undersized_disturbance_bound_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_file(dir.path(), |t| {
        t.replace(
            "[disturbance]\n",
            "[disturbance]\nlumped_gamma = [1e-4, 1e-4]\n",
        )
    });
    let out = lqgame(&[
        "run",
        "--config",
        &path,
        "--out",
        &dir.path().join("o").to_string_lossy(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("falsified"));
}
