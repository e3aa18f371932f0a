use std::process::Command;

fn tpfc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tpfc"))
}

#[test]
fn check_passes_on_presets() {
    let out = tpfc().arg("check").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.matches("PASS").count(), 9, "{text}");
}

#[test]
fn plan_writes_the_nominal() {
    let dir = tempfile::tempdir().unwrap();
    let out = tpfc()
        .args(["plan", "trailer6_table2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("nominal.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 181);
    assert!(csv.starts_with("t,x0,x1,x2,x3,x4,x5,u0,u1"));
}

#[test]
fn gains_writes_a_bundle_per_controller() {
    let dir = tempfile::tempdir().unwrap();
    let out = tpfc()
        .args(["gains", "car4_table2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    for c in ["tpfc", "tlqr", "ilqg"] {
        for m in ["G", "P", "K", "S"] {
            assert!(dir.path().join(c).join(format!("{m}.csv")).is_file(), "{c}/{m}");
        }
    }
}

#[test]
fn rollout_reports_cost() {
    let out = tpfc()
        .args([
            "rollout",
            "car4_table2",
            "--controller",
            "tlqr",
            "--eps",
            "0.1",
            "--seed",
            "4",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("cost"));
}

#[test]
fn experiment_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    std::fs::write(
        &plan,
        r#"{"scenario": "car4_table2", "controllers": ["tpfc"], "eps_grid": [0.1]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = tpfc()
        .arg("experiment")
        .arg(&plan)
        .args(["--runs", "2", "--noise-mode", "actuator", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["plan"]["runs"], 2);
    assert_eq!(summary["noise_mode"], "actuator");
}

#[test]
fn errors_exit_nonzero() {
    let out = tpfc().args(["plan", "no_such_scenario"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = tpfc()
        .args(["rollout", "car4_table2", "--controller", "pid"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
