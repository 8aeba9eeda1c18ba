use std::fs;
use std::process::Command;

fn sigstop() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sigstop"))
}

#[test]
fn h0_prints_the_exact_value() {
    let out = sigstop().args(["h0", "--steps", "2,100"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "steps,value_unscaled,value_scaled");
    let row: Vec<f64> = lines[2].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(row[0], 100.0);
    assert!((row[2] - 1.5830).abs() < 5e-4);
}

#[test]
fn bad_input_exits_with_config_code() {
    assert_eq!(sigstop().args(["h0", "--steps", "0"]).status().unwrap().code(), Some(2));
    assert_eq!(sigstop().args(["fbm-table", "--nope"]).status().unwrap().code(), Some(2));
    assert_eq!(sigstop().args(["fbm-table", "--z-dist", "cauchy"]).status().unwrap().code(), Some(2));
    assert_eq!(sigstop().args(["fbm-table", "--hurst", "1.5"]).status().unwrap().code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"steps": 10, "nonsense": 1}"#).unwrap();
    let st = sigstop().arg("fbm-table").arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn small_fbm_table_writes_csv_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fbm.csv");
    let ckpt = dir.path().join("ckpt");
    let st = sigstop()
        .args(["--threads", "1", "fbm-table", "--hurst", "0,0.5", "--level", "1", "--policy", "linear"])
        .args(["--steps", "10", "--train-exp", "8", "--eval-exp", "9", "--epochs", "2", "--batch-size", "64"])
        .arg("--out")
        .arg(&out)
        .arg("--checkpoint-dir")
        .arg(&ckpt)
        .status()
        .unwrap();
    assert!(st.success());
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert!(lines.next().unwrap().starts_with("hurst,level,policy"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    // H = 0 rows carry the exact value
    assert!(!rows[0].split(',').nth(11).unwrap().is_empty());
    let names: Vec<String> = fs::read_dir(&ckpt).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".policy.json")).count(), 2);
    assert_eq!(names.iter().filter(|n| n.ends_with(".trace.csv")).count(), 2);
}

#[test]
fn linearized_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lin.json");
    fs::write(&cfg, r#"{"model": {"kind": "bm"}, "steps": 10, "level": 4, "linearized": {"k": 1, "restarts": 3, "check_exp": 10}}"#).unwrap();
    let out = sigstop().arg("linearized").arg("--config").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# config: {"));
}
