use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use qstar::agents::TrainingCurve;
use serde_json::Value;

fn qstar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qstar"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn generate_writes_requested_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qstar(&[
        "generate",
        "--out",
        out,
        "--seed",
        "4",
        "--subsets",
        "2",
        "--tasks",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("dataset.csv"));
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r[0] == "1").count(), 3);

    let o = qstar(&["generate", "--out", out, "--seed", "4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(csv_rows(&dir.path().join("dataset.csv")).len(), 1900 * 25);
}

#[test]
fn missing_output_directory_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    let o = qstar(&["generate", "--out", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!missing.exists());
}

#[test]
fn config_file_and_flag_priority() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("runs")).unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"seed": 3, "output_dir": "runs", "generation": {"n_subsets": 4, "tasks_per_subset": 2}}"#,
    )
    .unwrap();
    let o = qstar(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--tasks",
        "5",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&dir.path().join("runs/dataset.csv")).len(), 20);

    fs::write(&cfg, r#"{"sede": 3}"#).unwrap();
    assert_eq!(
        code(&qstar(&["generate", "--config", cfg.to_str().unwrap()])),
        2
    );
}

#[test]
fn extract_reports_layers_and_skips_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    fs::create_dir(&src).unwrap();
    let out = dir.path().to_str().unwrap();

    let o = qstar(&["extract", "--out", out, src.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("features.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);

    fs::write(
        src.join("ghz.qasm"),
        "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\nh q[0];\ncx q[0],q[1];\ncx q[1],q[2];\n",
    )
    .unwrap();
    let o = qstar(&["extract", "--out", out, src.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&dir.path().join("features.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][1..4], ["ghz", "3", "3"]);

    fs::write(
        src.join("broken.qasm"),
        "OPENQASM 2.0;\nqreg q[2];\ncx q[0],q[7];\n",
    )
    .unwrap();
    let o = qstar(&["extract", "--out", out, src.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(csv_rows(&dir.path().join("features.csv")).len(), 1);
}

#[test]
fn simulate_greedy_trace_is_consistent_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        code(&qstar(&["simulate", "--out", out])),
        2,
        "seed is required"
    );

    let run = || {
        let o = qstar(&[
            "simulate", "--out", out, "--seed", "11", "--round", "5", "--policy", "greedy",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(dir.path().join("trace.csv")).unwrap()
    };
    let first = run();
    let rows = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r[8] == "true"));
    let total: f64 = rows.iter().map(|r| r[7].parse::<f64>().unwrap()).sum();
    for r in &rows {
        let (start, wait, exec, done): (f64, f64, f64, f64) = (
            r[4].parse().unwrap(),
            r[5].parse().unwrap(),
            r[6].parse().unwrap(),
            r[7].parse().unwrap(),
        );
        let dispatch: f64 = r[3].parse().unwrap();
        assert!((start - dispatch - wait).abs() < 1e-6);
        assert!((wait + exec - done).abs() < 1e-6);
    }
    let stats = read_json(&dir.path().join("stats.json"));
    assert_eq!(stats["violations"], 0);
    let recorded = stats["total_completion_s"].as_f64().unwrap();
    assert!((total - recorded).abs() <= 1e-9, "{total} vs {recorded}");

    assert_eq!(run(), first);
    assert_eq!(
        code(&qstar(&[
            "simulate", "--out", out, "--seed", "1", "--round", "99999"
        ])),
        2
    );
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qstar(&["train", "--out", out, "--seed", "2", "--iterations", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curve_text = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(
        TrainingCurve::read_csv(&curve_text).unwrap().rows.len(),
        100
    );
    let curve = csv_rows(&dir.path().join("curve.csv"));
    assert_eq!(curve.len(), 100);
    let len = |r: &Vec<String>| r[3].parse::<f64>().unwrap();
    let head: f64 = curve[..10].iter().map(len).sum::<f64>() / 10.0;
    let tail: f64 = curve[90..].iter().map(len).sum::<f64>() / 10.0;
    assert!(tail <= head, "{head} -> {tail}");
    assert!(tail < 26.0, "{tail}");
    assert_eq!(read_json(&dir.path().join("train.json"))["iterations"], 100);

    let policy = dir.path().join("policy.json");
    let o = qstar(&[
        "evaluate",
        "--out",
        out,
        "--seed",
        "2",
        "--episodes",
        "20",
        "--policy",
        "random",
        "--policy",
        policy.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval = read_json(&dir.path().join("evaluation.json"));
    let ps = eval["policies"].as_array().unwrap();
    assert_eq!(ps.len(), 2);
    let reward = |i: usize| ps[i]["summary"]["reward_sum"]["mean"].as_f64().unwrap();
    assert!(reward(1) > reward(0), "{} vs {}", reward(1), reward(0));

    let mut stored: Value = read_json(&policy);
    stored["version"] = 99.into();
    let bad = dir.path().join("future.json");
    fs::write(&bad, stored.to_string()).unwrap();
    let o = qstar(&["evaluate", "--out", out, "--policy", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_dqn_writes_binary_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qstar(&[
        "train",
        "--out",
        out,
        "--seed",
        "1",
        "--trainer",
        "dqn",
        "--iterations",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read(dir.path().join("policy.bin"))
        .unwrap()
        .starts_with(b"QSTARDQN"));
    assert_eq!(csv_rows(&dir.path().join("curve.csv")).len(), 2);
    let policy = dir.path().join("policy.bin");
    let o = qstar(&[
        "simulate",
        "--out",
        out,
        "--seed",
        "1",
        "--round",
        "0",
        "--policy",
        policy.to_str().unwrap(),
    ]);
    let stats = read_json(&dir.path().join("stats.json"));
    let expected = if stats["truncated_rounds"] == 0 { 0 } else { 1 };
    assert_eq!(code(&o), expected, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stats["policy"], "dqn");
}

#[test]
fn serve_env_stdio_session() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_qstar"))
        .args(["serve-env", "--stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(
            b"{\"cmd\":\"handshake\"}\n{\"cmd\":\"reset\",\"seed\":3}\n{\"cmd\":\"step\",\"action\":9}\n{\"cmd\":\"step\",\"action\":0}\n{\"cmd\":\"close\"}\n",
        )
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let replies: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(replies.len(), 5);
    assert_eq!(
        (
            replies[0]["obs_dim"].as_u64(),
            replies[0]["n_actions"].as_u64()
        ),
        (Some(13), Some(5))
    );
    assert_eq!(replies[1]["obs"].as_array().unwrap().len(), 13);
    assert_eq!(replies[2]["error"], "InvalidAction");
    assert!(replies[3]["reward"].is_number());
    assert_eq!(replies[4]["ok"], true);
}

#[test]
fn serve_env_requires_one_transport() {
    assert_eq!(code(&qstar(&["serve-env"])), 2);
    assert_eq!(
        code(&qstar(&["serve-env", "--stdio", "--listen", "127.0.0.1:0"])),
        2
    );
}
