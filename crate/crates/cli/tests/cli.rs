use std::path::Path;
use std::process::{Command, Output};

fn graphdistill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphdistill"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_run_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let o = graphdistill(&[
        "synth",
        "--out",
        p(&data),
        "--params",
        r#"{"nodes_per_class": 40}"#,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(data.join("meta.json").is_file());

    let o = graphdistill(&[
        "run",
        "--dataset",
        p(&data),
        "--output",
        p(&out),
        "--seeds",
        "0",
        "--epochs",
        "50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("GCN + LLM"), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let acc = report["seeds"][0]["test_accuracy"].as_f64().unwrap();

    let ckpt = out.join("seed_0").join("model.gdck");
    let o = graphdistill(&[
        "eval",
        "--dataset",
        p(&data),
        "--checkpoint",
        p(&ckpt),
        "--seed",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let reloaded = eval["test_accuracy"].as_f64().unwrap();
    // the checkpoint stores f32 weights
    assert!((reloaded - acc).abs() <= 1.0 / 24.0, "{reloaded} vs {acc}");
}

#[test]
fn baseline_and_select_print_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(graphdistill(&[
        "synth",
        "--out",
        p(&data),
        "--params",
        r#"{"nodes_per_class": 30}"#
    ])
    .status
    .success());

    let o = graphdistill(&[
        "baseline",
        "--dataset",
        p(&data),
        "--seeds",
        "0,1",
        "--epochs",
        "30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("GCN"));

    let o = graphdistill(&[
        "select",
        "--dataset",
        p(&data),
        "--seed",
        "1",
        "--epochs",
        "30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let preview: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(preview["picks"].as_array().unwrap().len(), 3);
}

#[test]
fn gradcheck_exit_codes() {
    let ok = graphdistill(&["gradcheck", "--instances", "5"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    let report: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert_eq!(report["passed"], true);

    let bad = graphdistill(&["gradcheck", "--instances", "5", "--corrupt"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn invalid_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(graphdistill(&[
        "synth",
        "--out",
        p(&data),
        "--params",
        r#"{"nodes_per_class": 20}"#
    ])
    .status
    .success());

    let o = graphdistill(&[
        "run",
        "--dataset",
        p(&data),
        "--alpha",
        "0.8",
        "--beta",
        "0.5",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("invalid config"), "{}", stderr(&o));

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\"shots\": \"three\"}").unwrap();
    let o = graphdistill(&["run", "--config", p(&cfg), "--dataset", p(&data)]);
    assert!(!o.status.success());

    let o = graphdistill(&["run", "--dataset", p(&dir.path().join("missing"))]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("missing dataset file"),
        "{}",
        stderr(&o)
    );
}
