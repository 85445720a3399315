use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lapmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lapmc"))
        .args(args)
        .env_remove("LAPMC_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lapmc(args);
    assert!(
        out.status.success(),
        "lapmc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small planted dataset so the tests stay fast.
fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--n",
        "60",
        "--n-test",
        "40",
        "--d",
        "12",
        "--c",
        "6",
        "--rank",
        "2",
        "--low-dim",
        "5",
        "--distractors",
        "4",
        "--seed",
        "7",
    ]);
    data
}

const SMALL: &[&str] = &[
    "--k-v",
    "10",
    "--k-s",
    "5",
    "--lambdas",
    "0.1,1",
    "--gammas",
    "0.1,1",
    "--alphas",
    "0.1,1",
];

fn pipeline(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "pipeline",
        "--data",
        s(data),
        "--out",
        s(out),
        "--omega",
        "50",
        "--seed",
        "3",
    ];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(lapmc(&["--help"]).status.code(), Some(0));
    assert_eq!(lapmc(&["--version"]).status.code(), Some(0));
    assert_eq!(lapmc(&["train", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let out = lapmc(&["train", "--features", "x.bin", "--output", "m.bin"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--labels"));
    assert_eq!(lapmc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        lapmc(&["mask", "--labels", "l", "--output", "o", "--omega", "abc"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn mask_at_full_rate_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("masked.tri");
    ok(&[
        "mask",
        "--labels",
        s(&data.join("labels.tri")),
        "--omega",
        "100",
        "--output",
        s(&out),
    ]);
    assert_eq!(
        fs::read(data.join("labels.tri")).unwrap(),
        fs::read(&out).unwrap()
    );
}

#[test]
fn mask_rejects_rate_that_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = lapmc(&[
        "mask",
        "--labels",
        s(&data.join("labels.tri")),
        "--omega",
        "1",
        "--output",
        s(&dir.path().join("m.tri")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("observed rate too low"));
}

#[test]
fn malformed_input_reports_path_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("labels.txt");
    fs::write(&bad, "2 2\n1 0\n0 x\n").unwrap();
    let out = lapmc(&[
        "mask",
        "--labels",
        s(&bad),
        "--omega",
        "50",
        "--output",
        s(&dir.path().join("o.tri")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("labels.txt:3"), "{err}");
}

#[test]
fn pipeline_reports_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let run = dir.path().join("run");
    pipeline(&data, &run, &[]);
    let report = fs::read_to_string(run.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "method,omega,lambda,gamma_s,mAP,ap_file");
    let methods: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(methods, ["apg-graph", "nuclear", "ridge"]);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 6);
        assert_eq!(cols[1], "50");
        let map: f64 = cols[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&map));
        let ap = fs::read_to_string(run.join(cols[5])).unwrap();
        assert_eq!(ap.lines().count(), 1 + 6);
    }
    assert!(run.join("trace_apg-graph.csv").exists());
    assert!(!run.join("trace_ridge.csv").exists());
    let manifest = fs::read_to_string(run.join("pipeline.manifest")).unwrap();
    assert!(manifest.contains("k-v = 10  # command-line"));
    assert!(manifest.contains("bins = 16  # default"));
    assert!(manifest.contains("labels.tri"));
}

#[test]
fn pipeline_equals_composed_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let piped = dir.path().join("piped");
    pipeline(&data, &piped, &[]);

    let by_hand = dir.path().join("by_hand");
    let h = |name: &str| by_hand.join(name);
    let d = |name: &str| data.join(name);
    fs::create_dir_all(&by_hand).unwrap();
    ok(&[
        "mask",
        "--labels",
        s(&d("labels.tri")),
        "--omega",
        "50",
        "--seed",
        "3",
        "--output",
        s(&h("labels_masked.tri")),
    ]);
    ok(&[
        "prepare",
        "--features",
        s(&d("features.bin")),
        "--low-dim-features",
        s(&d("low_dim.bin")),
        "--scores",
        s(&d("scores.bin")),
        "--labels",
        s(&h("labels_masked.tri")),
        "--test-features",
        s(&d("test_features.bin")),
        "--k-v",
        "10",
        "--k-s",
        "5",
        "--out",
        s(&by_hand),
    ]);
    let (train_x, masked, graph) = (
        h("train_whitened.bin"),
        h("labels_masked.tri"),
        h("graph.tri"),
    );
    let mut models = Vec::new();
    for method in ["apg-graph", "nuclear", "ridge"] {
        let params = h(&format!("params_{method}.txt"));
        let model = h(&format!("model_{method}.bin"));
        let common = [
            "--features",
            s(&train_x),
            "--labels",
            s(&masked),
            "--graph",
            s(&graph),
            "--method",
            method,
            "--seed",
            "3",
        ];
        let mut cv = vec!["cv"];
        cv.extend_from_slice(&common);
        cv.extend_from_slice(&[
            "--lambdas",
            "0.1,1",
            "--gammas",
            "0.1,1",
            "--alphas",
            "0.1,1",
            "--output",
            s(&params),
        ]);
        ok(&cv);
        let mut train = vec!["train"];
        train.extend_from_slice(&common);
        train.extend_from_slice(&["--params", s(&params), "--output", s(&model)]);
        ok(&train);
        models.push(model.to_str().unwrap().to_string());
    }
    let models = models.join(",");
    ok(&[
        "evaluate",
        "--models",
        &models,
        "--test-features",
        s(&h("test_whitened.bin")),
        "--test-labels",
        s(&d("test_labels.bin")),
        "--omega",
        "50",
        "--report",
        s(&h("report.csv")),
    ]);

    for name in [
        "report.csv",
        "labels_masked.tri",
        "graph.tri",
        "train_whitened.bin",
        "model_apg-graph.bin",
        "model_apg-graph.bin.meta",
        "model_ridge.bin",
        "report.model_nuclear.ap.csv",
    ] {
        assert_eq!(
            fs::read(piped.join(name)).unwrap(),
            fs::read(by_hand.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let run = dir.path().join("run");
    pipeline(&data, &run, &[]);
    let first: Vec<Vec<u8>> = ["report.csv", "pipeline.manifest", "model_apg-graph.bin"]
        .iter()
        .map(|n| fs::read(run.join(n)).unwrap())
        .collect();
    pipeline(&data, &run, &[]);
    let second: Vec<Vec<u8>> = ["report.csv", "pipeline.manifest", "model_apg-graph.bin"]
        .iter()
        .map(|n| fs::read(run.join(n)).unwrap())
        .collect();
    assert_eq!(first, second);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let one = dir.path().join("one");
    pipeline(&data, &one, &[]);
    let four = dir.path().join("four");
    let mut args = vec![
        "pipeline",
        "--data",
        s(&data),
        "--out",
        s(&four),
        "--omega",
        "50",
        "--seed",
        "3",
    ];
    args.extend_from_slice(SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_lapmc"))
        .args(&args)
        .env("LAPMC_THREADS", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        fs::read(one.join("report.csv")).unwrap(),
        fs::read(four.join("report.csv")).unwrap()
    );
    let bad = Command::new(env!("CARGO_BIN_EXE_lapmc"))
        .args(["--version"])
        .env("LAPMC_THREADS", "zero")
        .output()
        .unwrap();
    // --version is handled before the pool is configured
    assert_eq!(bad.status.code(), Some(0));
    let bad = Command::new(env!("CARGO_BIN_EXE_lapmc"))
        .args(["synth", "--out", s(&dir.path().join("x"))])
        .env("LAPMC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# mask settings\nomega = 100\nseed = 5\n").unwrap();
    let out = dir.path().join("m.tri");
    ok(&[
        "mask",
        "--config",
        s(&cfg),
        "--labels",
        s(&data.join("labels.tri")),
        "--omega",
        "50",
        "--output",
        s(&out),
    ]);
    let manifest = fs::read_to_string(dir.path().join("m.tri.manifest")).unwrap();
    assert!(
        manifest.contains("omega = 50  # command-line"),
        "{manifest}"
    );
    assert!(manifest.contains("seed = 5  # config"), "{manifest}");
    assert!(
        manifest.contains("mask-mode = per-column-entries  # default"),
        "{manifest}"
    );
    // 50% of 60 rows in each of 6 columns
    assert_eq!(
        fs::read_to_string(&out).unwrap().lines().count(),
        1 + 30 * 6
    );

    fs::write(&cfg, "k-s = 3\n").unwrap();
    let bad = lapmc(&[
        "mask",
        "--config",
        s(&cfg),
        "--labels",
        "l",
        "--output",
        "o",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown key"));
}

#[test]
fn params_conflicting_with_flags_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p.txt");
    fs::write(&params, "method = nuclear\nlambda = 1\n").unwrap();
    let out = lapmc(&[
        "train",
        "--features",
        "f.bin",
        "--labels",
        "l.tri",
        "--method",
        "nuclear",
        "--params",
        s(&params),
        "--lambda",
        "2",
        "--output",
        s(&dir.path().join("m.bin")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("conflicting config"));
}

#[test]
fn graph_method_without_graph_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = lapmc(&[
        "train",
        "--features",
        s(&data.join("features.bin")),
        "--labels",
        s(&data.join("labels.tri")),
        "--output",
        s(&dir.path().join("m.bin")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--graph"));
}

#[test]
fn numeric_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    // a curvature estimate that can never grow enough to pass the line search
    let out = lapmc(&[
        "train",
        "--features",
        s(&data.join("features.bin")),
        "--labels",
        s(&data.join("labels.tri")),
        "--method",
        "nuclear",
        "--lambda",
        "0.1",
        "--lipschitz-init",
        "1e-9",
        "--rho",
        "1.0000001",
        "--output",
        s(&dir.path().join("m.bin")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn train_writes_model_meta_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let model = dir.path().join("m.bin");
    let trace = dir.path().join("t.csv");
    ok(&[
        "train",
        "--features",
        s(&data.join("features.bin")),
        "--labels",
        s(&data.join("labels.tri")),
        "--method",
        "nuclear",
        "--lambda",
        "0.5",
        "--output",
        s(&model),
        "--trace",
        s(&trace),
    ]);
    let bytes = fs::read(&model).unwrap();
    assert_eq!(bytes.len(), 16 + 12 * 6 * 8);
    let meta = fs::read_to_string(dir.path().join("m.bin.meta")).unwrap();
    assert!(
        meta.starts_with("method = nuclear\nlambda = 0.5\ngamma-s = 0\n"),
        "{meta}"
    );
    assert!(meta.contains("converged = true"));
    let trace = fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("k,F,f,nuclear,curvature,trials\n"));
    let objectives: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(objectives.windows(2).all(|w| w[1] <= w[0] + 1e-10));
}
