use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn msmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msmp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate_small(dir: &Path) {
    let o = msmp(&[
        "generate",
        "--experiment",
        "e1",
        "--seed",
        "7",
        "--train",
        "2",
        "--valid",
        "1",
        "--test",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn train_small(data: &Path, out: &Path) -> Output {
    msmp(&[
        "train",
        "--experiment",
        "e1",
        "--model",
        "lem",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--n-hid",
        "32",
        "--n-layers",
        "1",
        "--epochs",
        "1",
        "--samples-per-trajectory",
        "1",
        "--batch-size",
        "2",
        "--threads",
        "1",
    ])
}

#[test]
fn help_lists_paper_defaults() {
    let o = msmp(&["train", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for needle in [
        "--epochs",
        "[default: 20]",
        "[default: 1e-4]",
        "[default: 16]",
        "[default: 0.4]",
        "[default: 2]",
        "[default: 128]",
        "[default: 25]",
    ] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}

#[test]
fn unknown_names_are_usage_errors() {
    let o = msmp(&["generate", "--experiment", "e4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown experiment"), "{}", stderr(&o));
    let o = msmp(&["grad-check", "--model", "transformer", "--tiny"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    let o = msmp(&["generate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));
    assert_eq!(stderr(&o).trim().lines().count(), 1);
}

#[test]
fn missing_data_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_small(&dir.path().join("nowhere"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: "));
}

#[test]
fn grad_check_tiny_passes() {
    let o = msmp(&["grad-check", "--model", "msmp-pde", "--tiny"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let err: f64 = text
        .split("max relative error ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .expect("error value printed");
    assert!(err < 1e-4);
}

#[test]
fn generate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_small(a.path());
    generate_small(b.path());
    for name in ["e1_train.msmp", "e1_valid.msmp", "e1_test.msmp"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn train_evaluate_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate_small(&data);

    let runs = dir.path().join("runs");
    let o = train_small(&data, &runs);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = runs.join("e1_lem_s0.msmc");
    let log = fs::read_to_string(runs.join("e1_lem_s0.log")).unwrap();
    assert_eq!(log.lines().count(), 2);

    // identical inputs give an identical checkpoint
    let runs2 = dir.path().join("runs2");
    assert!(train_small(&data, &runs2).status.success());
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(runs2.join("e1_lem_s0.msmc")).unwrap());

    let eval = dir.path().join("eval");
    let o = msmp(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("relative error"));
    let csv = fs::read_to_string(eval.join("e1_lem_s0_test").join("results.csv")).unwrap();
    assert!(csv.starts_with("experiment,model,fold,re\ne1,lem,0,"));

    let plots = dir.path().join("plots");
    let o = msmp(&[
        "plot",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<_> = fs::read_dir(&plots).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.iter().filter(|p| p.extension().unwrap() == "png").count(), 3);
    assert_eq!(files.iter().filter(|p| p.extension().unwrap() == "csv").count(), 1);

    let o = msmp(&[
        "plot",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--index",
        "5",
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_matrix_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate_small(&data);
    let out = dir.path().join("results");
    let o = msmp(&[
        "run-matrix",
        "--experiments",
        "e1",
        "--models",
        "mp-pde,gated",
        "--folds",
        "2",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--n-hid",
        "32",
        "--n-layers",
        "1",
        "--epochs",
        "1",
        "--samples-per-trajectory",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("model,e1\nmp-pde,"));
}
