use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_assoctrack"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Pipeline {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Pipeline {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&["synth", "--frames", "150", "--seed", "3", "--out-dir", s(&root.join("train"))]);
        ok(&["synth", "--frames", "150", "--seed", "4", "--out-dir", s(&root.join("test"))]);
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn build_dataset(&self, out: &str, count: &str) -> String {
        ok(&[
            "build-dataset",
            "--gt", s(&self.p("train/gt.txt")),
            "--gt-descriptors", s(&self.p("train/gt_desc.bin")),
            "--frame-size", "1920,1080",
            "--count", count,
            "--seed", "1",
            "--output", s(&self.p(out)),
        ])
    }

    fn train(&self, dataset: &str, model: &str) -> String {
        ok(&[
            "train",
            "--dataset", s(&self.p(dataset)),
            "--model", s(&self.p(model)),
            "--loss-trace", s(&self.p(&format!("{model}.loss.csv"))),
            "--epochs", "10",
            "--seed", "2",
        ])
    }

    fn track(&self, model: &str, out: &str) -> Output {
        run(&[
            "track",
            "--detections", s(&self.p("test/det.txt")),
            "--descriptors", s(&self.p("test/det_desc.bin")),
            "--model", s(&self.p(model)),
            "--frame-size", "1920x1080",
            "--output", s(&self.p(out)),
        ])
    }
}

#[test]
fn full_pipeline_is_deterministic() {
    let p = Pipeline::new();
    p.build_dataset("data.csv", "4000");
    let train_out = p.train("data.csv", "model.bin");
    assert!(train_out.contains("validation MSE"));
    p.train("data.csv", "model2.bin");
    assert_eq!(std::fs::read(p.p("model.bin")).unwrap(), std::fs::read(p.p("model2.bin")).unwrap());

    let trace = std::fs::read_to_string(p.p("model.bin.loss.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11);
    assert!(trace.starts_with("epoch,mean_loss\n1,"));

    assert!(p.track("model.bin", "res1.txt").status.success());
    assert!(p.track("model.bin", "res2.txt").status.success());
    let r1 = std::fs::read(p.p("res1.txt")).unwrap();
    assert!(!r1.is_empty());
    assert_eq!(r1, std::fs::read(p.p("res2.txt")).unwrap());

    let table = ok(&[
        "evaluate",
        "--gt", s(&p.p("test/gt.txt")),
        "--results", s(&p.p("res1.txt")),
        "--output", s(&p.p("report.csv")),
    ]);
    assert!(table.contains("MOTA"));
    let csv = std::fs::read_to_string(p.p("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sequence,mota,motp,mt,ml,idsw,fm,fp,fn,gt,hz");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("OVERALL,"));
    let mota: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(mota > 0.7, "MOTA {mota}");
}

#[test]
fn build_dataset_is_balanced() {
    let p = Pipeline::new();
    let msg = p.build_dataset("data.csv", "1000");
    assert!(msg.contains("500 positive, 500 negative, 40 features"), "{msg}");
    let csv = std::fs::read_to_string(p.p("data.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split(',').count(), 41);
    assert!(header.ends_with(",label"));
    let labels: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(labels.len(), 1000);
    assert_eq!(labels.iter().filter(|&&l| l == -1.0).count(), 500);
    assert_eq!(labels.iter().filter(|&&l| l == 1.0).count(), 500);
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["track", "--help"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["track", "--bogus"]).status.code(), Some(1));
}

#[test]
fn config_errors_are_raised_before_processing() {
    let p = Pipeline::new();
    p.build_dataset("data.csv", "500");
    p.train("data.csv", "model.bin");
    let out = run(&[
        "track",
        "--detections", s(&p.p("test/det.txt")),
        "--descriptors", s(&p.p("test/det_desc.bin")),
        "--model", s(&p.p("model.bin")),
        "--frame-size", "1920,1080",
        "--min-conf", "1.1",
        "--output", s(&p.p("res.txt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!p.p("res.txt").exists());

    let out = run(&[
        "track",
        "--detections", s(&p.p("test/det.txt")),
        "--descriptors", s(&p.p("test/det_desc.bin")),
        "--model", s(&p.p("model.bin")),
        "--frame-size", "1920,1080",
        "--window", "3",
        "--output", s(&p.p("res.txt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window"));
    assert!(!p.p("res.txt").exists());
}

#[test]
fn input_errors_exit_with_two() {
    let p = Pipeline::new();
    let bad = p.p("bad.txt");
    std::fs::write(&bad, "1,-1,10,10,0,20,0.9\n").unwrap();
    let out = run(&["evaluate", "--gt", s(&p.p("test/gt.txt")), "--results", s(&p.p("missing.txt"))]);
    assert_eq!(out.status.code(), Some(2));

    p.build_dataset("data.csv", "500");
    p.train("data.csv", "model.bin");
    let out = run(&[
        "track",
        "--detections", s(&bad),
        "--descriptors", s(&p.p("test/det_desc.bin")),
        "--model", s(&p.p("model.bin")),
        "--frame-size", "1920,1080",
        "--output", s(&p.p("res.txt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.txt:1:"), "{err}");
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        ok(&["synth", "--frames", "40", "--seed", "9", "--out-dir", s(&dir.path().join(name))]);
    }
    for f in ["det.txt", "det_desc.bin", "gt.txt", "gt_desc.bin"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn bench_reports_rate() {
    let out = ok(&["bench", "--targets", "5", "--frames", "50", "--repetitions", "3"]);
    assert!(out.contains("Hz mean"), "{out}");
}
