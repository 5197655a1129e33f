use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn covclust(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_covclust"));
    cmd.args(args);
    if let Some(w) = workers {
        cmd.env("COVCLUST_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CONFIG: &str = r#"
m = 10
n = 8
partition = "uniform"
clusters = 2
kernel = "gen_ar1"
nu = 0.2
burnin1 = 5
burnin2 = 5
sampling = 10
log_every = 5
seeds = [1, 2]
"#;

#[test]
fn simulate_fit_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let data = dir.path().join("data");
    let out = covclust(&["simulate", "--config", p(&cfg), "--out", p(&data)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let outcomes = fs::read_to_string(data.join("outcomes.csv")).unwrap();
    let lines: Vec<&str> = outcomes.lines().collect();
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[0].split(',').count(), 10);
    assert!(data.join("locations.csv").exists());
    assert!(data.join("truth.json").exists());

    let runs = dir.path().join("runs");
    let out = covclust(&["fit", "--config", p(&cfg), "--data", p(&data), "--out", p(&runs)], Some("2"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(runs.join("seed_1/samples.jsonl").exists());
    assert!(runs.join("seed_2/progress.csv").exists());
    let manifest = fs::read_to_string(runs.join("seed_2/manifest.json")).unwrap();
    assert!(manifest.contains("\"complete\""));

    let report = dir.path().join("report");
    let truth = data.join("truth.json");
    let out = covclust(
        &["summarize", "--runs", p(&runs), "--truth", p(&truth), "--out", p(&report)],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sim = fs::read_to_string(report.join("similarity.csv")).unwrap();
    assert_eq!(sim.lines().count(), 11);
    assert!(report.join("coverage.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "unknown_key = 3\n").unwrap();
    let out = covclust(&["simulate", "--config", p(&bad), "--out", p(dir.path())], None);
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let missing = dir.path().join("nowhere");
    let out = covclust(
        &["fit", "--config", p(&cfg), "--data", p(&missing), "--out", p(&dir.path().join("r"))],
        None,
    );
    assert_eq!(out.status.code(), Some(3));

    let out = covclust(
        &["summarize", "--runs", p(&missing), "--out", p(&dir.path().join("s"))],
        None,
    );
    assert_eq!(out.status.code(), Some(3));

    let data = dir.path().join("data");
    assert!(covclust(&["simulate", "--config", p(&cfg), "--out", p(&data)], None).status.success());
    let out = covclust(
        &["fit", "--config", p(&cfg), "--data", p(&data), "--out", p(&dir.path().join("r")), "--seeds", "1"],
        Some("zero"),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn preprocess_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "r1,r2\n1,2\n3,5\n2,1\n7,3\n0,4\n9,9\n").unwrap();
    fs::write(&b, "r1,r2\n4,1\n2,6\n8,2\n1,1\n").unwrap();
    let out_dir = dir.path().join("pre");
    let out = covclust(&["preprocess", "--subjects", p(&a), p(&b), "--lag", "2", "--out", p(&out_dir)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let y = fs::read_to_string(out_dir.join("outcomes.csv")).unwrap();
    assert_eq!(y.lines().next(), Some("r1,r2"));
    let x = fs::read_to_string(out_dir.join("covariates.csv")).unwrap();
    assert_eq!(x.lines().count(), 6);
}
