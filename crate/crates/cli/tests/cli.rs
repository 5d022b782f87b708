use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn curriculum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curriculum"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, progression: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(
        &path,
        format!(
            "environment = \"gridworld\"\nseeds = [0, 1]\nworkers = 2\n\n[budget]\nunit = \"steps\"\namount = 2000\neval_every = 500\n\n[progression]\nkind = \"{progression}\"\n"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "friction");
    let out = dir.path().join("out");
    let o = curriculum(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("return_from_start"));
    for f in [
        "trace.csv",
        "evals.csv",
        "summary.json",
        "curves.svg",
        "qtable_seed0.txt",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn seed_and_worker_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "linear");
    let out = dir.path().join("out");
    let o = curriculum(&[
        "run",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
        "--workers",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows: Vec<&str> = trace.lines().skip(1).collect();
    assert!(rows.iter().all(|r| r.starts_with("7,")));
    assert!(rows.iter().any(|r| r.starts_with("7,2,")));
}

#[test]
fn threaded_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "friction");
    let out = dir.path().join("out");
    let o = curriculum(&[
        "run",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--threads",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let evals = fs::read_to_string(out.join("evals.csv")).unwrap();
    assert_eq!(evals.lines().count(), 3);
}

#[test]
fn validate_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), "exponential");
    assert!(curriculum(&["validate", "--config", &ok]).status.success());

    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "environment = \"gridworld\"\nworkers = 0\n[learner]\ngamma = 1.5\n",
    )
    .unwrap();
    let o = curriculum(&["validate", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("workers") && err.contains("gamma"), "{err}");
}

#[test]
fn plot_renders_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "friction");
    let out = dir.path().join("out");
    assert!(
        curriculum(&["run", "--config", &config, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let svg = dir.path().join("complexity.svg");
    let o = curriculum(&[
        "plot",
        "--trace",
        out.join("trace.csv").to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 4);
}

#[test]
fn missing_config_is_an_error() {
    let o = curriculum(&["run", "--config", "/nonexistent.toml"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
