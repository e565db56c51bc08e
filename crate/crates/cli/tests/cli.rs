use std::path::Path;
use std::process::{Command, Output};

use poolforge::orchestrator::{emit_curve, run_experiment};
use poolforge::{BlobSpec, BudgetSchedule, ExperimentConfig, Method, Mode};
use poolforge_cli::results::{curves_by_run, read_rows, rows_of, write_rows};

fn poolforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poolforge")).args(args).env_remove("POOLFORGE_SEED").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen_small(dir: &Path) {
    let out = poolforge(&[
        "gen-data", "--classes", "3", "--per-class", "30", "--dim", "4", "--noise-dim", "2", "--sigma", "0.2",
        "--seed", "4", "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

fn write_config(dir: &Path, methods: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        r#"
[data]
train = "{train}"
test = "{test}"

[experiment]
modes = ["self_train"]
methods = [{methods}]
seeds = [0, 1]
initial = 6
cycles = 2

[simsiam]
epochs = 5

[probe]
epochs = 20

[output]
dir = "{out}"
"#,
        train = dir.join("train.pfv").display(),
        test = dir.join("test.pfv").display(),
        out = dir.join("out").display(),
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let cfg = write_config(dir.path(), r#""entropy", "random""#);
    let out = poolforge(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let csv = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,mode,seed,cycle,labeled,accuracy,wall_time_s");
    assert_eq!(lines.count(), 2 * 2 * 3);
    let jsonl = std::fs::read_to_string(dir.path().join("out/runs.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 4);
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["status"], "ok");
        assert_eq!(v["config_fingerprint"].as_str().unwrap().len(), 64);
    }

    let first = std::fs::read(dir.path().join("out/results.csv")).unwrap();
    let out = poolforge(&["run", "--config", cfg.to_str().unwrap(), "--jobs", "3"]);
    assert!(out.status.success());
    assert_eq!(first, std::fs::read(dir.path().join("out/results.csv")).unwrap());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let cfg = write_config(dir.path(), r#""random""#);
    let out = poolforge(&[
        "run", "--config", cfg.to_str().unwrap(), "--seeds", "7", "--cycles", "1", "--set", "probe.epochs=5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_rows(&dir.path().join("out/results.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.seed == 7));
}

#[test]
fn unsupported_method_fails() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let cfg = write_config(dir.path(), r#""vaal""#);
    let out = poolforge(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unsupported method: vaal"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let cfg = write_config(dir.path(), r#""random""#);
    let out = poolforge(&["run", "--config", cfg.to_str().unwrap(), "--set", "probe.learning_rate=1"]);
    assert!(!out.status.success());
}

#[test]
fn failed_run_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let cfg = write_config(dir.path(), r#""random""#);
    // 72 training rows cannot hold 6 + 20 * 6 labels
    let out = poolforge(&["run", "--config", cfg.to_str().unwrap(), "--cycles", "20"]);
    assert!(!out.status.success());
    let jsonl = std::fs::read_to_string(dir.path().join("out/runs.jsonl")).unwrap();
    assert!(jsonl.contains("\"status\":\"failed\""));
}

#[test]
fn selftrain_then_reuse() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let train = dir.path().join("train.pfv");
    let net = dir.path().join("net.psn");
    let zero = poolforge(&["selftrain", "--train", train.to_str().unwrap(), "--out", net.to_str().unwrap(), "--epochs", "0"]);
    assert!(!zero.status.success());
    assert!(!net.exists());

    let out = poolforge(&["selftrain", "--train", train.to_str().unwrap(), "--out", net.to_str().unwrap(), "--epochs", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("final loss "));

    let cfg = write_config(dir.path(), r#""kcenter""#);
    let out = poolforge(&["run", "--config", cfg.to_str().unwrap(), "--pretrained", net.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn missing_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#""random""#);
    let out = poolforge(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("train.pfv"), "{}", stderr(&out));
}

#[test]
fn advise_from_points_and_results() {
    let out = poolforge(&["advise", "--point", "10:100", "--point", "100:370", "--point", "200:670", "--query", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("slope=3.000000 intercept=70.000000 r=1.000000"), "{text}");
    assert!(text.contains("samples_per_class=100.0000 total_budget=1000"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let cfg = write_config(dir.path(), r#""entropy", "random""#);
    assert!(poolforge(&["run", "--config", cfg.to_str().unwrap()]).status.success());
    let results = dir.path().join("out/results.csv");
    let out = poolforge(&["advise", "--results", results.to_str().unwrap(), "--num-classes", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("crossover self_train entropy"));

    let out = poolforge(&["advise", "--point", "10:100", "--query", "10"]);
    assert!(!out.status.success());
}

#[test]
fn gen_data_honours_seed_env() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = Command::new(env!("CARGO_BIN_EXE_poolforge"))
            .args(["gen-data", "--classes", "2", "--per-class", "10", "--dim", "2", "--noise-dim", "1", "--out"])
            .arg(dir)
            .env("POOLFORGE_SEED", "17")
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(a.path().join("train.pfv")).unwrap(), std::fs::read(b.path().join("train.pfv")).unwrap());
}

#[test]
fn csv_round_trip_preserves_curves() {
    let (train, test) =
        poolforge::data::generate_blobs(&BlobSpec { num_classes: 3, per_class: 20, dim: 3, noise_dim: 1, sigma: 0.3, seed: 2 })
            .unwrap();
    let cfg = ExperimentConfig::new(BudgetSchedule::equal(6, 2), Mode::Scratch, Method::Entropy, 3);
    let result = run_experiment(&cfg, &train, &test, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_rows(&path, &rows_of(&result, 3), false).unwrap();
    let curves = curves_by_run(&read_rows(&path).unwrap()).unwrap();
    assert_eq!(curves[&(Mode::Scratch, Method::Entropy, 3)], emit_curve(&result).unwrap());
}
