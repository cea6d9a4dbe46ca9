use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn xdomain(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xdomain"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .env_remove("XDOMAIN_OUT")
        .output()
        .expect("binary runs")
}

/// The last stdout line, parsed as the command summary.
fn summary(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

const SMALL_SPEC: &str = "[source]\nbase = 3\npurple = 2\n[target]\nbase = 3\n";

fn small_config(dir: &Path, name: &str, body: &str) -> String {
    let text = format!(
        "data_dir = \"data\"\nhidden = 8\nlatent_dim = 4\nbatch_size = 4\nmax_iters = 15\neval_every = 0\neval_episodes = 0\n{body}"
    );
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn gen_small(dir: &Path) {
    fs::write(dir.join("spec.toml"), SMALL_SPEC).unwrap();
    summary(&xdomain(
        &["gen-data", "--spec", "spec.toml", "--out", "data", "--seed", "4"],
        dir,
    ));
}

#[test]
fn reference_mixture_writes_four_variant_files() {
    let tmp = tempfile::tempdir().unwrap();
    let s = summary(&xdomain(
        &["gen-data", "--spec", "paper", "--out", "d", "--seed", "0"],
        tmp.path(),
    ));
    assert_eq!(s["command"], "gen-data");
    assert_eq!(s["episodes"], 350);
    assert_eq!(s["cells"]["source/base"], 100);
    assert_eq!(s["cells"]["target/base"], 100);
    for v in ["purple", "purple_mirrored", "white_mirrored"] {
        assert_eq!(s["cells"][format!("source/{v}")], 50);
    }
    for v in ["base", "purple", "purple_mirrored", "white_mirrored"] {
        assert!(tmp.path().join("d").join(format!("{v}.jsonl")).exists());
    }
}

#[test]
fn gen_data_is_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("spec.toml"), SMALL_SPEC).unwrap();
    summary(&xdomain(
        &["gen-data", "--spec", "spec.toml", "--out", "a", "--seed", "9"],
        tmp.path(),
    ));
    summary(&xdomain(
        &["gen-data", "--spec", "spec.toml", "--out", "b", "--seed", "9"],
        tmp.path(),
    ));
    let mut names: Vec<_> = fs::read_dir(tmp.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in names {
        assert_eq!(
            fs::read(tmp.path().join("a").join(&n)).unwrap(),
            fs::read(tmp.path().join("b").join(&n)).unwrap()
        );
    }
}

#[test]
fn zero_count_spec_gives_empty_files() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("spec.toml"), "[source]\nbase = 0\n").unwrap();
    let s = summary(&xdomain(&["gen-data", "--spec", "spec.toml", "--out", "d"], tmp.path()));
    assert_eq!(s["episodes"], 0);
    assert_eq!(fs::read_to_string(tmp.path().join("d/base.jsonl")).unwrap(), "");
}

#[test]
fn zero_alpha_and_cotrain_write_identical_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path());
    let a = small_config(tmp.path(), "a.toml", "method = \"egobridge\"\nalpha = 0.0\n");
    let b = small_config(tmp.path(), "b.toml", "method = \"cotrain\"\n");
    summary(&xdomain(&["train", "--config", &a, "--out", "ra"], tmp.path()));
    let s = summary(&xdomain(&["train", "--config", &b, "--out", "rb"], tmp.path()));
    assert_eq!(s["steps"], 15);
    assert_eq!(
        fs::read(tmp.path().join("ra/checkpoint.json")).unwrap(),
        fs::read(tmp.path().join("rb/checkpoint.json")).unwrap()
    );
    // The log has no wall-clock column, so it must agree too.
    assert_eq!(
        fs::read(tmp.path().join("ra/train_log.csv")).unwrap(),
        fs::read(tmp.path().join("rb/train_log.csv")).unwrap()
    );
}

#[test]
fn zero_iterations_write_only_the_initial_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path());
    let c = small_config(tmp.path(), "c.toml", "method = \"egobridge\"\n");
    let text = fs::read_to_string(tmp.path().join(&c))
        .unwrap()
        .replace("max_iters = 15", "max_iters = 0");
    fs::write(tmp.path().join(&c), text).unwrap();
    let s = summary(&xdomain(&["train", "--config", &c, "--out", "r"], tmp.path()));
    assert_eq!(s["steps"], 0);
    assert!(s["final_total"].is_null());
    assert_eq!(
        fs::read_to_string(tmp.path().join("r/train_log.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn missing_dataset_fails_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let c = small_config(tmp.path(), "c.toml", "method = \"egobridge\"\n");
    let out = xdomain(&["train", "--config", &c, "--out", "r"], tmp.path());
    assert!(!out.status.success());
    assert!(!tmp.path().join("r").exists());
}

#[test]
fn eval_reports_seeds_and_expert_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let s = summary(&xdomain(
        &["eval", "--checkpoint", "expert", "--setting", "base", "--out", "e.csv"],
        tmp.path(),
    ));
    assert_eq!(s["seeds"], 100);
    assert!(s["success_rate"].as_f64().unwrap() >= 0.95);
    assert_eq!(
        fs::read_to_string(tmp.path().join("e.csv")).unwrap().lines().count(),
        101
    );

    let s = summary(&xdomain(
        &[
            "eval",
            "--checkpoint",
            "expert",
            "--setting",
            "source:purple",
            "--seeds",
            "7",
            "--out",
            "one.csv",
        ],
        tmp.path(),
    ));
    assert_eq!(s["seeds"], 1);
    assert_eq!(s["setting"], "source:purple");

    let bad = xdomain(&["eval", "--checkpoint", "expert", "--setting", "green"], tmp.path());
    assert!(!bad.status.success());
}

#[test]
fn sweep_emits_one_row_per_method_and_rejects_duplicates() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path());
    let c = small_config(tmp.path(), "c.toml", "method = \"egobridge\"\n");
    let out = xdomain(
        &[
            "sweep",
            "--methods",
            "egobridge",
            "--config",
            &c,
            "--out",
            "s",
            "--seeds",
            "101,102",
        ],
        tmp.path(),
    );
    let s = summary(&out);
    assert_eq!(s["rows"], 1);
    let table = fs::read_to_string(tmp.path().join("s/results.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert_eq!(table.lines().next().unwrap().split(',').count(), 7);

    let dup = xdomain(
        &[
            "sweep",
            "--methods",
            "mmd,mmd",
            "--config",
            &c,
            "--out",
            "s2",
            "--seeds",
            "101",
        ],
        tmp.path(),
    );
    assert!(!dup.status.success());
}

#[test]
fn analyze_writes_report_and_projection() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path());
    let c = small_config(tmp.path(), "c.toml", "method = \"egobridge\"\n");
    summary(&xdomain(&["train", "--config", &c, "--out", "r"], tmp.path()));
    let s = summary(&xdomain(
        &[
            "analyze",
            "--checkpoint",
            "r/checkpoint.json",
            "--data",
            "data",
            "--out",
            "an",
            "--max-per-domain",
            "20",
        ],
        tmp.path(),
    ));
    assert_eq!(s["samples"], 40);
    assert!(s["w2"].as_f64().unwrap() >= 0.0);
    assert!(tmp.path().join("an/alignment.csv").exists());
    assert!(fs::read_to_string(tmp.path().join("an/pca.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn unknown_flags_and_keys_are_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(!xdomain(&["gen-data", "--spec", "paper", "--bogus"], tmp.path())
        .status
        .success());
    assert!(!xdomain(&["frobnicate"], tmp.path()).status.success());
    gen_small(tmp.path());
    let c = small_config(tmp.path(), "c.toml", "method = \"egobridge\"\nalhpa = 0.1\n");
    assert!(!xdomain(&["train", "--config", &c, "--out", "r"], tmp.path())
        .status
        .success());
}
