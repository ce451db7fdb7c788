//! End-to-end tests that drive the compiled binary through temp workspaces.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_autosen")
}

/// Small but structurally complete run: 2 classes, 500x15 samples, 2 epochs.
const BASE: &str = r#"
seed = 9
classes = 2
samples_per_class = 6
unlabeled_samples = 4
shots = [2]
seeds = [9]
modes = ["cross-modal", "amp-only"]

[train]
epochs = 2
batch_size = 4
latent_size = 16

[split]
shots_per_class = 2
eval_per_class = 3

[channel]
subcarrier_indices = [-28, -14, -1, 13, 27]
"#;

struct Work {
    dir: TempDir,
    config: PathBuf,
}

impl Work {
    fn new(extra: &str) -> Self {
        let dir = TempDir::new().expect("tempdir");
        let config = dir.path().join("run.toml");
        fs::write(&config, format!("{}{}", BASE, extra)).expect("write config");
        Work { dir, config }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn run(&self, cmd: &str) -> Output {
        self.run_with(cmd, &[])
    }

    fn run_with(&self, cmd: &str, extra_args: &[&str]) -> Output {
        Command::new(bin())
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(self.out())
            .args(extra_args)
            .arg(cmd)
            .output()
            .expect("spawn binary")
    }
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{} failed\nstdout: {}\nstderr: {}",
        what,
        stdout(out),
        stderr(out)
    );
}

fn assert_code(out: &Output, code: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{} expected exit {}\nstdout: {}\nstderr: {}",
        what,
        code,
        stdout(out),
        stderr(out)
    );
}

#[test]
fn gradcheck_passes_and_names_every_row() {
    let out = Command::new(bin()).arg("gradcheck").output().expect("spawn");
    assert_ok(&out, "gradcheck");
    let text = stdout(&out);
    for name in ["conv2d: ok", "conv_transpose2d: ok", "dense: ok", "mse: ok", "ce: ok"] {
        assert!(text.contains(name), "missing {:?} in:\n{}", name, text);
    }
    assert!(text.contains("all 5 gradient checks passed"), "{}", text);
}

#[test]
fn gradcheck_detects_a_corrupted_gradient() {
    let out = Command::new(bin())
        .args(["gradcheck", "--self-test-corrupt"])
        .output()
        .expect("spawn");
    assert_code(&out, 4, "corrupted gradcheck");
    assert!(stdout(&out).contains("dense: FAIL"), "{}", stdout(&out));
    assert!(stderr(&out).contains("gradient check failed"), "{}", stderr(&out));
}

#[test]
fn unknown_config_keys_exit_2() {
    let w = Work::new("");
    fs::write(&w.config, format!("bogus_key = 1\n{}", BASE)).expect("rewrite config");
    let out = w.run("synth");
    assert_code(&out, 2, "unknown key");
}

#[test]
fn missing_config_file_exits_2() {
    let out = Command::new(bin())
        .args(["--config", "/nonexistent/run.toml", "synth"])
        .output()
        .expect("spawn");
    assert_code(&out, 2, "missing config");
}

#[test]
fn pretrain_without_cache_exits_3() {
    let w = Work::new("");
    let out = w.run("pretrain");
    assert_code(&out, 3, "pretrain without cache");
}

#[test]
fn fewshot_without_checkpoint_exits_3() {
    let w = Work::new("");
    assert_ok(&w.run("synth"), "synth");
    let out = w.run("fewshot");
    assert_code(&out, 3, "fewshot without checkpoint");
}

#[test]
fn pipeline_runs_end_to_end_and_reruns_are_bit_identical() {
    let w = Work::new("");
    assert_ok(&w.run("synth"), "synth");
    assert!(w.out().join("labeled.cache").exists());
    assert!(w.out().join("unlabeled.cache").exists());

    assert_ok(&w.run("sanitize"), "sanitize");
    assert_ok(&w.run("pretrain"), "pretrain");
    let losses = fs::read_to_string(w.out().join("losses.csv")).expect("losses.csv");
    let rows: Vec<&str> = losses.lines().collect();
    assert_eq!(rows[0], "epoch,loss");
    assert_eq!(rows.len(), 3, "header plus one row per epoch: {}", losses);
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(w.out().join("losses.json")).unwrap()).unwrap();
    assert_eq!(record["epoch_losses"].as_array().unwrap().len(), 2);
    assert_eq!(record["latent_size"], 16);

    let few = w.run("fewshot");
    assert_ok(&few, "fewshot");
    assert!(stdout(&few).contains("4 labeled samples"), "{}", stdout(&few));

    let eval = w.run("eval");
    assert_ok(&eval, "eval");
    assert!(stdout(&eval).contains("accuracy"), "{}", stdout(&eval));
    let csv = fs::read_to_string(w.out().join("metrics.csv")).expect("metrics.csv");
    assert_eq!(csv.lines().count(), 2, "header plus one row: {}", csv);
    let rows: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(w.out().join("metrics.json")).unwrap()).unwrap();
    let row = &rows.as_array().unwrap()[0];
    let acc = row["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc), "accuracy {}", acc);
    assert_eq!(row["per_class_accuracy"].as_array().unwrap().len(), 2);

    // reruns rewrite the metrics files byte for byte
    let csv_bytes = fs::read(w.out().join("metrics.csv")).unwrap();
    let json_bytes = fs::read(w.out().join("metrics.json")).unwrap();
    assert_ok(&w.run("eval"), "eval rerun");
    assert_eq!(fs::read(w.out().join("metrics.csv")).unwrap(), csv_bytes);
    assert_eq!(fs::read(w.out().join("metrics.json")).unwrap(), json_bytes);
}

#[test]
fn fullsup_baseline_trains_and_evaluates() {
    let w = Work::new("");
    assert_ok(&w.run("synth"), "synth");
    assert_ok(&w.run("fullsup"), "fullsup");
    let losses = fs::read_to_string(w.out().join("losses.csv")).expect("losses.csv");
    assert_eq!(losses.lines().count(), 3);
    assert_ok(&w.run("eval"), "eval");
    assert!(w.out().join("metrics.csv").exists());
}

#[test]
fn ablate_writes_one_row_per_grid_cell() {
    let w = Work::new("");
    assert_ok(&w.run("synth"), "synth");
    assert_ok(&w.run("sanitize"), "sanitize");
    let out = w.run("ablate");
    assert_ok(&out, "ablate");
    let text = stdout(&out);
    assert!(text.contains("2-shot"), "{}", text);
    assert!(text.contains("cross-modal"), "{}", text);
    assert!(text.contains("amp-only"), "{}", text);
    let csv = fs::read_to_string(w.out().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "header plus 2 modes x 1 seed x 1 shot: {}", csv);
}

#[test]
fn synth_is_deterministic_and_seed_sensitive() {
    let a = Work::new("");
    let b = Work::new("");
    assert_ok(&a.run("synth"), "synth a");
    assert_ok(&b.run("synth"), "synth b");
    let bytes_a = fs::read(a.out().join("labeled.cache")).unwrap();
    assert_eq!(bytes_a, fs::read(b.out().join("labeled.cache")).unwrap());

    let c = Work::new("");
    assert_ok(&c.run_with("synth", &["--seed", "10"]), "synth seeded");
    assert_ne!(bytes_a, fs::read(c.out().join("labeled.cache")).unwrap());
}

#[test]
fn config_env_var_is_honored() {
    let w = Work::new("");
    let out = Command::new(bin())
        .env("AUTOSEN_CONFIG", &w.config)
        .arg("--out")
        .arg(w.out())
        .arg("synth")
        .output()
        .expect("spawn");
    assert_ok(&out, "synth via env config");
    assert!(w.out().join("labeled.cache").exists());
}

fn write_recording(path: &Path, rows: usize, channels: usize) {
    let mut text = String::new();
    for r in 0..rows {
        text.push_str(&format!("{}", r as f64 / 500.0));
        for c in 0..channels {
            text.push_str(&format!(",{}", 1.0 + 0.1 * ((r * 7 + c) as f64).sin()));
        }
        for c in 0..channels {
            text.push_str(&format!(",{}", 0.5 * ((r + c * 3) as f64).cos()));
        }
        text.push('\n');
    }
    fs::write(path, text).expect("write csv");
}

#[test]
fn sanitize_ingests_a_csv_recording_into_windows() {
    let w = Work::new("");
    let csv = w.dir.path().join("capture.csv");
    write_recording(&csv, 1000, 15);
    let extra = format!(
        "\n[paths]\ndata = {:?}\n\n[layout]\namplitude_start = 1\nphase_start = 16\nchannels = 15\n",
        csv.display().to_string()
    );
    fs::write(&w.config, format!("{}{}", BASE, extra)).expect("rewrite config");
    let out = w.run("sanitize");
    assert_ok(&out, "sanitize csv");
    assert!(stdout(&out).contains("unlabeled: 2 windows"), "{}", stdout(&out));
    assert!(w.out().join("unlabeled.cache").exists());
    // two 500-packet windows feed pretraining directly
    assert_ok(&w.run("pretrain"), "pretrain on ingested windows");
}
