use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use manic_core::bootstrap::{BeliefEstimates, WalkDataset};
use serde_json::Value;

fn manic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manic"))
        .current_dir(dir)
        .env_remove("MANIC_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn report(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

/// A config small enough to train in a second or two.
fn tiny_config(dir: &Path, env: &str) -> PathBuf {
    let cfg = serde_json::json!({
        "env": env,
        "walk_steps": 120,
        "belief_dims": 1,
        "nldr_k": 6,
        "train": {
            "epochs": 3,
            "pixels_per_frame": 16,
            "probe_frames": 4,
            "topology": {
                "transition_hidden": [4],
                "decoder_hidden": [6],
                "encoder_hidden": [4]
            }
        },
        "refine_epochs": 1,
        "contentment_hidden": [3],
        "agent": { "pool_size": 6, "horizon": 3, "refine_iterations": 1 },
        "evolve": { "target": [0.5], "steps": 5, "episodes": 1, "population": 2 },
    });
    let path = dir.join("cfg.json");
    std::fs::write(&path, serde_json::to_vec(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn crane_walk_has_paper_frame_size() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(&manic(dir.path(), &["collect", "--steps", "1000", "--out", "w.mnc1"]));
    assert_eq!(r["frames"], 1000);
    let ds = WalkDataset::load(dir.path().join("w.mnc1")).unwrap();
    assert_eq!(ds.len(), 1000);
    assert_eq!((ds.frame.width, ds.frame.height, ds.frame.channels), (64, 48, 3));
    let record: Value = serde_json::from_slice(&std::fs::read(dir.path().join("w.mnc1.run.json")).unwrap()).unwrap();
    assert_eq!(record["command"], "collect");
    assert_eq!(record["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn collect_is_reproducible_and_guards_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    report(&manic(d, &["collect", "--steps", "50", "--out", "a.mnc1"]));
    report(&manic(d, &["collect", "--steps", "50", "--out", "b.mnc1"]));
    assert_eq!(std::fs::read(d.join("a.mnc1")).unwrap(), std::fs::read(d.join("b.mnc1")).unwrap());

    assert_eq!(code(&manic(d, &["collect", "--steps", "50", "--out", "a.mnc1"])), 2);
    report(&manic(d, &["collect", "--steps", "50", "--out", "a.mnc1", "--force", "--seed", "9"]));
    assert_ne!(std::fs::read(d.join("a.mnc1")).unwrap(), std::fs::read(d.join("b.mnc1")).unwrap());

    let out = manic(d, &["collect", "--steps", "1", "--out", "c.mnc1"]);
    assert_eq!(code(&out), 2);
    assert!(!d.join("c.mnc1").exists());
    assert!(!d.join(".manic.lock").exists());
}

#[test]
fn seed_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    report(&manic(d, &["collect", "--steps", "30", "--out", "a.mnc1"]));
    let out = Command::new(env!("CARGO_BIN_EXE_manic"))
        .current_dir(d)
        .env("MANIC_SEED", "5")
        .args(["collect", "--steps", "30", "--out", "b.mnc1"])
        .output()
        .unwrap();
    report(&out);
    let record: Value = serde_json::from_slice(&std::fs::read(d.join("b.mnc1.run.json")).unwrap()).unwrap();
    assert_eq!(record["config"]["seed"], 5);
    assert_ne!(std::fs::read(d.join("a.mnc1")).unwrap(), std::fs::read(d.join("b.mnc1")).unwrap());
}

#[test]
fn ramp_bootstrap_reports_monotone_beliefs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d, "ramp-test");
    let cfg = cfg.to_str().unwrap();
    report(&manic(d, &["--config", cfg, "collect", "--out", "r.mnc1"]));
    let r = report(&manic(d, &["--config", cfg, "bootstrap", "--in", "r.mnc1", "--dims", "1", "--out", "r.mncb"]));
    assert_eq!(r["dims"], 1);
    let rho = r["quality"]["spearman"].as_f64().unwrap();
    assert!(rho.abs() > 0.95, "spearman {rho}");
    assert_eq!(BeliefEstimates::load(d.join("r.mncb")).unwrap().dims, 1);
}

#[test]
fn missing_inputs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = manic(d, &["bootstrap", "--in", "nope.mnc1", "--out", "b.mncb"]);
    assert_eq!(code(&out), 2);
    assert!(!d.join("b.mncb").exists());
    assert_eq!(code(&manic(d, &["run", "--steps", "0"])), 2);
    assert_eq!(code(&manic(d, &["eval", "--model", "m"])), 2);
    assert_eq!(code(&manic(d, &["frobnicate"])), 2);
    std::fs::write(d.join("bad.json"), "{ nope").unwrap();
    assert_eq!(code(&manic(d, &["--config", "bad.json", "collect"])), 2);
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d, "ramp-test");
    let cfg = cfg.to_str().unwrap();
    report(&manic(d, &["--config", cfg, "collect"]));
    report(&manic(d, &["--config", cfg, "bootstrap"]));
    let r = report(&manic(d, &["--config", cfg, "pretrain"]));
    assert!(r["hashes"]["f"].is_string());
    assert!(d.join("run/model/f.mncm").exists());
    assert!(d.join("run/model.run.json").exists());
    assert_eq!(code(&manic(d, &["--config", cfg, "pretrain"])), 2);

    let r = report(&manic(d, &["--config", cfg, "run", "--steps", "12"]));
    assert_eq!(r["steps"], 12);
    let r = report(&manic(d, &["--config", cfg, "eval", "--trace", "run/trace.jsonl", "--data", "run/walk.mnc1"]));
    let table = r["data"]["rollout"].as_array().unwrap();
    assert_eq!(table.len(), 6);
    assert!(table.iter().all(|row| row["model"].as_f64().unwrap().is_finite()));
    assert!(r["trace"]["rollout"].as_array().unwrap().len() >= 2);
    assert_eq!(r["trace"]["r2"].as_array().unwrap().len(), 1);

    let r = report(&manic(d, &["--config", cfg, "evolve", "--generations", "1"]));
    assert!(r["best_fitness"].as_f64().is_some());
    assert_eq!(code(&manic(d, &["--config", cfg, "evolve"])), 2);
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn teach_answers_status_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d, "ramp-test");
    let cfg = cfg.to_str().unwrap();
    report(&manic(d, &["--config", cfg, "collect"]));
    report(&manic(d, &["--config", cfg, "bootstrap"]));
    report(&manic(d, &["--config", cfg, "pretrain"]));

    let port = free_port().to_string();
    let mut child = Command::new(env!("CARGO_BIN_EXE_manic"))
        .current_dir(d)
        .args(["--config", cfg, "teach", "--port", &port])
        .spawn()
        .unwrap();
    let started = Instant::now();
    let url = format!("http://127.0.0.1:{port}/api/status");
    let status = poll_json(&url, started + Duration::from_secs(2));
    let _ = child.kill();
    let _ = child.wait();
    let status = status.expect("status within 2 s");
    assert_eq!(status["pending_candidates"], 0);
    assert!(status["model_hashes"]["g"].is_string());
}

/// Polls `url` until it answers 200 or `deadline` passes.
fn poll_json(url: &str, deadline: Instant) -> Option<Value> {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        loop {
            if let Ok(resp) = reqwest::get(url).await {
                if resp.status() == 200 {
                    return resp.json().await.ok();
                }
            }
            if Instant::now() > deadline {
                return None;
            }
            tokio::time::sleep(Duration::from_millis(25)).await;
        }
    })
}
