use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bpr_core::bpr::{pretrain, EncoderManifest, EncoderModel, PretrainConfig};
use bpr_core::environments::OfflineDataset;
use serde_json::Value;

fn bpr(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpr"))
        .args(args)
        .env("BPR_OUTPUT_DIR", root)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = bpr(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_dataset(root: &Path) -> PathBuf {
    let p = root.join("pm.jsonl");
    ok(root, &["gen-data", "--task", "pointmass", "--behavior", "medium-expert", "--n", "600", "--seed", "1", "--out", p.to_str().unwrap()]);
    p
}

const QUICK: &[&str] = &["--steps", "40", "--batch-size", "32", "--hidden", "8,8", "--eval-every", "20", "--eval-episodes", "2"];

#[test]
fn gen_data_is_deterministic_and_echoes_its_size() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let args = ["gen-data", "--task", "pointmass", "--behavior", "expert", "--n", "20000", "--seed", "0"];
    ok(root, &args);
    let path = root.join("data/pointmass-n20000-s0.jsonl");
    let first = fs::read(&path).unwrap();
    ok(root, &args);
    assert_eq!(first, fs::read(&path).unwrap());
    let header: Value = serde_json::from_str(std::str::from_utf8(&first).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["n"], 20000);
    assert_eq!(OfflineDataset::load(&path).unwrap().len(), 20000);
}

#[test]
fn mixture_behavior_is_recorded_in_the_tag() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("mix.jsonl");
    ok(dir.path(), &["gen-data", "--behavior", "mixture:expert:0.5,random:0.5", "--n", "300", "--out", p.to_str().unwrap()]);
    let tag = OfflineDataset::load(&p).unwrap().behavior_tag().to_string();
    assert!(tag.starts_with("mixture:") && tag.contains("expert") && tag.contains("random"), "{tag}");
}

#[test]
fn zero_step_pretraining_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = small_dataset(root);
    let ckpt = root.join("enc0.ckpt");
    ok(root, &["pretrain", "--dataset", data.to_str().unwrap(), "--steps", "0", "--seed", "7", "--out", ckpt.to_str().unwrap()]);
    let init = pretrain(&OfflineDataset::load(&data).unwrap(), &PretrainConfig { steps: 0, seed: 7, ..PretrainConfig::default() })
        .unwrap()
        .encoder;
    assert_eq!(EncoderModel::load(&ckpt).unwrap().param_hash(), init.param_hash());
    assert_eq!(EncoderManifest::load(&ckpt).unwrap().pretrain_steps, 0);
}

#[test]
fn manifest_final_loss_is_the_last_trace_row() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = small_dataset(root);
    let ckpt = root.join("enc.ckpt");
    ok(root, &[
        "pretrain", "--dataset", data.to_str().unwrap(), "--steps", "30", "--batch-size", "16", "--encoder-hidden", "8",
        "--predictor-hidden", "8", "--repr-dim", "4", "--out", ckpt.to_str().unwrap(),
    ]);
    let manifest = EncoderManifest::load(&ckpt).unwrap();
    let csv = fs::read_to_string(root.join("enc.ckpt.loss.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let (step, loss) = last.split_once(',').unwrap();
    assert_eq!(step, "30");
    assert_eq!(manifest.final_loss, Some(loss.parse::<f64>().unwrap()));
    assert_eq!(csv.lines().count(), 31);
}

#[test]
fn unusable_dataset_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let t = bpr_core::environments::Transition { state: vec![0.0; 4], action: vec![0.0, 0.0], reward: 0.0, next_state: vec![0.0; 4], done: true };
    let p = root.join("zero.jsonl");
    OfflineDataset::new(4, 2, vec![t; 10], "zero").unwrap().save(&p).unwrap();
    let out = bpr(root, &["pretrain", "--dataset", p.to_str().unwrap(), "--steps", "5"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn encoder_and_scratch_runs_both_complete() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = small_dataset(root);
    let ckpt = root.join("enc.ckpt");
    ok(root, &["pretrain", "--dataset", data.to_str().unwrap(), "--steps", "20", "--batch-size", "16", "--encoder-hidden", "8", "--predictor-hidden", "8", "--repr-dim", "4", "--out", ckpt.to_str().unwrap()]);
    let mut base = vec!["train", "--algo", "td3bc", "--dataset", data.to_str().unwrap(), "--seeds", "0,1"];
    base.extend_from_slice(QUICK);
    ok(root, &base);
    let mut with_enc = base.clone();
    with_enc.extend_from_slice(&["--encoder", ckpt.to_str().unwrap()]);
    ok(root, &with_enc);
    for label in ["td3bc-scratch", "td3bc-bpr"] {
        let s = json(&root.join("runs").join(label).join("summary.json"));
        assert_eq!(s["schema_version"], 1);
        assert_eq!(s["seeds"].as_array().unwrap().len(), 2);
        assert_eq!(s["aggregate"]["n_seeds"], 2);
        assert!(root.join("runs").join(label).join("seed-1/trace.csv").exists());
    }
    let bpr_summary = json(&root.join("runs/td3bc-bpr/summary.json"));
    assert!(bpr_summary["encoder_hash"].is_string());
    assert_eq!(bpr_summary["seeds"][0]["encoder_hash_after"], bpr_summary["encoder_hash"]);
}

#[test]
fn spibb_emits_a_bound_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let p = root.join("g.jsonl");
    ok(root, &["gen-data", "--task", "gridworld", "--behavior", "epsilon-greedy:0.5", "--n", "1000", "--seed", "2", "--out", p.to_str().unwrap()]);
    ok(root, &["train", "--task", "gridworld", "--algo", "spibb", "--dataset", p.to_str().unwrap(), "--probe-bounds"]);
    let s = json(&root.join("runs/spibb/summary.json"));
    let b = &s["seeds"][0]["bounds"];
    assert!(b["theorem2_slack"].as_f64().unwrap() >= -1e-9);
    assert!(b["K"].as_f64().unwrap() > 0.0);
}

#[test]
fn seed_rows_do_not_depend_on_sibling_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = small_dataset(root);
    let run = |seeds: &str, label: &str| {
        let mut args = vec!["train", "--dataset", data.to_str().unwrap(), "--seeds", seeds, "--label", label];
        args.extend_from_slice(QUICK);
        ok(root, &args);
        json(&root.join("runs").join(label).join("summary.json"))
    };
    let one = run("0", "one");
    let two = run("0,1", "two");
    assert_eq!(one["seeds"][0], two["seeds"][0]);
    assert_ne!(two["seeds"][0], two["seeds"][1]);
}

#[test]
fn report_iqm_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = small_dataset(root);
    for label in ["a", "b"] {
        let mut args = vec!["train", "--dataset", data.to_str().unwrap(), "--seeds", "0,1,2,3", "--label", label];
        args.extend_from_slice(QUICK);
        ok(root, &args);
    }
    let out = root.join("report");
    ok(root, &["report", root.join("runs/a").to_str().unwrap(), root.join("runs/b").to_str().unwrap(), "--out", out.to_str().unwrap()]);

    let s = json(&root.join("runs/a/summary.json"));
    let mut finals: Vec<f64> = s["seeds"].as_array().unwrap().iter().map(|r| r["final_return"].as_f64().unwrap()).collect();
    finals.sort_by(f64::total_cmp);
    let mid = (finals[1] + finals[2]) / 2.0;

    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][col("variant")], "a");
    assert_eq!(rows[0][col("seeds")], "4");
    let iqm: f64 = rows[0][col("final_iqm")].parse().unwrap();
    assert!((iqm - mid).abs() < 1e-12 * (1.0 + mid.abs()), "{iqm} vs {mid}");

    let curves = fs::read_to_string(out.join("learning_curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "variant,step,mean,std,n");
    for v in ["a", "b"] {
        let steps: Vec<u64> = curves.lines().skip(1).filter(|l| l.starts_with(&format!("{v},"))).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(!steps.is_empty());
        assert!(steps.windows(2).all(|w| w[0] < w[1]), "{steps:?}");
    }
    assert!(fs::read_to_string(out.join("comparison.md")).unwrap().contains("| b |"));
}

#[test]
fn report_refuses_mixed_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = small_dataset(root);
    let mut args = vec!["train", "--dataset", data.to_str().unwrap(), "--label", "pm"];
    args.extend_from_slice(QUICK);
    ok(root, &args);
    ok(root, &["train", "--task", "gridworld", "--algo", "spibb", "--label", "gw"]);
    let out = bpr(root, &["report", root.join("runs/pm").to_str().unwrap(), root.join("runs/gw").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mix tasks"));
}

#[test]
fn audit_json_lists_the_audited_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["audit", "--json"]);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["passed"], true);
    let items = v["counterexample"]["items"].as_array().unwrap();
    assert!(items.len() >= 4);
    assert!(items.iter().all(|i| i["passed"] == true));
    assert!(dir.path().join("audit.json").exists());
}

#[test]
fn perturbed_audit_fails_on_the_behavior_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = bpr(dir.path(), &["audit", "--perturb-reward", "1.5"]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("J(pi_beta_hat)"), "{text}");
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bpr(dir.path(), &["train", "--seeds", "x"]).status.code(), Some(1));
    assert_eq!(bpr(dir.path(), &["train", "--co-train"]).status.code(), Some(1));
    assert_eq!(bpr(dir.path(), &["bogus"]).status.code(), Some(1));
}

#[test]
fn full_pipeline_is_byte_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        ok(root, &["gen-data", "--n", "500", "--seed", "3"]);
        let data = root.join("data/pointmass-n500-s3.jsonl");
        ok(root, &["pretrain", "--dataset", data.to_str().unwrap(), "--steps", "20", "--batch-size", "16", "--encoder-hidden", "8", "--predictor-hidden", "8", "--repr-dim", "4"]);
        let enc = root.join("encoder-s0.ckpt");
        let mut args = vec!["train", "--dataset", data.to_str().unwrap(), "--encoder", enc.to_str().unwrap(), "--probe-every", "20"];
        args.extend_from_slice(QUICK);
        ok(root, &args);
        ok(root, &["report", root.join("runs/td3bc-bpr").to_str().unwrap()]);
        (
            fs::read(root.join("runs/td3bc-bpr/summary.json")).unwrap(),
            fs::read(root.join("report/effective_dimension.csv")).unwrap(),
        )
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(String::from_utf8(a.1).unwrap().lines().count() > 1);
}
