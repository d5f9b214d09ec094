use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphdiff::graph::read_graphs;
use serde_json::Value;
use tempfile::TempDir;

fn graphdiff(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphdiff"))
        .args(args)
        .current_dir(dir)
        .env_remove("GRAPHDIFF_THREADS")
        .output()
        .expect("spawn graphdiff")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = graphdiff(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_er(dir: &Path, name: &str) {
    ok(dir, &["dataset", "--kind", "er", "--n", "6", "--p", "0.4", "--count", "8", "--seed", "5", "--out", name]);
}

#[test]
fn dataset_is_reproducible_and_planar_has_sixty_nodes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["dataset", "--kind", "planar-60", "--count", "200", "--seed", "1", "--out", "a.gl"]);
    let first = (fs::read(d.join("a.gl")).unwrap(), fs::read(d.join("a.manifest.json")).unwrap());
    ok(d, &["--threads", "3", "dataset", "--kind", "planar-60", "--count", "200", "--seed", "1", "--out", "a.gl"]);
    assert_eq!(first, (fs::read(d.join("a.gl")).unwrap(), fs::read(d.join("a.manifest.json")).unwrap()));

    let batch = read_graphs(d.join("a.gl")).unwrap();
    assert_eq!(batch.len(), 200);
    assert!(batch.iter().all(|g| g.n() == 60));
    let manifest = json(d.join("a.manifest.json"));
    assert_eq!(manifest["spec"]["kind"], "planar-60");
    assert_eq!(manifest["spec"]["seed"], 1);
    assert_eq!(manifest["node_counts"]["60"], 200);

    ok(d, &["dataset", "--kind", "planar-60", "--count", "200", "--seed", "2", "--out", "b.gl"]);
    assert_ne!(fs::read(d.join("a.gl")).unwrap(), fs::read(d.join("b.gl")).unwrap());
}

#[test]
fn default_dataset_sizes() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["dataset", "--kind", "sbm-27", "--seed", "7", "--out", "data/sbm27.gl"]);
    let batch = read_graphs(tmp.path().join("data/sbm27.gl")).unwrap();
    assert_eq!(batch.len(), 200);
    assert!(batch.iter().all(|g| (24..=27).contains(&g.n())));
}

#[test]
fn missing_seed_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    for args in [
        &["dataset", "--kind", "planar-60", "--count", "2", "--out", "x.gl"][..],
        &["train", "--data", "x.gl", "--out-dir", "run"][..],
        &["sample", "--oracle", "x.gl", "--algorithm", "vb", "--count", "2", "--out", "y.gl"][..],
    ] {
        let out = graphdiff(tmp.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    }
    assert!(!tmp.path().join("x.gl").exists());
}

#[test]
fn train_manifest_echoes_defaults_and_loss_flag() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_er(d, "er.gl");
    ok(d, &["train", "--data", "er.gl", "--seed", "1", "--epochs", "1", "--depth", "2", "--hidden", "4", "--out-dir", "run"]);
    let m = json(d.join("run/manifest.json"));
    assert_eq!(m["config"]["learning_rate"], 0.001);
    assert_eq!(m["config"]["batch_size"], 64);
    assert_eq!(m["config"]["steps"], 32);
    assert_eq!(m["config"]["loss"], "simple");
    assert_eq!(m["epochs_completed"], 1);

    fs::write(d.join("cfg.toml"), "loss = \"simple\"\nlearning_rate = 0.002\nsteps = 16\n").unwrap();
    ok(d, &[
        "train", "--data", "er.gl", "--seed", "1", "--epochs", "1", "--depth", "2", "--hidden", "4",
        "--config", "cfg.toml", "--loss", "vb", "--out-dir", "run-vb",
    ]);
    let m = json(d.join("run-vb/manifest.json"));
    assert_eq!(m["config"]["loss"], "vb");
    assert_eq!(m["config"]["learning_rate"], 0.002);
    assert_eq!(m["config"]["steps"], 16);

    fs::write(d.join("bad.toml"), "learning_rat = 0.1\n").unwrap();
    let out = graphdiff(d, &["train", "--data", "er.gl", "--seed", "1", "--config", "bad.toml", "--out-dir", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn interrupted_training_resumes_to_the_same_trace() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_er(d, "er.gl");
    let common = ["--data", "er.gl", "--seed", "4", "--depth", "2", "--hidden", "4", "--batch-size", "3", "--checkpoint-every", "3"];
    let train = |extra: &[&str]| {
        let mut args = vec!["train"];
        args.extend_from_slice(&common);
        args.extend_from_slice(extra);
        ok(d, &args);
    };
    train(&["--epochs", "6", "--out-dir", "full"]);
    // Stopped after epoch 4, so the trace runs past the last checkpoint.
    train(&["--epochs", "4", "--out-dir", "cut"]);
    train(&["--epochs", "6", "--out-dir", "cut", "--resume", "cut/epoch-00003.ckpt"]);

    let trace = fs::read_to_string(d.join("full/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 6 * 3);
    assert_eq!(trace, fs::read_to_string(d.join("cut/trace.csv")).unwrap());
    assert_eq!(fs::read(d.join("full/final.ckpt")).unwrap(), fs::read(d.join("cut/final.ckpt")).unwrap());
    assert!(json(d.join("cut/manifest.json"))["resumed_from"]["sha256"].is_string());

    let out = graphdiff(d, &["train", "--data", "er.gl", "--seed", "5", "--depth", "2", "--hidden", "4",
        "--epochs", "6", "--out-dir", "cut", "--resume", "cut/epoch-00003.ckpt"]);
    assert_eq!(out.status.code(), Some(1), "seed mismatch must be rejected");
}

#[test]
fn sampling_from_a_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_er(d, "er.gl");
    ok(d, &["train", "--data", "er.gl", "--seed", "1", "--epochs", "2", "--depth", "2", "--hidden", "4", "--out-dir", "run"]);
    let sample = |threads: &str, out: &str| {
        ok(d, &[
            "--threads", threads, "sample", "--checkpoint", "run/final.ckpt", "--algorithm", "simple",
            "--count", "1024", "--seed", "9", "--node-data", "er.gl", "--out", out,
            "--dump-trajectory", "traj.gl",
        ]);
    };
    sample("1", "a.gl");
    sample("4", "b.gl");
    assert_eq!(fs::read(d.join("a.gl")).unwrap(), fs::read(d.join("b.gl")).unwrap());
    assert_eq!(read_graphs(d.join("a.gl")).unwrap().len(), 1024);
    let traj = read_graphs(d.join("traj.gl")).unwrap();
    assert_eq!(traj.len(), 33);
    assert_eq!(traj.graphs()[32], read_graphs(d.join("a.gl")).unwrap().graphs()[0]);

    let out = graphdiff(d, &["sample", "--checkpoint", "run/final.ckpt", "--algorithm", "vb", "--count", "2", "--seed", "1", "--out", "c.gl"]);
    assert_eq!(out.status.code(), Some(1), "checkpoint sampling needs a node-count policy");
    let out = graphdiff(d, &["sample", "--checkpoint", "run/final.ckpt", "--algorithm", "vb", "--count", "2", "--seed", "1",
        "--nodes", "6", "--steps", "16", "--out", "c.gl"]);
    assert_eq!(out.status.code(), Some(1), "chain length must match the checkpoint");
}

#[test]
fn oracle_sampling_recovers_a_three_graph_dataset() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let data = "n=4\n0 1\n0 2\n0 3\n\nn=4\n0 2\n1 2\n2 3\n\nn=4\n0 1\n0 2\n1 3\n2 3\n";
    fs::write(d.join("three.gl"), data).unwrap();
    let train = read_graphs(d.join("three.gl")).unwrap();
    for algorithm in ["vb", "simple"] {
        ok(d, &[
            "sample", "--oracle", "three.gl", "--algorithm", algorithm, "--count", "10000", "--steps", "16", "--nodes", "4",
            "--seed", "4", "--out", "o.gl",
        ]);
        let mut hits: HashMap<usize, usize> = HashMap::new();
        let samples = read_graphs(d.join("o.gl")).unwrap();
        for g in &samples {
            if let Some(k) = train.iter().position(|t| t == g) {
                *hits.entry(k).or_default() += 1;
            }
        }
        let tv: f64 = 0.5
            * ((0..3).map(|k| (hits.get(&k).copied().unwrap_or(0) as f64 / 10000.0 - 1.0 / 3.0).abs()).sum::<f64>()
                + (10000 - hits.values().sum::<usize>()) as f64 / 10000.0);
        println!("{algorithm}: TV {tv:.4}");
        assert!(tv <= 0.05, "{algorithm}: TV {tv}");
        assert_eq!(json(d.join("o.manifest.json"))["source"]["kind"], "oracle");
    }
}

#[test]
fn self_evaluation_is_zero_and_reports_kernels() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["dataset", "--kind", "community-small", "--count", "20", "--seed", "3", "--out", "c.gl"]);
    ok(d, &["eval", "--generated", "c.gl", "--reference", "c.gl", "--out", "r.json"]);
    let r = json(d.join("r.json"));
    for key in ["degree", "clustering", "orbit", "avg"] {
        assert_eq!(r[key], 0.0, "{key}");
    }
    assert_eq!(r["kernels"]["degree"]["kind"], "gaussian-emd");
    assert_eq!(r["kernels"]["orbit"]["kind"], "gaussian-tv");
    assert_eq!(r["kernels"]["clustering_bins"], 100);
    assert_eq!(r["generated"]["graphs"], 20);

    let first = fs::read(d.join("r.json")).unwrap();
    ok(d, &["eval", "--generated", "c.gl", "--reference", "c.gl", "--out", "r.json"]);
    assert_eq!(first, fs::read(d.join("r.json")).unwrap());

    ok(d, &["dataset", "--kind", "er", "--n", "15", "--p", "0.6", "--count", "20", "--seed", "3", "--out", "e.gl"]);
    fs::write(d.join("k.toml"), "orbit = { kind = \"gaussian-tv\", sigma = 0.5 }\n").unwrap();
    ok(d, &["eval", "--generated", "e.gl", "--reference", "c.gl", "--out", "r2.json", "--config", "k.toml"]);
    let r = json(d.join("r2.json"));
    assert!(r["degree"].as_f64().unwrap() > 0.0);
    assert_eq!(r["kernels"]["orbit"]["sigma"], 0.5);
}

#[test]
fn malformed_inputs_fail() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_er(d, "er.gl");
    fs::write(d.join("bad.gl"), "n=3\n0 1\n1 1\n").unwrap();
    fs::write(d.join("junk.gl"), "hello\n").unwrap();
    fs::write(d.join("empty.gl"), "").unwrap();
    for bad in ["bad.gl", "junk.gl", "empty.gl", "missing.gl"] {
        let out = graphdiff(d, &["eval", "--generated", bad, "--reference", "er.gl", "--out", "r.json"]);
        assert_eq!(out.status.code(), Some(1), "{bad}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    assert!(!d.join("r.json").exists());
    let out = graphdiff(d, &["sample", "--checkpoint", "er.gl", "--algorithm", "vb", "--count", "2", "--seed", "1", "--nodes", "4", "--out", "s.gl"]);
    assert_eq!(out.status.code(), Some(1), "an edge list is not a checkpoint");
}

#[test]
fn noise_demo_writes_a_dot_ladder() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_er(d, "er.gl");
    ok(d, &["noise-demo", "--input", "er.gl", "--index", "2", "--seed", "1", "--levels", "5", "--out", "ladder.dot"]);
    let dot = fs::read_to_string(d.join("ladder.dot")).unwrap();
    assert!(dot.starts_with("graph noising {"));
    assert_eq!(dot.matches("subgraph cluster_t").count(), 5);
    assert!(dot.contains("label=\"t = 32, flip prob 0.500\""));
    let stdout = graphdiff(d, &["noise-demo", "--input", "er.gl", "--index", "2", "--seed", "1", "--levels", "5"]).stdout;
    assert_eq!(dot.as_bytes(), stdout.as_slice());
    let out = graphdiff(d, &["noise-demo", "--input", "er.gl", "--index", "8", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
}
