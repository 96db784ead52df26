//! End-to-end command tests against the built binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deepnt"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn generate(dir: &Path, extra: &[&str]) {
    let status = bin()
        .args([
            "generate", "--model", "er", "--n", "16", "--p", "0.3", "--kind", "additive",
            "--delta", "0.4", "--Delta", "0.1", "--monitor-fraction", "0.5", "--seed", "7",
            "--out",
        ])
        .arg(dir)
        .args(extra)
        .status()
        .expect("spawn");
    assert!(status.success());
}

#[test]
fn generate_writes_all_files_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d1 = tmp.path().join("a");
    let d2 = tmp.path().join("b");
    generate(&d1, &[]);
    generate(&d2, &[]);
    for name in ["graph.edges", "metrics.txt", "observed.edges", "observations.csv"] {
        let a = read(&d1.join(name));
        let b = read(&d2.join(name));
        assert_eq!(a, b, "file {name} differs between identical runs");
        assert!(!a.is_empty());
    }
    let manifest = String::from_utf8(read(&d1.join("manifest.txt"))).unwrap();
    assert!(manifest.contains("command generate"));
    assert!(manifest.contains("seed = 7"));
}

#[test]
fn bad_flags_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    // BA with m = 0 fails model validation
    let status = bin()
        .args(["generate", "--model", "ba", "--n", "10", "--m", "0", "--out"])
        .arg(tmp.path().join("x"))
        .status()
        .expect("spawn");
    assert_eq!(status.code(), Some(2));

    // unknown flag: clap's own exit code
    let status = bin().args(["generate", "--no-such-flag"]).status().expect("spawn");
    assert_eq!(status.code(), Some(2));
}

#[test]
fn train_eval_reconstruct_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, &[]);

    let run = tmp.path().join("run");
    let status = bin()
        .args([
            "train", "--method", "deepnt", "--kind", "additive", "--hidden", "8",
            "--max-epochs", "4", "--patience", "4", "--n-paths", "2", "--max-hops", "4",
            "--seed", "7", "--data",
        ])
        .arg(&data)
        .arg("--out")
        .arg(&run)
        .status()
        .expect("spawn");
    assert!(status.success());
    for name in ["model.ckpt", "history.csv", "learned.edges", "learned_dense.csv", "manifest.txt"]
    {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let history = String::from_utf8(read(&run.join("history.csv"))).unwrap();
    assert!(history.starts_with("epoch,objective,train_loss,val_loss,lambda_min_Z,l1_norm,edges_above_tau"));
    assert_eq!(history.lines().count(), 1 + 5, "epoch 0 plus 4 training epochs");

    // evaluation with baselines
    let evaldir = tmp.path().join("eval");
    let output = bin()
        .args([
            "eval", "--seed", "7", "--nmf-rank", "3", "--nmf-iters", "40", "--mlp-hidden", "8",
            "--max-epochs", "10", "--record-timing", "false",
        ])
        .arg("--data")
        .arg(&data)
        .arg("--checkpoint")
        .arg(run.join("model.ckpt"))
        .arg("--with-baselines")
        .arg("--out")
        .arg(&evaldir)
        .output()
        .expect("spawn");
    assert!(output.status.success());
    let results = String::from_utf8(read(&evaldir.join("results.csv"))).unwrap();
    assert!(results
        .starts_with("method,kind,n,delta,Delta,seed,mape,mse,acc,f1,topo_p,topo_r,topo_f1,seconds"));
    let methods: Vec<&str> = results
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(methods, vec!["deepnt", "mean", "nmf", "mlp"]);

    // deterministic eval rerun with timing off
    let evaldir2 = tmp.path().join("eval2");
    let output2 = bin()
        .args([
            "eval", "--seed", "7", "--nmf-rank", "3", "--nmf-iters", "40", "--mlp-hidden", "8",
            "--max-epochs", "10", "--record-timing", "false",
        ])
        .arg("--data")
        .arg(&data)
        .arg("--checkpoint")
        .arg(run.join("model.ckpt"))
        .arg("--with-baselines")
        .arg("--out")
        .arg(&evaldir2)
        .output()
        .expect("spawn");
    assert!(output2.status.success());
    assert_eq!(read(&evaldir.join("results.csv")), read(&evaldir2.join("results.csv")));

    // reconstruction export
    let recdir = tmp.path().join("rec");
    let status = bin()
        .args(["reconstruct", "--block", "4"])
        .arg("--data")
        .arg(&data)
        .arg("--checkpoint")
        .arg(run.join("model.ckpt"))
        .arg("--out")
        .arg(&recdir)
        .status()
        .expect("spawn");
    assert!(status.success());
    for stem in
        ["adjacency_true", "adjacency_observed_minus_true", "adjacency_learned_minus_true"]
    {
        assert!(recdir.join(format!("{stem}.csv")).exists());
        assert!(recdir.join(format!("{stem}.pgm")).exists());
        assert!(recdir.join(format!("{stem}.scale.txt")).exists());
    }
}

#[test]
fn eval_on_missing_checkpoint_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, &[]);
    let status = bin()
        .args(["eval"])
        .arg("--data")
        .arg(&data)
        .arg("--checkpoint")
        .arg(tmp.path().join("nope.ckpt"))
        .arg("--out")
        .arg(tmp.path().join("out"))
        .status()
        .expect("spawn");
    assert_eq!(status.code(), Some(3));
}

#[test]
fn ablate_grid_emits_one_row_per_method_and_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ablate");
    let output = bin()
        .args([
            "ablate", "--model", "er", "--n", "14", "--p", "0.3", "--kind", "additive",
            "--monitor-fraction", "0.5", "--seeds", "1,2", "--hidden", "8", "--max-epochs", "3",
            "--patience", "3", "--n-paths", "2", "--max-hops", "4", "--record-timing", "false",
            "--grid", "delta=0.3,0.4",
        ])
        .arg("--out")
        .arg(&out)
        .output()
        .expect("spawn");
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let results = String::from_utf8(read(&out.join("results.csv"))).unwrap();
    // header + 2 grid cells x 3 methods
    assert_eq!(results.lines().count(), 1 + 6);
    for line in results.lines().skip(1) {
        assert!(line.contains(",mean,"), "aggregate rows only: {line}");
    }
}

#[test]
fn config_file_is_applied_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "model = er\nn = 16\np = 0.3\nkind = additive\ndelta = 0.4\nDelta = 0.1\nmonitor_fraction = 0.5\nseed = 7\n",
    )
    .unwrap();
    let d1 = tmp.path().join("from-config");
    let status = bin()
        .args(["generate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&d1)
        .status()
        .expect("spawn");
    assert!(status.success());

    let d2 = tmp.path().join("flags");
    generate(&d2, &[]);
    assert_eq!(read(&d1.join("graph.edges")), read(&d2.join("graph.edges")));

    // a flag overrides the file: different seed changes the graph
    let d3 = tmp.path().join("override");
    let status = bin()
        .args(["generate", "--config"])
        .arg(&cfg)
        .args(["--seed", "8", "--out"])
        .arg(&d3)
        .status()
        .expect("spawn");
    assert!(status.success());
    assert_ne!(read(&d1.join("graph.edges")), read(&d3.join("graph.edges")));
    let manifest = String::from_utf8(read(&d3.join("manifest.txt"))).unwrap();
    assert!(manifest.contains("seed = 8"));
}
