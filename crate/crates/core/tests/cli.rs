use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use embprop::diagnostics::gaussian_clusters;
use embprop::io::{load_embeddings, read_report, save_embeddings, EmbeddingFormat};

fn embprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embprop"))
        .args(args)
        .env_remove("EP_THREADS")
        .output()
        .expect("spawn embprop")
}

fn write_clusters(dir: &Path, name: &str) -> String {
    let set = gaussian_clusters(6, 30, 8, 0.8, 3).unwrap();
    let path = dir.join(name);
    save_embeddings(&set, &path, EmbeddingFormat::Auto).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn evaluate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_clusters(dir.path(), "set.csv");
    let out = dir.path().join("report.json");
    let res = embprop(&[
        "evaluate", "--data", &data, "--n-way", "5", "--k-shot", "1", "--q-queries", "5",
        "--episodes", "20", "--alpha", "0.5", "--mode", "full", "--classifier", "lp",
        "--seed", "3", "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = read_report(&out).unwrap();
    assert_eq!(report.episodes, 20);
    assert_eq!(report.accuracies.len(), 20);
    assert_eq!(report.seed, 3);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    for key in ["config", "seed", "episodes", "accuracies", "mean", "ci95", "wall_ms"] {
        assert!(json.get(key).is_some(), "missing key {key}");
    }
}

#[test]
fn evaluate_is_reproducible_across_thread_settings() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_clusters(dir.path(), "set.epb");
    let mut lists = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("r{threads}.json"));
        let res = Command::new(env!("CARGO_BIN_EXE_embprop"))
            .args([
                "evaluate", "--data", &data, "--n-way", "3", "--q-queries", "4", "--episodes",
                "30", "--out", out.to_str().unwrap(),
            ])
            .env("EP_THREADS", threads)
            .output()
            .unwrap();
        assert!(res.status.success());
        lists.push(read_report(&out).unwrap().accuracies);
    }
    assert_eq!(lists[0], lists[1]);
}

#[test]
fn ssl_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_clusters(dir.path(), "set.csv");
    let out = dir.path().join("ssl.json");
    let res = embprop(&[
        "ssl", "--data", &data, "--n-way", "3", "--k-shot", "2", "--q-queries", "3",
        "--episodes", "5", "--unlabeled", "6", "--labeled-fraction", "0.5", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = read_report(&out).unwrap();
    assert_eq!(report.config.u_unlabeled, 6);
    assert_eq!(report.config.labeled_fraction, 0.5);
}

#[test]
fn propagate_and_moons_write_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let moons = dir.path().join("moons.csv");
    let proj = dir.path().join("proj.csv");
    let res = embprop(&[
        "moons", "--n", "30", "--noise", "0.1", "--seed", "7", "--out", moons.to_str().unwrap(),
        "--projections", proj.to_str().unwrap(), "--batch-size", "10", "--batches", "3",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(load_embeddings(&moons, EmbeddingFormat::Auto).unwrap().len(), 60);
    let lines = fs::read_to_string(&proj).unwrap().lines().count();
    assert_eq!(lines, 1 + 30);

    let out = dir.path().join("prop.epb");
    let res = embprop(&[
        "propagate", "--data", moons.to_str().unwrap(), "--alpha", "0.3", "--mode", "diag",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let prop = load_embeddings(&out, EmbeddingFormat::Auto).unwrap();
    assert_eq!((prop.len(), prop.dim()), (60, 2));
}

#[test]
fn interp_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_clusters(dir.path(), "set.csv");
    let out = dir.path().join("interp.csv");
    let res = embprop(&[
        "interp", "--data", &data, "--n-way", "2", "--k-shot", "2", "--pairs", "3", "--grid",
        "5", "--alpha", "0.5", "--seed", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("pair,i,j,weight,probability,max_jump"));
    assert_eq!(lines.count(), 15);
}

#[test]
fn exit_codes() {
    assert_eq!(embprop(&["--help"]).status.code(), Some(0));
    assert_eq!(embprop(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(embprop(&["evaluate", "--data", "x.csv"]).status.code(), Some(1));
    assert_eq!(
        embprop(&["evaluate", "--data", "x.csv", "--mode", "sideways", "--out", "r.json"])
            .status
            .code(),
        Some(1)
    );

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let missing = dir.path().join("missing.csv");
    let res = embprop(&[
        "evaluate", "--data", missing.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,label,split,f0\na,x,,nope\n").unwrap();
    let res = embprop(&["evaluate", "--data", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));

    let data = write_clusters(dir.path(), "set.csv");
    let res = embprop(&["evaluate", "--data", &data, "--n-way", "9", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "too few classes is a data error");
    let res = embprop(&["evaluate", "--data", &data, "--alpha", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}
