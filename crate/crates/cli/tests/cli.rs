//! CLI behavior: exit codes, file handling, and a small end-to-end run.

use sthlm_core::io::{load_embeddings, save_embeddings};
use sthlm_core::matrix::EmbeddingMatrix;
use sthlm_core::rng::{stream_rng, StreamDomain};
use rand::Rng;
use rand_distr::StandardNormal;
use std::path::Path;
use std::process::{Command, Output};

fn sthlm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sthlm"))
        .args(args)
        .current_dir(dir)
        .env("STHLM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn gaussian_file(dir: &Path, name: &str, n: usize, d: usize, shift: f32, idx: u64) {
    let mut rng = stream_rng(99, StreamDomain::Synth, idx);
    let data: Vec<f32> = (0..n * d)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            z as f32 + if i % d == 0 { shift } else { 0.0 }
        })
        .collect();
    let x = EmbeddingMatrix::new(n, d, data).unwrap();
    save_embeddings(&x, &dir.join(name)).unwrap();
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_exit(&sthlm(&["--help"], dir.path()), 0);
    assert_exit(&sthlm(&["search", "--bogus-flag"], dir.path()), 2);
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = sthlm(
        &["search", "--store", "nope", "--query-file", "nada"],
        dir.path(),
    );
    assert_exit(&out, 3);
}

#[test]
fn validation_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_file(dir.path(), "emb", 10, 4, 0.0, 0);
    // k too large for PCA
    let out = sthlm(
        &["pca", "--input", "emb", "--k", "99", "--out", "x"],
        dir.path(),
    );
    assert_exit(&out, 4);
    // corrupt meta
    std::fs::write(dir.path().join("bad.meta.json"), "{oops").unwrap();
    std::fs::write(dir.path().join("bad.f32"), []).unwrap();
    let out = sthlm(
        &["search", "--store", "bad", "--query-file", "emb"],
        dir.path(),
    );
    assert_exit(&out, 4);
}

#[test]
fn pca_reports_projected_shape() {
    // a 100x32 file projected to 8 dimensions
    let dir = tempfile::tempdir().unwrap();
    gaussian_file(dir.path(), "wide", 100, 32, 0.0, 1);
    let out = sthlm(
        &["pca", "--input", "wide", "--k", "8", "--out", "narrow"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let meta = std::fs::read_to_string(dir.path().join("narrow.meta.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&meta).unwrap();
    assert_eq!(v["dim"], 8);
    assert_eq!(v["count"], 100);
}

#[test]
fn evaluate_matches_hand_computed_ndcg() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("qrels.tsv"),
        "q1\thit\t1\nq2\ta\t2\nq2\tb\t1\nq3\tgone\t1\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("run.tsv"),
        "q1\t1\tmiss\t0.9\nq1\t2\thit\t0.8\nq2\t1\ta\t0.9\nq2\t2\tb\t0.8\nq3\t1\tx\t0.5\n",
    )
    .unwrap();
    let out = sthlm(
        &["evaluate", "--qrels", "qrels.tsv", "--run", "run.tsv", "--json"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let per: &Vec<serde_json::Value> = v["per_query"].as_array().unwrap();
    let get = |q: &str| -> f64 {
        per.iter()
            .find(|e| e["query"] == q)
            .unwrap()["ndcg@10"]
            .as_f64()
            .unwrap()
    };
    assert!((get("q1") - 0.63093).abs() < 1e-5);
    assert!((get("q2") - 1.0).abs() < 1e-12);
    assert_eq!(get("q3"), 0.0);
    assert_eq!(v["skipped"], 0);
}

#[test]
fn train_sample_search_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    // 2-class fixture
    let n_per = 150;
    let d = 4;
    let mut rng = stream_rng(5, StreamDomain::Synth, 10);
    let mut data = Vec::new();
    let mut pairs = String::new();
    for i in 0..2 * n_per {
        let class = i % 2;
        let center = if class == 0 { 3.0 } else { -3.0 };
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let mu = if j == 0 { center } else { 0.0 };
            data.push((mu + 0.5 * z) as f32);
        }
        pairs.push_str(&format!("{class}\t{i}\n"));
    }
    let targets = EmbeddingMatrix::new(2 * n_per, d, data).unwrap();
    save_embeddings(&targets, &dir.path().join("targets")).unwrap();
    let conds = EmbeddingMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    save_embeddings(&conds, &dir.path().join("conds")).unwrap();
    std::fs::write(dir.path().join("pairs.tsv"), pairs).unwrap();
    let mut docs = EmbeddingMatrix::new(
        2,
        d,
        vec![3.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0],
    )
    .unwrap();
    docs.set_ids(vec!["pos".into(), "neg".into()]).unwrap();
    save_embeddings(&docs, &dir.path().join("docs")).unwrap();

    let out = sthlm(
        &[
            "train", "--targets", "targets", "--conditions", "conds", "--pairs", "pairs.tsv",
            "--out", "model", "--epochs", "600", "--batch", "128", "--lr", "1e-3",
            "--warmup", "100", "--seed", "3",
        ],
        dir.path(),
    );
    assert_exit(&out, 0);

    for (row, expect) in [(0usize, "pos"), (1usize, "neg")] {
        let out = sthlm(
            &[
                "sample", "--model", "model", "--out", "samples", "--n", "40",
                "--steps", "10", "--condition-file", "conds",
                "--condition-row", &row.to_string(), "--seed", "7",
            ],
            dir.path(),
        );
        assert_exit(&out, 0);
        let samples = load_embeddings(&dir.path().join("samples")).unwrap();
        assert_eq!(samples.rows(), 40);

        // every sample row retrieves its own nearest doc; count matches
        let out = sthlm(
            &[
                "search", "--store", "docs", "--query-file", "samples", "--k", "1",
                "--metric", "euclidean", "--out", "hits.tsv",
            ],
            dir.path(),
        );
        assert_exit(&out, 0);
        let hits = std::fs::read_to_string(dir.path().join("hits.tsv")).unwrap();
        let total = hits.lines().count();
        let correct = hits
            .lines()
            .filter(|l| l.split('\t').nth(2) == Some(expect))
            .count();
        assert_eq!(total, 40);
        assert!(
            correct as f64 / total as f64 >= 0.95,
            "condition {row}: only {correct}/{total} retrieved {expect}"
        );
    }
}

#[test]
fn sample_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_file(dir.path(), "targets", 64, 3, 0.0, 20);
    let out = sthlm(
        &[
            "train", "--targets", "targets", "--out", "model", "--epochs", "4",
            "--batch", "32", "--seed", "1",
        ],
        dir.path(),
    );
    assert_exit(&out, 0);
    let run = |out_name: &str| {
        let out = sthlm(
            &[
                "sample", "--model", "model", "--out", out_name, "--n", "8", "--seed", "5",
            ],
            dir.path(),
        );
        assert_exit(&out, 0);
        std::fs::read(dir.path().join(format!("{out_name}.f32"))).unwrap()
    };
    assert_eq!(run("a"), run("a"));
    assert_eq!(run("a"), run("b"));
}

#[test]
fn local_sampling_requires_query() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_file(dir.path(), "targets", 64, 3, 0.0, 21);
    let out = sthlm(
        &[
            "train", "--targets", "targets", "--out", "model", "--epochs", "2",
            "--batch", "32", "--seed", "1",
        ],
        dir.path(),
    );
    assert_exit(&out, 0);
    let out = sthlm(
        &[
            "sample", "--model", "model", "--out", "s", "--local-t", "0.6",
        ],
        dir.path(),
    );
    assert_exit(&out, 4);
}

#[test]
fn vmf_classify_labels_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    let classes = dir.path().join("classes");
    std::fs::create_dir(&classes).unwrap();
    let unit = |v: Vec<f32>| -> Vec<f32> { sthlm_core::l2_normalize(&v).unwrap() };
    let mut rng = stream_rng(1, StreamDomain::Synth, 30);
    let mut draw = |center: f32| -> Vec<f32> {
        let mut v: Vec<f32> = (0..6)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z as f32
            })
            .collect();
        v[0] += center;
        unit(v)
    };
    let a: Vec<Vec<f32>> = (0..60).map(|_| draw(4.0)).collect();
    let b: Vec<Vec<f32>> = (0..60).map(|_| draw(-4.0)).collect();
    save_embeddings(&EmbeddingMatrix::from_rows(&a).unwrap(), &classes.join("up")).unwrap();
    save_embeddings(&EmbeddingMatrix::from_rows(&b).unwrap(), &classes.join("down")).unwrap();
    let test: Vec<Vec<f32>> = (0..4).map(|i| draw(if i % 2 == 0 { 4.0 } else { -4.0 })).collect();
    save_embeddings(&EmbeddingMatrix::from_rows(&test).unwrap(), &dir.path().join("t")).unwrap();

    let out = sthlm(
        &["vmf-classify", "--train-dir", "classes", "--test", "t", "--out", "pred.tsv"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let pred = std::fs::read_to_string(dir.path().join("pred.tsv")).unwrap();
    let labels: Vec<&str> = pred
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap())
        .collect();
    assert_eq!(labels, vec!["up", "down", "up", "down"]);
}

#[test]
fn coral_produces_unit_rows() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_file(dir.path(), "src", 300, 4, 0.5, 40);
    gaussian_file(dir.path(), "tgt", 300, 4, -0.5, 41);
    let out = sthlm(
        &["coral", "--source", "src", "--target", "tgt", "--out", "aligned"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let aligned = load_embeddings(&dir.path().join("aligned")).unwrap();
    for i in 0..aligned.rows() {
        let n: f64 = aligned
            .row(i)
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        assert!((n - 1.0).abs() < 1e-5);
    }
}
