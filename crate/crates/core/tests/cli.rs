use std::path::Path;
use std::process::{Command, Output};

use mne::interface::read_embeddings;
use mne::Checkpoint;

fn mne(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mne"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mne(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {stdout}"))
        .parse()
        .unwrap()
}

#[test]
fn train_and_evaluate_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let gen = ok(
        d,
        &[
            "gen",
            "--classes",
            "10",
            "--per-class",
            "6",
            "--dim",
            "8",
            "--sigma",
            "0.2",
            "--signal-rank",
            "4",
            "--seed",
            "1",
            "--out",
            "train.emb",
        ],
    );
    assert_eq!(value(&gen, "items"), 60.0);
    let f = read_embeddings(d.join("train.emb")).unwrap();
    assert_eq!((f.len(), f.dim), (60, 8));
    ok(
        d,
        &[
            "gen",
            "--classes",
            "5",
            "--per-class",
            "6",
            "--dim",
            "8",
            "--seed",
            "2",
            "--out",
            "test.emb",
        ],
    );

    ok(
        d,
        &[
            "train-retrieval",
            "--data",
            "train.emb",
            "--epochs",
            "2",
            "--k",
            "3",
            "--depth",
            "1",
            "--out",
            "m.ckpt",
            "--log",
            "log.jsonl",
        ],
    );
    let ckpt = Checkpoint::load(d.join("m.ckpt")).unwrap();
    assert_eq!(ckpt.params.depth(), 1);
    assert_eq!(ckpt.config.k, 3);
    let log = std::fs::read_to_string(d.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["total"].as_f64().unwrap().is_finite());
    }

    let eval = ok(
        d,
        &[
            "eval-retrieval",
            "--checkpoint",
            "m.ckpt",
            "--train",
            "train.emb",
            "--test",
            "test.emb",
        ],
    );
    let map = value(&eval, "map");
    assert!((0.0..=1.0).contains(&map));
    assert_eq!(value(&eval, "scored") + value(&eval, "skipped"), 5.0);

    let fs = ok(
        d,
        &[
            "eval-fewshot",
            "--checkpoint",
            "m.ckpt",
            "--data",
            "test.emb",
            "--episodes",
            "10",
            "--way",
            "3",
            "--queries",
            "2",
        ],
    );
    assert!(!fs.is_empty());
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = mne(d, &["train-retrieval", "--data", "missing.emb"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    std::fs::write(d.join("bad.emb"), b"XXXX").unwrap();
    let out = mne(d, &["eval-fewshot", "--data", "bad.emb"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("format"));

    let out = mne(d, &["gen", "--classes", "1", "--out", "x.emb"]);
    assert!(!out.status.success());
    assert!(!d.join("x.emb").exists());
}
