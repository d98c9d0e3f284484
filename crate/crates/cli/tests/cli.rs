use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qsat_cli::{run, Manifest, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};

fn qsat(args: &[&str]) -> i32 {
    let mut all = vec!["qsat"];
    all.extend_from_slice(args);
    run(all)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 60-image corpus written by `gen-corpus`.
fn corpus(dir: &Path) -> PathBuf {
    let out = dir.join("corpus");
    assert_eq!(qsat(&["gen-corpus", "--out", s(&out), "--n-images", "60", "--seed", "4"]), EXIT_OK);
    out.join("corpus.json")
}

fn manifest(out: &Path) -> Manifest {
    Manifest::read(&out.join("manifest.json")).unwrap()
}

/// Every file in `out` other than the manifest is listed with its digest.
fn assert_manifest_complete(out: &Path) {
    let m = manifest(out);
    let mut files: Vec<String> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    files.sort();
    let mut listed: Vec<String> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    listed.sort();
    assert_eq!(files, listed, "{}", out.display());
    for a in &m.artifacts {
        assert_eq!(*a, qsat_cli::Artifact::of(&out.join(&a.path), a.path.clone()).unwrap());
    }
}

const SHORT: [&str; 10] = ["--epochs", "3", "--xe-epochs", "2", "--d-model", "8", "--max-len", "10", "--min-count", "1"];

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let out = dir.path().join("x");
    assert_eq!(qsat(&["--help"]), EXIT_OK);
    assert_eq!(qsat(&["train", "--out", s(&out), "--data", s(&data), "--bogus"]), EXIT_USAGE);
    assert_eq!(qsat(&["train", "--out", s(&out), "--data", s(&data), "--method", "ppo"]), EXIT_USAGE);
    assert_eq!(qsat(&["train", "--out", s(&out), "--data", s(&data), "--k", "1"]), EXIT_USAGE);
    assert_eq!(qsat(&["train", "--out", s(&out), "--data", s(&data), "--method", "scst", "--center-level"]), EXIT_USAGE);
    assert_eq!(qsat(&["eval", "--out", s(&out), "--data", s(&data), "--model", "/no/such/model.json"]), EXIT_DATA);
    assert_eq!(qsat(&["train", "--out", s(&out), "--data", "/no/such/corpus.json"]), EXIT_DATA);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"images": [{"id": 1, "split": "train"}]}"#).unwrap();
    assert_eq!(qsat(&["annotate", "--out", s(&out), "--data", s(&bad)]), EXIT_DATA);

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "learning_rate = 0.1\n").unwrap();
    assert_eq!(qsat(&["train", "--out", s(&out), "--data", s(&data), "--config", s(&cfg)]), EXIT_USAGE);

    let mut args = vec!["train", "--out", s(&out), "--data", s(&data), "--lr", "1e12", "--eval-split", "none"];
    args.extend_from_slice(&SHORT);
    assert_eq!(qsat(&args), EXIT_NUMERICAL);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_qsat");
    let status = Command::new(bin).arg("--version").status().unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
    let status = Command::new(bin).args(["eval", "--out", "/tmp/unused"]).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_USAGE));
    let status = Command::new(bin)
        .args(["annotate", "--out", "/tmp/unused", "--data", "/no/such/file.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_DATA));
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "lr = 0.03\nk = 3\nepochs = 3\nxe_epochs = 2\nd_model = 8\nmin_count = 1\nseed = 9\n").unwrap();
    let out = dir.path().join("t");
    let code = qsat(&[
        "train", "--out", s(&out), "--data", s(&data), "--config", s(&cfg), "--lr", "0.04", "--max-len", "10",
    ]);
    assert_eq!(code, EXIT_OK);
    let m = manifest(&out);
    let train = &m.config["train"];
    assert_eq!(train["lr"], 0.04); // flag
    assert_eq!(train["k"], 3); // file
    assert_eq!(train["batch_size"], 8); // default
    assert_eq!(train["seed"], 9);
    assert_eq!(m.seed, 9);
    assert_eq!(m.config["d_model"], 8);
    assert_eq!(m.config["max_len"], 10);
}

#[test]
fn every_command_lists_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    assert_manifest_complete(&dir.path().join("corpus"));

    let ann = dir.path().join("ann");
    assert_eq!(qsat(&["annotate", "--out", s(&ann), "--data", s(&data), "--mode", "rl", "--min-count", "1"]), EXIT_OK);
    assert_manifest_complete(&ann);
    assert_eq!(manifest(&ann).inputs[0].path, s(&data));

    let tr = dir.path().join("train");
    let mut args = vec!["train", "--out", s(&tr), "--data", s(&data)];
    args.extend_from_slice(&SHORT);
    assert_eq!(qsat(&args), EXIT_OK);
    assert_manifest_complete(&tr);
    let log = fs::read_to_string(tr.join("train.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let model = tr.join("model.json");
    let ev = dir.path().join("eval");
    assert_eq!(
        qsat(&["eval", "--out", s(&ev), "--data", s(&data), "--model", s(&model), "--min-count", "1"]),
        EXIT_OK
    );
    assert_manifest_complete(&ev);
    let rows = fs::read_to_string(ev.join("metrics.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 1);
    assert!(rows.contains("\"level\":2"));

    let cands = dir.path().join("cands.jsonl");
    let ds = qsat::data::load_coco_json(&data, 1).unwrap();
    let first = &ds.test[0];
    fs::write(
        &cands,
        format!("{{\"image_id\": \"{}\", \"caption\": \"{}\"}}\n", first.image_id, first.refs()[0].text()),
    )
    .unwrap();
    let sc = dir.path().join("score");
    assert_eq!(qsat(&["score", "--out", s(&sc), "--data", s(&data), "--cands", s(&cands)]), EXIT_OK);
    assert_manifest_complete(&sc);
    assert_eq!(manifest(&sc).inputs.len(), 2);

    fs::write(&cands, "{\"image_id\": \"nope\", \"caption\": \"a b\"}\n").unwrap();
    assert_eq!(qsat(&["score", "--out", s(&sc), "--data", s(&data), "--cands", s(&cands)]), EXIT_DATA);
}

#[test]
fn sweep_of_an_uncontrolled_model_gives_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let tr = dir.path().join("init");
    let code = qsat(&[
        "train", "--out", s(&tr), "--data", s(&data), "--method", "scst", "--epochs", "0", "--xe-epochs", "0",
        "--d-model", "8", "--min-count", "1",
    ]);
    assert_eq!(code, EXIT_OK);
    let ev = dir.path().join("eval");
    let model = tr.join("model.json");
    let code = qsat(&["eval", "--out", s(&ev), "--data", s(&data), "--model", s(&model), "--sweep", "--min-count", "1"]);
    assert_eq!(code, EXIT_OK);
    let rows: Vec<serde_json::Value> = fs::read_to_string(ev.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        for key in ["n_images", "bleu1", "bleu4", "rouge_l", "cider"] {
            assert_eq!(r[key], rows[0][key], "{key}");
        }
    }
}

#[test]
fn sat_with_a_switch_runs_the_switchable_trainer() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let out = dir.path().join("t");
    let mut args = vec!["train", "--out", s(&out), "--data", s(&data), "--method", "sat", "--retain-low-reward"];
    args.extend_from_slice(&SHORT);
    assert_eq!(qsat(&args), EXIT_OK);
    let m = manifest(&out);
    assert_eq!(m.config["method"], "sat");
    assert_eq!(m.config["runs_as"], "qsat");
    assert_eq!(m.config["train"]["enable_center_level"], false);
    assert_eq!(m.config["train"]["enable_low_reward_retention"], true);
}

#[test]
fn continuing_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let xe = dir.path().join("xe");
    let mut args = vec!["train", "--out", s(&xe), "--data", s(&data), "--method", "xe"];
    args.extend_from_slice(&SHORT);
    assert_eq!(qsat(&args), EXIT_OK);
    let model = xe.join("model.json");

    let rl = dir.path().join("rl");
    let code = qsat(&[
        "train", "--out", s(&rl), "--data", s(&data), "--init", s(&model), "--epochs", "4", "--xe-epochs", "3",
        "--min-count", "1",
    ]);
    assert_eq!(code, EXIT_OK);
    let log = fs::read_to_string(rl.join("train.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(log.contains("\"phase\":\"qsat\""));
    assert_eq!(manifest(&rl).inputs.len(), 2);

    // a controlled checkpoint cannot seed the uncontrolled baseline
    let code = qsat(&[
        "train", "--out", s(&rl), "--data", s(&data), "--init", s(&model), "--method", "scst", "--min-count", "1",
    ]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn identical_runs_produce_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for out in &outs {
        let mut args = vec!["train", "--out", s(out), "--data", s(&data), "--seed", "3"];
        args.extend_from_slice(&SHORT);
        assert_eq!(qsat(&args), EXIT_OK);
    }
    for f in ["model.json", "train.log.jsonl", "manifest.json"] {
        let a = fs::read(outs[0].join(f)).unwrap();
        let b = fs::read(outs[1].join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}
