use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const KINDNESS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/kindness.tsv");

fn emplite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emplite"))
        .args(args)
        .output()
        .expect("run emplite")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic corpus written by the CLI itself.
fn synth(dir: &TempDir) -> PathBuf {
    let out = dir.path().join("data");
    let o = emplite(&["synth", "--out-dir", s(&out), "--small", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn quick_train(data: &Path, model: &Path) -> Output {
    emplite(&[
        "train",
        "--train",
        s(&data.join("train.tsv")),
        "--dev",
        s(&data.join("dev.tsv")),
        "--glove",
        s(&data.join("vectors.txt")),
        "--out",
        s(model),
        "--epochs",
        "2",
    ])
}

#[test]
fn missing_input_is_a_usage_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.tsv");
    let o = emplite(&["train", "--train", s(&missing), "--out", s(&dir.path().join("m.empl"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nope.tsv"), "{}", stderr(&o));
}

#[test]
fn out_of_range_threshold_is_rejected() {
    let dir = TempDir::new().unwrap();
    let o = emplite(&[
        "train",
        "--train",
        KINDNESS,
        "--variant",
        "base",
        "--threshold",
        "1.1",
        "--out",
        s(&dir.path().join("m.empl")),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!dir.path().join("m.empl").exists());
}

#[test]
fn ground_truth_as_predictions_scores_one() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let test = data.join("test.tsv");
    // Token and probability columns of the ground truth.
    let pred: String = fs::read_to_string(&test)
        .unwrap()
        .lines()
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            if c.len() < 3 {
                "\n".to_string()
            } else {
                format!("{}\t{}\n", c[0], c[2])
            }
        })
        .collect();
    let pred_path = dir.path().join("pred.txt");
    fs::write(&pred_path, pred).unwrap();
    let o = emplite(&["eval", "--pred-file", s(&pred_path), "--test", s(&test), "--kv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    for key in ["match_1", "match_2", "match_3", "match_4", "average"] {
        assert!(out.contains(&format!("{key}=1.0000")), "{out}");
    }
    assert!(fs::read_to_string(dir.path().join("pred.txt.manifest")).unwrap().contains("command=eval"));
}

#[test]
fn prediction_length_mismatch_is_an_alignment_error() {
    let dir = TempDir::new().unwrap();
    let pred = dir.path().join("pred.txt");
    fs::write(&pred, "Kindness\t0.9\nis\t0.1\nlike\t0.1\n").unwrap();
    let o = emplite(&["eval", "--pred-file", s(&pred), "--test", KINDNESS]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn malformed_input_reports_file_and_line() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "Dream\tB|O\nbig\tB|X\n").unwrap();
    let o = emplite(&["pos-stats", "--train", s(&bad), "--pos", "builtin"]);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    assert!(err.contains("bad.tsv") && err.contains("line 2"), "{err}");
}

#[test]
fn prepare_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("split.txt");
    fs::write(
        &raw,
        "id\ttoken\tannotations\tx\ty\tpos\n\
         s1\tNever\tB|B|O\t.\t.\tRB\n\
         s1\tgive\tI|O|O\t.\t.\tVB\n\
         s1\tup\tI|O|B\t.\t.\tRP\n\
         \n\
         s2\tDream\tB|B|B\t.\t.\tVB\n\
         s2\tbig\tO|I|B\t.\t.\tJJ\n",
    )
    .unwrap();
    let run = |out: &Path| {
        let o = emplite(&[
            "prepare",
            "--input",
            s(&raw),
            "--format",
            "semeval",
            "--output",
            s(out),
            "--pos",
            "sidecar",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(out.join("split.tsv")).unwrap()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("Never\tB|B|O\t0.6667\tRB\n"), "{text}");
    let manifest = fs::read_to_string(dir.path().join("a/prepare.manifest")).unwrap();
    assert!(manifest.contains("input.split.sha256="));
}

#[test]
fn train_predict_heatmap_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let model = dir.path().join("model.empl");
    let o = quick_train(&data, &model);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.path().join("model.empl.manifest")).unwrap();
    assert_eq!(manifest.matches("[run]").count(), 1);
    for key in ["input.train.sha256=", "config.variant=emplite_full", "seed=0", "best_epoch=", "wall_time_s="] {
        assert!(manifest.contains(key), "missing {key} in\n{manifest}");
    }

    let o = emplite(&["predict", "--model", s(&model), "--text", "Never give up on your dreams!"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 7, "{lines:?}");
    for l in &lines {
        let p: f64 = l.split('\t').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    let html = dir.path().join("heat.html");
    let o = emplite(&["heatmap", "--model", s(&model), "--text", "Dream big", "--style", "html", "--out", s(&html)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read_to_string(&html).unwrap().contains("rgba(255,0,0,"));

    let saved = dir.path().join("test.pred");
    let o = emplite(&[
        "eval",
        "--model",
        s(&model),
        "--test",
        s(&data.join("test.tsv")),
        "--kv",
        "--save-pred",
        s(&saved),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let from_model = stdout(&o);
    let o = emplite(&["eval", "--pred-file", s(&saved), "--test", s(&data.join("test.tsv")), "--kv"]);
    assert_eq!(stdout(&o), from_model);
}

#[test]
fn corrupted_bundle_is_rejected() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let model = dir.path().join("model.empl");
    assert_eq!(code(&quick_train(&data, &model)), 0);
    let mut bytes = fs::read(&model).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    fs::write(&model, bytes).unwrap();
    let o = emplite(&["predict", "--model", s(&model), "--text", "hello world"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("CRC32"), "{}", stderr(&o));
}

#[test]
fn augment_appends_copies() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let out = dir.path().join("aug.tsv");
    let o = emplite(&[
        "augment",
        "--input",
        s(&data.join("train.tsv")),
        "--strategy",
        "reverse",
        "--fraction",
        "0.5",
        "--output",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let count = |p: &Path| fs::read_to_string(p).unwrap().split("\n\n").filter(|b| !b.trim().is_empty()).count();
    assert_eq!(count(&out), count(&data.join("train.tsv")) * 3 / 2);
    let o = emplite(&["augment", "--input", s(&out), "--strategy", "shuffle", "--fraction", "0.5", "--output", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn pos_stats_lists_both_distributions() {
    let o = emplite(&["pos-stats", "--train", KINDNESS, "--pos", "builtin", "--top", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("all tokens") && out.contains("emphasis probability >= 0.4"), "{out}");
    assert!(out.contains("NN"), "{out}");
}
