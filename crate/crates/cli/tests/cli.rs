use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_coref");

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/sample.conll")
}

fn coref(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A workspace with the fixture as train and dev data and a small model.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::copy(fixture(), dir.path().join("sample.conll")).unwrap();
    fs::write(
        dir.path().join("run.toml"),
        r#"seed = 3

[data]
train = "sample.conll"
dev = "sample.conll"

[segmentation]
variant = "overlap"
max_segment_len = 32

[encoder]
hidden_size = 8
max_positions = 64

[scorer]
hidden_size = 12
feature_size = 4

[train]
epochs = 1
"#,
    )
    .unwrap();
    dir
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let dir = workspace();
    for out in ["a.ckpt", "b.ckpt"] {
        let o = coref(dir.path(), &["train", "--config", "run.toml", "--seed", "7", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a.ckpt")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, fs::read(dir.path().join("b.ckpt")).unwrap());

    let o = coref(dir.path(), &["train", "--config", "run.toml", "--seed", "8", "--out", "c.ckpt"]);
    assert!(o.status.success());
    assert_ne!(a, fs::read(dir.path().join("c.ckpt")).unwrap());
}

#[test]
fn evaluate_prints_a_metric_table() {
    let dir = workspace();
    assert!(coref(dir.path(), &["train", "--config", "run.toml", "--out", "m.ckpt"]).status.success());
    let o = coref(dir.path(), &["evaluate", "--gold", "sample.conll", "--model", "m.ckpt"]);
    assert!(o.status.success());
    let table = stdout(&o);
    for row in ["MUC", "B3", "CEAF_phi4", "CoNLL"] {
        assert!(table.lines().any(|l| l.starts_with(row)), "{table}");
    }

    let o = coref(dir.path(), &["evaluate", "--gold", "sample.conll", "--pred", "sample.conll", "--out", "s.csv"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.lines().last().unwrap().ends_with(",1.000000"), "{csv}");
}

#[test]
fn sweep_writes_one_row_per_length() {
    let dir = workspace();
    let o = coref(dir.path(), &["sweep", "--config", "run.toml", "--lengths", "16,32"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "{csv}");
    assert!(lines[0].starts_with("max_segment_len,"));
    assert!(lines[1].starts_with("16,") && lines[2].starts_with("32,"));
    assert_eq!(stdout(&coref(dir.path(), &["sweep", "--config", "run.toml", "--lengths", "16,32"])), csv);
}

#[test]
fn buckets_on_perfect_predictions() {
    let dir = workspace();
    let o = coref(dir.path(), &["buckets", "--gold", "sample.conll", "--pred", "sample.conll"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 8);
    assert!(csv.lines().last().unwrap().starts_with("All,5,"), "{csv}");
}

#[test]
fn error_totals_from_annotations() {
    // per-category counts in category order; totals 93 and 74
    let counts = [("base", [12, 15, 17, 14, 18, 17]), ("large", [7, 9, 13, 12, 16, 17])];
    let names = ["related entities", "lexical", "pronouns", "mention paraphrasing", "conversation", "misc"];
    let mut file = String::from("doc_key\tcluster_id\tcategories\tsystem\n");
    for (system, per) in counts {
        let mut id = 0;
        for (name, n) in names.iter().zip(per) {
            for _ in 0..n {
                writeln!(file, "doc{}\t{id}\t{name}\t{system}", id % 7).unwrap();
                id += 1;
            }
        }
    }
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("ann.tsv"), file).unwrap();
    let o = coref(dir.path(), &["errors", "ann.tsv"]);
    assert!(o.status.success());
    let table = stdout(&o);
    assert_eq!(table.lines().last().unwrap(), "total\t93\t74", "{table}");
    assert!(table.contains("pronouns\t17\t13"));
}

#[test]
fn exit_codes() {
    let dir = workspace();
    assert_eq!(coref(dir.path(), &["evaluate", "--bogus"]).status.code(), Some(1));
    assert_eq!(coref(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(coref(dir.path(), &["--help"]).status.code(), Some(0));
    // segment length beyond the encoder's positions
    let o = coref(dir.path(), &["sweep", "--config", "run.toml", "--lengths", "128"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_positions"));
    fs::write(dir.path().join("bad.tsv"), "d\t1\tweird\tbase\n").unwrap();
    assert_eq!(coref(dir.path(), &["errors", "bad.tsv"]).status.code(), Some(1));
    let o = coref(dir.path(), &["evaluate", "--gold", "missing.conll", "--pred", "missing.conll"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tokenize_lists_pieces_per_token() {
    let dir = workspace();
    let o = coref(dir.path(), &["tokenize", "--gold", "sample.conll", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1139);
    assert!(text.lines().all(|l| l.split('\t').count() == 4));
}
