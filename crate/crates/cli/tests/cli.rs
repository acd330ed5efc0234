use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
characters = abcd
source_utterances = 24
target_utterances = 20
transcript_len = 2,3
hidden_dim = 8
feature_dim = 6
decoder_dim = 6
attention_dim = 6
epochs = 3
adapt_epochs = 2
batch_size = 4
beam_width = 3
max_len = 6
";

fn cmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmatch")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = cmatch(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pipeline(dir: &Path) {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let c = s(&cfg);
    let data = dir.join("data");
    let ckpt = dir.join("pre.ckpt");
    let adapted = dir.join("adapt");
    ok(&["--config", c, "--seed", "3", "generate", "--out", s(&data)]);
    ok(&["--config", c, "pretrain", "--source", s(&data.join("source")), "--out", s(&ckpt)]);
    let (src, tgt) = (data.join("source"), data.join("target"));
    ok(&[
        "--config", c, "adapt", "--method", "all", "--checkpoint", s(&ckpt), "--source", s(&src), "--target",
        s(&tgt), "--out", s(&adapted),
    ]);
    ok(&["--config", c, "decode", "--checkpoint", s(&ckpt), "--corpus", s(&tgt), "--out", s(&dir.join("hyp.tsv"))]);
    ok(&[
        "--config", c, "evaluate", "--transcripts", s(&dir.join("hyp.tsv")), "--reference", s(&tgt), "--out",
        s(&dir.join("eval.csv")),
    ]);
    ok(&[
        "--config", c, "compare-assignments", "--checkpoint", s(&ckpt), "--source", s(&src), "--target", s(&tgt),
        "--out", s(&dir.join("assign.csv")),
    ]);
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn full_pipeline_writes_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let d = dir.path();
    let first = |p: &str| fs::read_to_string(d.join(p)).unwrap().lines().next().unwrap().to_string();
    assert!(first("pre.ckpt.metrics.csv").starts_with("epoch,l_src,l_tgt,l_match,total"));
    assert_eq!(first("adapt/ablation.csv"), "method,target_cer,target_wer,char_errors,ref_chars,epochs,best_epoch");
    assert_eq!(first("adapt/centroids.csv"), "character,before,after");
    assert_eq!(first("eval.csv"), "id,ref_chars,char_errors,cer,ref_words,word_errors,wer,flag");
    assert!(first("assign.csv").starts_with("strategy,"));
    assert_eq!(fs::read_to_string(d.join("adapt/ablation.csv")).unwrap().lines().count(), 5);
    assert_eq!(fs::read(d.join("pre.ckpt")).unwrap(), fs::read(d.join("adapt/source-only.ckpt")).unwrap());
    let eval = fs::read_to_string(d.join("eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 22);
    assert!(eval.lines().last().unwrap().starts_with("TOTAL,"));
}

#[test]
fn same_seed_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (fa, fb) = (outputs(a.path()), outputs(b.path()));
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na != "run.cfg" {
            assert!(ba == bb, "{na} differs");
        }
    }
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "gama = 3\n").unwrap();
    let out = cmatch(&["--config", s(&cfg), "generate", "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));
}

#[test]
fn bad_flag_is_usage_error() {
    assert_eq!(cmatch(&["generate", "--bogus"]).status.code(), Some(2));
    assert_eq!(cmatch(&["adapt", "--method", "adversarial", "--out", "/nonexistent"]).status.code(), Some(2));
}

#[test]
fn missing_corpus_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmatch(&["pretrain", "--source", s(&dir.path().join("none")), "--out", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_documents_csv_columns() {
    let out = cmatch(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("method,target_cer,target_wer"));
    assert!(text.contains("Exit status"));
}
