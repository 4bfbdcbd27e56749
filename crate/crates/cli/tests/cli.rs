use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn iam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iam"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn iam")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = iam(dir, args);
    assert!(
        out.status.success(),
        "iam {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A small synthetic dataset plus its split manifest.
fn fixture() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_path_buf();
    ok(&d, &["synth", "--users", "120", "--items", "25", "--out", "d.tsv", "--seed", "3"]);
    ok(&d, &["split", "--dataset", "d.tsv", "--out", "s.txt", "--seed", "7"]);
    (dir, d)
}

const FAST: [&str; 4] = ["--epochs", "4", "--latent-dim", "4"];

#[test]
fn split_is_deterministic() {
    let (_t, d) = fixture();
    ok(&d, &["split", "--dataset", "d.tsv", "--out", "again.txt", "--seed", "7"]);
    ok(&d, &["split", "--dataset", "d.tsv", "--out", "other.txt", "--seed", "8"]);
    let a = std::fs::read(d.join("s.txt")).unwrap();
    assert_eq!(a, std::fs::read(d.join("again.txt")).unwrap());
    assert_ne!(a, std::fs::read(d.join("other.txt")).unwrap());
}

#[test]
fn dominant_penalty_gives_empty_interview() {
    let (_t, d) = fixture();
    let mut args = vec!["train", "--dataset", "d.tsv", "--split", "s.txt", "--model", "iam-cold"];
    args.extend(["--lambda2", "1e9", "--out", "cold.bin", "--interview-out", "iv.tsv"]);
    args.extend(FAST);
    ok(&d, &args);
    let text = std::fs::read_to_string(d.join("iv.tsv")).unwrap();
    assert!(text.contains("size=0"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 0);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let (_t, d) = fixture();
    std::fs::write(d.join("run.conf"), "dataset = d.tsv\nlambda2 = 1e9\nepochs = 3\nlatent_dim = 4\n").unwrap();
    let base = ["--config", "run.conf", "train", "--split", "s.txt", "--model", "iam-cold", "--out", "m.bin"];
    ok(&d, &base);
    assert!(std::fs::read_to_string(d.join("m.interview.tsv")).unwrap().contains("size=0"));
    let mut relaxed = base.to_vec();
    relaxed.extend(["--lambda2", "0"]);
    ok(&d, &relaxed);
    assert!(std::fs::read_to_string(d.join("m.interview.tsv")).unwrap().contains("size=25"));
}

#[test]
fn distinct_exit_codes() {
    let (_t, d) = fixture();
    assert_eq!(iam(&d, &["split", "--no-such-flag"]).status.code(), Some(2));
    let missing = iam(&d, &["split", "--dataset", "absent.tsv", "--out", "x"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(!missing.stderr.is_empty());

    let mut args = vec!["train", "--dataset", "d.tsv", "--split", "s.txt", "--model", "iam-cold", "--out", "m.bin"];
    args.extend(FAST);
    ok(&d, &args);
    let mut bytes = std::fs::read(d.join("m.bin")).unwrap();
    bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(d.join("future.bin"), bytes).unwrap();
    let version = iam(&d, &["export-pca", "--model", "future.bin", "--out", "p.tsv"]);
    assert_eq!(version.status.code(), Some(4));

    std::fs::write(d.join("bad.tsv"), "u1\ti1\tnot-a-number\n").unwrap();
    assert_eq!(iam(&d, &["ingest", "--dataset", "bad.tsv"]).status.code(), Some(5));
}

#[test]
fn split_must_match_dataset() {
    let (_t, d) = fixture();
    ok(&d, &["synth", "--users", "60", "--items", "25", "--out", "small.tsv"]);
    let out = iam(&d, &["evaluate", "--dataset", "small.tsv", "--split", "s.txt", "--method", "iam", "--protocol", "warm"]);
    assert_eq!(out.status.code(), Some(5));
}

fn interview(d: &Path, script: &str) -> String {
    let mut child = Command::new(env!("CARGO_BIN_EXE_iam"))
        .current_dir(d)
        .args(["interview", "--model", "m.bin", "--top-k", "4", "--names", "names.tsv"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

/// The recommendation block printed last.
fn last_recs(text: &str) -> String {
    text.rsplit("recommendations:").next().unwrap().lines().filter(|l| l.contains(". ")).collect::<Vec<_>>().join("\n")
}

#[test]
fn scripted_interview_session() {
    let (_t, d) = fixture();
    let mut args = vec!["train", "--dataset", "d.tsv", "--split", "s.txt", "--model", "iam-csw", "--out", "m.bin"];
    args.extend(["--lambda2", "0.05"]);
    args.extend(FAST);
    ok(&d, &args);
    let names: String = (0..25).map(|i| format!("{i}\tTitle {i}\n")).collect();
    std::fs::write(d.join("names.tsv"), names).unwrap();
    let model_before = std::fs::read(d.join("m.bin")).unwrap();

    let plain = interview(&d, "like\ndislike\ndone\nrecs\nquit\n");
    assert!(plain.contains("Title "));
    assert_eq!(plain, interview(&d, "like\ndislike\ndone\nrecs\nquit\n"));

    let recs = last_recs(&plain);
    let target = (0..25)
        .map(|i| i.to_string())
        .find(|id| !plain.contains(&format!("[{id}]")))
        .unwrap();
    let undone = interview(&d, &format!("like\ndislike\ndone\nlike {target}\nundo\nquit rep.txt\n"));
    assert!(undone.contains("removed"));
    assert_eq!(recs, last_recs(&undone));
    assert!(std::fs::read_to_string(d.join("rep.txt")).unwrap().contains("# representation"));
    assert_eq!(model_before, std::fs::read(d.join("m.bin")).unwrap());
}

#[test]
fn evaluate_sweep_and_exports() {
    let (_t, d) = fixture();
    let mut args = vec!["evaluate", "--dataset", "d.tsv", "--split", "s.txt", "--method", "mf", "--select", "helf"];
    args.extend(["--questions", "5", "--runs", "2", "--out", "r.tsv"]);
    args.extend(FAST);
    let text = ok(&d, &args);
    assert_eq!(text.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(d.join("r.tsv")).unwrap().lines().count(), 3);
    assert_eq!(text, ok(&d, &args));

    let mut warm = vec!["evaluate", "--dataset", "d.tsv", "--split", "s.txt", "--method", "itemknn"];
    warm.extend(["--protocol", "warm", "--neighbours", "10", "--runs", "1"]);
    assert!(ok(&d, &warm).contains("itemknn"));

    let mut sweep = vec!["sweep", "--dataset", "d.tsv", "--split", "s.txt", "--method", "csiam"];
    sweep.extend(["--grid-lambda2", "0,1e9", "--runs", "2", "--out", "sweep.tsv"]);
    sweep.extend(FAST);
    let text = ok(&d, &sweep);
    assert!(text.contains("best:"));
    // 2 configs x 2 seeds of validation plus 2 test runs
    assert_eq!(std::fs::read_to_string(d.join("sweep.tsv")).unwrap().lines().count(), 7);

    let mut csw = vec!["csw-sweep", "--dataset", "d.tsv", "--split", "s.txt", "--fractions", "0,0.5", "--runs", "1"];
    csw.extend(["--lambda2", "0.05"]);
    csw.extend(FAST);
    assert_eq!(ok(&d, &csw).lines().count(), 3);

    let mut train = vec!["train", "--dataset", "d.tsv", "--split", "s.txt", "--model", "iam-cold", "--out", "c.bin"];
    train.extend(FAST);
    ok(&d, &train);
    ok(&d, &["export-pca", "--model", "c.bin", "--out", "pca.tsv"]);
    let pca = std::fs::read_to_string(d.join("pca.tsv")).unwrap();
    assert!(pca.starts_with("item\tsign\tx\ty\tnorm\n"));
    assert_eq!(pca.lines().count(), 1 + 2 * 25);

    ok(&d, &["select", "--dataset", "d.tsv", "--split", "s.txt", "--select", "pop", "--questions", "6", "--out", "pop.tsv"]);
    assert!(std::fs::read_to_string(d.join("pop.tsv")).unwrap().contains("size=6"));
}
