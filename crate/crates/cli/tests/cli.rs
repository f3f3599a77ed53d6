use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use daso::checkpoint::load_checkpoint;
use daso::dataset::{load_interactions, load_social, split};
use daso::eval::recommend_topk;

fn daso(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daso"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DASO_THREADS")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = daso(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const SMALL: [&str; 7] = ["--synthetic", "--users", "50", "--items", "70", "--communities", "3"];

fn train_small(dir: &Path, out: &str, seed: &str) {
    let mut args = vec!["train"];
    args.extend(SMALL);
    args.extend(["--epochs", "2", "--dim", "8", "--seed", seed, "--out", out]);
    ok(&args, dir);
}

fn metric_lines(stdout: &str) -> Vec<String> {
    stdout.lines().filter(|l| l.starts_with("metric=")).map(str::to_owned).collect()
}

#[test]
fn train_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    train_small(dir.path(), "a", "7");
    train_small(dir.path(), "b", "7");
    for f in ["model.ckpt", "history.tsv", "validation.txt", "config.txt"] {
        assert!(dir.path().join("a").join(f).is_file(), "{f}");
    }
    let read = |run: &str, f: &str| fs::read(dir.path().join(run).join(f)).unwrap();
    assert_eq!(read("a", "history.tsv"), read("b", "history.tsv"));
    assert_eq!(read("a", "model.ckpt"), read("b", "model.ckpt"));
    assert_eq!(String::from_utf8(read("a", "history.tsv")).unwrap().lines().count(), 4);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&daso(&["train", "--out", "x"], p)), 2);
    assert_eq!(code(&daso(&["train", "--synthetic", "--interactions", "r", "--out", "x"], p)), 2);
    assert_eq!(code(&daso(&["train", "--synthetic", "--lr", "-1", "--out", "x"], p)), 2);
    assert_eq!(code(&daso(&["frobnicate"], p)), 2);
    assert_eq!(code(&daso(&["synth", "--out", "s", "--affinity", "1.5"], p)), 2);
    fs::write(p.join("bad.cfg"), "colour = blue\n").unwrap();
    assert_eq!(code(&daso(&["train", "--synthetic", "--config", "bad.cfg", "--out", "x"], p)), 2);
    assert!(!p.join("x").exists());
    assert_eq!(code(&daso(&["--help"], p)), 0);
}

#[test]
fn missing_input_file_is_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = daso(&["train", "--interactions", "nope.tsv", "--social", "nope.tsv", "--out", "x"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.tsv"));
}

#[test]
fn eval_reports_requested_cutoffs_consistently() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    train_small(p, "run", "3");
    let all = ok(&["eval", "--config", "run/config.txt", "--out", "run"], p);
    let lines = metric_lines(&all);
    assert_eq!(lines.len(), 6);
    for k in [3, 5, 10] {
        assert!(lines.iter().any(|l| l.starts_with(&format!("metric=precision\tk={k}\t"))));
    }
    let mut separate = Vec::new();
    for k in ["3", "5", "10"] {
        separate.extend(metric_lines(&ok(
            &["eval", "--config", "run/config.txt", "--out", "run", "--k", k],
            p,
        )));
    }
    let mut joined = lines.clone();
    joined.sort();
    separate.sort();
    assert_eq!(joined, separate);
}

#[test]
fn broken_or_mismatched_checkpoints_fail() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    train_small(p, "run", "1");
    let bytes = fs::read(p.join("run/model.ckpt")).unwrap();
    fs::write(p.join("cut.ckpt"), &bytes[..bytes.len() / 2]).unwrap();
    let out = daso(&["eval", "--config", "run/config.txt", "--checkpoint", "cut.ckpt"], p);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));

    // default fixture is 500 x 1000, the checkpoint 50 x 70
    let out = daso(&["eval", "--synthetic", "--checkpoint", "run/model.ckpt"], p);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}

#[test]
fn recommend_matches_library_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["synth", "--out", "data", "--users", "40", "--items", "60", "--communities", "2", "--seed", "4"], p);
    ok(
        &[
            "train", "--interactions", "data/ratings.tsv", "--social", "data/trust.tsv", "--epochs", "2", "--dim", "8",
            "--seed", "4", "--out", "run",
        ],
        p,
    );
    let stdout = ok(&["recommend", "--config", "run/config.txt", "--out", "run", "--user", "7", "--k", "5"], p);
    let printed: Vec<(String, String)> = stdout
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[1].to_owned(), f[2].to_owned())
        })
        .collect();

    let loaded = load_interactions(p.join("data/ratings.tsv"), 0.0).unwrap();
    let _ = load_social(p.join("data/trust.tsv"), &loaded.users, true).unwrap();
    let sp = split(&loaded.set, [0.8, 0.1, 0.1], 4).unwrap();
    let (params, _) = load_checkpoint(p.join("run/model.ckpt")).unwrap();
    let u = loaded.users.get("7").unwrap();
    let ranked = recommend_topk(&params, u, 5, &sp.train.items_by_user()[u]).unwrap();
    let expected: Vec<(String, String)> = ranked
        .items
        .iter()
        .zip(&ranked.scores)
        .map(|(&i, s)| (loaded.items.external(i).unwrap().to_owned(), format!("{s:.6}")))
        .collect();
    assert_eq!(printed, expected);

    let one = ok(&["recommend", "--config", "run/config.txt", "--out", "run", "--user", "7", "--k", "1"], p);
    assert_eq!(one.lines().count(), 2);
    assert!(one.lines().nth(1).unwrap().starts_with(&format!("1\t{}\t", expected[0].0)));

    let out = daso(&["recommend", "--config", "run/config.txt", "--out", "run", "--user", "nobody"], p);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("valid user ids"));
}

#[test]
fn synth_is_seeded_and_counts_lines() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = |out: &'static str| vec!["synth", "--out", out, "--users", "30", "--items", "40", "--seed", "9"];
    let report = ok(&args("a"), p);
    ok(&args("b"), p);
    for f in ["ratings.tsv", "trust.tsv"] {
        assert_eq!(fs::read(p.join("a").join(f)).unwrap(), fs::read(p.join("b").join(f)).unwrap());
    }
    let count = |f: &str| fs::read_to_string(p.join("a").join(f)).unwrap().lines().count();
    let reported: Vec<usize> = report
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(reported, vec![count("ratings.tsv"), count("trust.tsv")]);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("run.cfg"),
        "# small run\nsynthetic = true\nusers = 30\nitems = 40\ncommunities = 2\nepochs = 1\ndim = 4\n",
    )
    .unwrap();
    ok(&["train", "--config", "run.cfg", "--epochs", "3", "--out", "run"], p);
    let history = fs::read_to_string(p.join("run/history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 5);
    let written = fs::read_to_string(p.join("run/config.txt")).unwrap();
    assert!(written.contains("epochs = 3\n") && written.contains("dim = 4\n") && written.contains("users = 30\n"));
}

#[test]
fn baseline_trains_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut args = vec!["train", "--baseline"];
    args.extend(SMALL);
    args.extend(["--epochs", "3", "--out", "run"]);
    ok(&args, p);
    assert!(p.join("run/baseline.ckpt").is_file());
    assert_eq!(fs::read_to_string(p.join("run/history.tsv")).unwrap().lines().count(), 4);
    let stdout = ok(&["eval", "--config", "run/config.txt", "--out", "run", "--baseline"], p);
    assert_eq!(metric_lines(&stdout).len(), 6);
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    train_small(p, "run", "2");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_daso"))
            .args(["eval", "--config", "run/config.txt", "--out", "run"])
            .current_dir(p)
            .env("DASO_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert!(one.status.success());
    assert_eq!(one.stdout, run("3").stdout);
    assert_eq!(code(&run("zero")), 2);
    assert_eq!(code(&run("0")), 2);
}
