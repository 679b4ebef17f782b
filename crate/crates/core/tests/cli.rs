use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_graphnorm"));
    c.env_remove("GRAPHNORM_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) {
    let d = dir.to_str().unwrap();
    let mut args = vec![
        "gen",
        "--graphs",
        "20",
        "--nodes-min",
        "8",
        "--nodes-max",
        "12",
        "--name",
        name,
        "--out",
        d,
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn gen_is_deterministic_and_splits() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let d = dir.path().to_str().unwrap();
        let o = run(&[
            "gen",
            "--seed",
            "7",
            "--graphs",
            "200",
            "--nodes-min",
            "5",
            "--nodes-max",
            "8",
            "--out",
            d,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(
            String::from_utf8_lossy(&o.stdout),
            "train 160\nval 20\ntest 20\n"
        );
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names {
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(
            read(a.path().join(&name)),
            read(b.path().join(&name)),
            "{name:?}"
        );
    }
}

#[test]
fn seed_defaults_from_environment() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = run(&[
        "gen",
        "--graphs",
        "10",
        "--nodes-min",
        "4",
        "--nodes-max",
        "6",
        "--seed",
        "11",
        "--out",
        a.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let o = bin()
        .env("GRAPHNORM_SEED", "11")
        .args([
            "gen",
            "--graphs",
            "10",
            "--nodes-min",
            "4",
            "--nodes-max",
            "6",
            "--out",
            b.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let listing: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    for name in listing.iter().filter(|n| *n != "manifest.json") {
        assert_eq!(read(a.path().join(name)), read(b.path().join(name)));
    }
}

#[test]
fn invalid_probabilities_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "gen",
        "--p-intra",
        "0.1",
        "--p-inter",
        "0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("p-inter"), "{}", stderr(&o));
    assert_eq!(code(&run(&["train", "--bogus"])), 1);
    assert_eq!(code(&run(&[])), 1);
}

#[test]
fn train_eval_inspect_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "sbm", &[]);
    let data = dir.path().to_str().unwrap();
    let run_dir = dir.path().join("run");
    let out = run_dir.to_str().unwrap();
    let o = run(&[
        "train", "--data", data, "--depth", "2", "--hidden", "8", "--epochs", "3", "--out", out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "checkpoint.json",
        "metrics.csv",
        "lambda.csv",
        "lambda_trajectory.csv",
        "report.json",
        "manifest.json",
    ] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let metrics = read(run_dir.join("metrics.csv"));
    assert!(metrics.starts_with("epoch,split,loss,balanced_accuracy,accuracy,f1,mae\n"));
    let test_row = metrics
        .lines()
        .find(|l| l.contains(",test,"))
        .unwrap()
        .to_string();

    let ck = run_dir.join("checkpoint.json");
    let o = run(&["eval", "--checkpoint", ck.to_str().unwrap(), "--data", data]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let printed = String::from_utf8_lossy(&o.stdout);
    let tail = |row: &str| row.rsplitn(6, ',').collect::<Vec<_>>()[..5].join(",");
    let eval_row = printed.lines().find(|l| l.contains("test")).unwrap();
    assert_eq!(tail(eval_row), tail(&test_row));
    let balanced: f64 = eval_row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&balanced));

    let o = run(&["inspect-weights", "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(csv, read(run_dir.join("lambda.csv")));

    let replay_dir = dir.path().join("replay");
    let manifest = run_dir.join("manifest.json");
    let o = run(&[
        "replay",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        replay_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(replay_dir.join("metrics.csv")), metrics);
}

#[test]
fn mismatched_data_and_missing_norm_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "two", &[]);
    gen(dir.path(), "three", &["--clusters", "3"]);
    let run_dir = dir.path().join("run");
    let d = dir.path().to_str().unwrap();
    let o = run(&[
        "train",
        "--data",
        d,
        "--name",
        "two",
        "--norm",
        "none",
        "--depth",
        "1",
        "--epochs",
        "0",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ck = run_dir.join("checkpoint.json");
    let o = run(&[
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--data",
        d,
        "--name",
        "three",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run(&["inspect-weights", "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run(&[
        "eval",
        "--checkpoint",
        dir.path().join("missing.json").to_str().unwrap(),
        "--data",
        d,
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gradcheck_scopes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "gradcheck",
        "--scope",
        "all",
        "--trials",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("manifest.json").exists());
    let o = run(&["gradcheck", "--scope", "graph_wise_normalize"]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&run(&["gradcheck", "--scope", "nope"])), 1);
}
