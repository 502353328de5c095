use std::path::Path;
use std::process::{Command, Output};

fn monosim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monosim")).args(args).current_dir(dir).env_remove("SIM_SEED").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn small_dataset(dir: &Path, name: &str) {
    ok(&monosim(
        &[
            "generate",
            "--n",
            "3000",
            "--d",
            "3",
            "--activation",
            "relu:0.5",
            "--noise",
            "oblivious:0.05:1",
            "--B",
            "2",
            "--seed",
            "5",
            "--out",
            name,
        ],
        dir,
    ));
}

#[test]
fn generate_learn_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir, "train.dat");
    assert!(dir.join("train.dat.truth.json").exists());
    let learn = [
        "learn",
        "--data",
        "train.dat",
        "--eps",
        "0.3",
        "--B",
        "2",
        "--L",
        "1",
        "--seed",
        "7",
        "--out",
        "hyp.json",
        "--report",
        "report.jsonl",
        "--truth",
        "train.dat.truth.json",
        "--trace",
    ];
    ok(&monosim(&learn, dir));
    let hyp: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("hyp.json")).unwrap()).unwrap();
    assert_eq!(hyp["dim"], 3);
    let report = std::fs::read_to_string(dir.join("report.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records[0]["record"], "summary");
    assert!(records.iter().any(|r| r["record"] == "candidate" && r["angle_to_truth"].is_number()));
    assert!(records.iter().any(|r| r["record"] == "trace"));
    assert_eq!(records.iter().filter(|r| r["record"] == "stage").count(), 4);

    let eval = ok(&monosim(&["evaluate", "--data", "train.dat", "--hyp", "hyp.json"], dir));
    let v: serde_json::Value = serde_json::from_str(eval.trim()).unwrap();
    assert_eq!(v["n"], 3000);
    // 5% unit-magnitude noise puts OPT near 0.05.
    assert!(v["loss"].as_f64().unwrap() < 0.2, "{v}");

    // Same inputs and seed give the same hypothesis.
    ok(&monosim(&[&learn[..12], &["hyp2.json"]].concat(), dir));
    assert_eq!(std::fs::read(dir.join("hyp.json")).unwrap(), std::fs::read(dir.join("hyp2.json")).unwrap());
}

#[test]
fn config_file_and_seed_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir, "train.bin");
    std::fs::write(dir.join("run.cfg"), "# defaults\neps = 0.3\nB = 2\nL = 1\nrepeats = 2\n").unwrap();
    let run = |out: &str, env_seed: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_monosim"));
        cmd.args(["learn", "--data", "train.bin", "--config", "run.cfg", "--out", out]).args(extra).current_dir(dir);
        match env_seed {
            Some(s) => cmd.env("SIM_SEED", s),
            None => cmd.env_remove("SIM_SEED"),
        };
        ok(&cmd.output().unwrap());
        std::fs::read(dir.join(out)).unwrap()
    };
    let from_env = run("a.json", Some("11"), &[]);
    let from_flag = run("b.json", Some("99"), &["--seed", "11"]);
    assert_eq!(from_env, from_flag);
    run("c.json", None, &["--fresh-split", "false"]);
}

#[test]
fn usage_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = monosim(&["learn", "--bogus"], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(!monosim(&["probe-invariants", "--suite", "nonsense"], tmp.path()).status.success());
    assert!(!monosim(&["frobnicate"], tmp.path()).status.success());
    let missing = monosim(
        &["learn", "--data", "nope.dat", "--eps", "0.1", "--B", "1", "--L", "1", "--out", "h.json"],
        tmp.path(),
    );
    assert!(!missing.status.success());
}

#[test]
fn probe_suites_report_json_lines() {
    let tmp = tempfile::tempdir().unwrap();
    for suite in ["semigroup", "isotonic"] {
        let stdout = ok(&monosim(&["probe-invariants", "--suite", suite], tmp.path()));
        let lines: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let last = lines.last().unwrap();
        assert_eq!(last["suite"], suite);
        assert_eq!(last["pass"], true);
        assert!(lines[..lines.len() - 1].iter().all(|c| c["pass"] == true && c["suite"] == suite));
    }
}

#[test]
fn bench_emits_a_row_per_setting() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&monosim(&["bench", "--d", "3", "--n", "2000,4000", "--eps", "0.4"], tmp.path()));
    let rows: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["n"], 4000);
    assert!(rows[0]["bands"].as_u64().unwrap() > 0);
}
