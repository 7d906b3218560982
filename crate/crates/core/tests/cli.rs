use std::path::Path;
use std::process::{Command, Output};

use hybrid_v2x::config::{parse_config, Overrides, RunConfig};
use hybrid_v2x::output::{COMPARE_HEADER, GAMES_HEADER};

const SMALL: &str = r#"
games = 3
eval_games = 1

[agent]
sr_target = 10
hidden_layers = [16, 16]
batch_size = 8
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybrid-v2x"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn train_then_evaluate_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();

    let r = cli(&["--config", &config, "--mode", "train", "--seed", "4", "--out", out_s]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let games = read(&out.join("games.csv"));
    let mut lines = games.lines();
    assert_eq!(lines.next(), Some(GAMES_HEADER));
    assert_eq!(lines.clone().count(), 3);
    assert!(lines.all(|l| l.split(',').nth(1) == Some("mean")));
    assert_eq!(read(&out.join("games-agents.csv")).lines().count(), 1 + 3 * 5);
    for k in 0..5 {
        assert!(out.join(format!("weights-agent{k}.bin")).is_file());
    }
    for f in ["reward.dat", "prr.dat"] {
        assert_eq!(read(&out.join(f)).lines().count(), 1 + 3);
    }
    for f in ["reward.svg", "prr.svg"] {
        assert!(read(&out.join(f)).starts_with("<svg"));
    }

    // The echoed configuration reproduces the run configuration.
    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["games"], 3);
    let echoed = RunConfig::from_json_str(&summary["config"].to_string()).unwrap();
    let overrides = Overrides {
        seed: Some(4),
        output: Some(out.clone()),
        ..Overrides::default()
    };
    assert_eq!(echoed, parse_config(Some(Path::new(&config)), &overrides).unwrap());

    let r = cli(&["--config", &config, "--mode", "eval", "--selector", "drl", "--games", "2", "--out", out_s]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(read(&out.join("games.csv")).lines().count(), 1 + 2);

    let r = cli(&["--config", &config, "--mode", "compare", "--out", out_s]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let compare = read(&out.join("compare.csv"));
    let mut lines = compare.lines();
    assert_eq!(lines.next(), Some(COMPARE_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().any(|r| r.starts_with("static-redundant,high,")));
    assert!(rows.iter().any(|r| r.starts_with("drl,low,")));
}

#[test]
fn evaluation_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = cli(&[
            "--config", &config, "--mode", "eval", "--selector", "topsis", "--congestion", "high", "--games", "3",
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        (std::fs::read(out.join("games.csv")).unwrap(), std::fs::read(out.join("games-agents.csv")).unwrap())
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(String::from_utf8(a.0).unwrap().lines().count(), 1 + 3);
}

#[test]
fn one_game_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("one");
    let r = cli(&[
        "--config", &config, "--mode", "eval", "--selector", "static-g5", "--games", "1", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let games = read(&out.join("games.csv"));
    let row: Vec<&str> = games.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), GAMES_HEADER.split(',').count());
    assert_eq!(row[0], "0");
    assert_eq!(row[11], "0", "single ITS-G5 cannot duplicate");
}

#[test]
fn compare_without_weights_fails_early() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let r = cli(&["--config", &config, "--mode", "compare", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("--mode train"), "{}", stderr(&r));
    assert!(!dir.path().join("compare.csv").exists());
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[agent]\nlearning_rat = 0.1\n").unwrap();
    let r = cli(&["--config", bad.to_str().unwrap(), "--mode", "validate"]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("learning_rat"), "{}", stderr(&r));

    assert_eq!(code(&cli(&["--mode", "fly"])), 1);
    assert_eq!(code(&cli(&["--config", "/no/such/file.toml"])), 1);
    let r = cli(&["--mode", "train", "--selector", "static-lte", "--games", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("drl"), "{}", stderr(&r));
    assert_eq!(code(&cli(&["--help"])), 0);
}

#[test]
fn validate_mode_passes() {
    let r = cli(&["--mode", "validate"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = String::from_utf8(r.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 5, "{text}");
    assert!(!text.contains("[FAIL]"));
}
