use std::path::Path;
use std::process::{Command, Output};

fn pursuit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pursuit")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn catalog_lists_fifteen_actions() {
    let o = pursuit(&["print-action-catalog"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| index")).count(), 15);
}

#[test]
fn bad_override_exits_with_config_code_and_names_the_key() {
    let o = pursuit(&["validate-config", "--set", "trainer.workers=0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("trainer.workers"), "{}", stderr(&o));
    let o = pursuit(&["validate-config", "--set", "physics.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn resolved_config_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let o = pursuit(&["validate-config", "--set", "replay.alpha=0.0", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("resolved.toml");
    std::fs::write(&path, &o.stdout).unwrap();
    let again = pursuit(&["validate-config", "--config", path.to_str().unwrap()]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn missing_checkpoint_exits_with_checkpoint_code() {
    let o = pursuit(&["evaluate", "--pursuit", "/nonexistent/p.qnet", "--episodes", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_plan_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = pursuit(&["train", "--plan", "nope", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn train_then_evaluate_then_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let common = ["--set", "trainer.batch_size=16", "--set", "trainer.warmup_min=32", "--set", "trainer.episode_time_limit_s=10.0"];
    let mut args = vec!["train", "--plan", "pursuit-straight", "--steps", "120", "--net", "8", "--workers", "2", "--seed", "3", "--out", out];
    args.extend(common);
    let o = pursuit(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = Path::new(out).join("pursuit.qnet");
    assert!(ckpt.exists());
    let header = std::fs::read_to_string(Path::new(out).join("metrics.csv")).unwrap();
    assert!(header.starts_with("# algorithm=meaddqn-per config_hash="));

    let ev = dir.path().join("eval");
    let mut args = vec![
        "evaluate", "--pursuit", ckpt.to_str().unwrap(), "--episodes", "3", "--time-limits", "0.5,1", "--out",
        ev.to_str().unwrap(), "--set", "network.hidden=[8]",
    ];
    args.extend(common);
    let o = pursuit(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("| 1 min |"), "{table}");

    let garbage = dir.path().join("garbage.qnet");
    std::fs::write(&garbage, b"not a network").unwrap();
    let o = pursuit(&["evaluate", "--pursuit", garbage.to_str().unwrap(), "--episodes", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let ex = dir.path().join("export");
    let o = pursuit(&[
        "export", "--pursuit", ckpt.to_str().unwrap(), "--set", "network.hidden=[8]", "--time-limit", "0.2", "--out",
        ex.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = std::fs::read_dir(&ex)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n.ends_with(".trajectory.csv")), "{names:?}");
    assert!(names.iter().any(|n| n.ends_with(".events.csv")), "{names:?}");
}
