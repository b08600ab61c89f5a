use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn misc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_misc"))
}

fn run(args: &[&str]) -> Output {
    misc().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Default atlas written once for the whole file.
fn default_atlas() -> &'static Path {
    static PATH: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, path) = PATH.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cis.json");
        let o = run(&["cis", "compute", "--out", p(&path)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (dir, path)
    });
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cis_compute_reports_every_face() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cis.json");
    let o = run(&["cis", "compute", "--out", p(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("obstacle ")).count(), 20);
    assert_eq!(text.lines().filter(|l| l.ends_with("empty")).count(), 5);
    assert!(text.contains("certified 20 entries"));
    let atlas = read_json(&out);
    assert_eq!(atlas["entries"].as_array().unwrap().len(), 20);
}

#[test]
fn cis_compute_without_obstacles_writes_an_empty_atlas() {
    let dir = tempfile::tempdir().unwrap();
    let env_path = dir.path().join("env.json");
    assert!(run(&["env", "default", "--out", p(&env_path)]).status.success());
    let mut env = read_json(&env_path);
    env["obstacles"] = Value::Array(vec![]);
    std::fs::write(&env_path, env.to_string()).unwrap();
    let out = dir.path().join("cis.json");
    let o = run(&["cis", "compute", "--env", p(&env_path), "--out", p(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("certified 0 entries"));

    let traj = dir.path().join("t.csv");
    let o = run(&[
        "sim", "run", "--env", p(&env_path), "--atlas", p(&out), "--policy", "adversarial", "--ticks", "1000", "--out", p(&traj),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("collisions: 0"));
    assert!(stdout(&o).contains("violations: 0"));
}

#[test]
fn bad_inputs_exit_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let corrupt = dir.path().join("env.json");
    std::fs::write(&corrupt, "{\"workspace\": 3").unwrap();
    let o = run(&["cis", "compute", "--env", p(&corrupt), "--out", p(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let missing = dir.path().join("nope.json");
    let o = run(&["sim", "run", "--atlas", p(&missing), "--out", p(&dir.path().join("t.csv"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["cis", "compute", "--max-iterations", "2", "--out", p(&dir.path().join("y.json"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!dir.path().join("y.json").exists());

    let o = run(&["sim", "run", "--policy", "teleport", "--out", "t.csv"]);
    assert_eq!(o.status.code(), Some(2), "clap rejects unknown policies");
}

#[test]
fn atlas_for_another_system_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let env_path = dir.path().join("env.json");
    assert!(run(&["env", "default", "--out", p(&env_path)]).status.success());
    let mut env = read_json(&env_path);
    env["gamma"] = Value::from(0.2);
    std::fs::write(&env_path, env.to_string()).unwrap();
    let o = run(&[
        "sim", "run", "--env", p(&env_path), "--atlas", p(default_atlas()), "--out", p(&dir.path().join("t.csv")),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn assisted_adversary_reports_no_collisions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adv.csv");
    let o = run(&[
        "sim", "run", "--atlas", p(default_atlas()), "--policy", "adversarial", "--seed", "4", "--ticks", "2000", "--out", p(&out),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "collisions: 0"), "{text}");
    assert!(text.contains("fallback 0"));
    let m = read_json(&out.with_extension("metrics.json"));
    assert_eq!(m["control_ticks"], 2000);
    assert_eq!(m["violations"], 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("frame,t,x,y,vx,vy,"));
}

#[test]
fn unassisted_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let go = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&["sim", "run", "--policy", "goal_seeker", "--assist", "false", "--seed", "7", "--out", p(&out)]);
        assert!(o.status.success());
        (std::fs::read(&out).unwrap(), read_json(&out.with_extension("metrics.json")))
    };
    let (ta, ma) = go("a.csv");
    let (tb, mb) = go("b.csv");
    assert_eq!(ta, tb);
    assert_eq!(ma, mb);
    assert_eq!(ma["goals_reached"], 4);
}

#[test]
fn recorded_runs_replay_to_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("walk.replay.csv");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let atlas = p(default_atlas());
    let o = run(&[
        "sim", "run", "--atlas", atlas, "--policy", "random_walk", "--seed", "2", "--ticks", "1500", "--out", p(&a), "--record",
        p(&rec),
    ]);
    assert!(o.status.success());
    let policy = format!("replay:{}", p(&rec));
    let o = run(&["sim", "run", "--atlas", atlas, "--policy", &policy, "--ticks", "1500", "--out", p(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(read_json(&a.with_extension("metrics.json")), read_json(&b.with_extension("metrics.json")));
}

#[test]
fn env_default_round_trips_and_logging_goes_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let env_path = dir.path().join("env.json");
    let o = run(&["env", "default", "--out", p(&env_path)]);
    assert!(o.status.success());
    let env = read_json(&env_path);
    assert_eq!(env["obstacles"].as_array().unwrap().len(), 5);
    assert_eq!(env["goals"].as_array().unwrap().len(), 4);

    let o = misc()
        .env("MISC_LOG", "info")
        .args(["sim", "run", "--env", p(&env_path), "--ticks", "50", "--out", p(&dir.path().join("t.csv"))])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("computing one"));
    assert!(!stdout(&o).contains("computing one"));
}
