use std::fs;
use std::process::Command;

fn cats() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cats"))
}

#[test]
fn world_then_mask() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("w.csv");
    let masked = dir.path().join("m.csv");
    let st = cats()
        .args(["--set", "world.users=4", "--set", "world.days=2", "world", "--output"])
        .arg(&world)
        .status()
        .unwrap();
    assert!(st.success());
    let text = fs::read_to_string(&world).unwrap();
    assert!(text.starts_with("# config_hash="));
    assert_eq!(text.lines().count(), 2 + 4 * 2 * 24);

    let st = cats().args(["mask", "--mechanism", "gg", "--input"]).arg(&world).arg("--output").arg(&masked).status().unwrap();
    assert!(st.success());
    assert_eq!(fs::read_to_string(&masked).unwrap().lines().count(), 2 + 4 * 2 * 24);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = cats().args(["--set", "k=0", "pipeline", "--out-dir"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k must be at least 1"));

    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "seed = 1\nwhat\n").unwrap();
    let out = cats().arg("--config").arg(&cfg).arg("world").arg("--output").arg(dir.path().join("x.csv")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));

    let out = cats().args(["mask", "--mechanism", "zz", "--input", "a", "--output", "b"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(cats().arg("nonsense").output().unwrap().status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = cats()
        .args(["mask", "--mechanism", "gg", "--input"])
        .arg(dir.path().join("missing.csv"))
        .arg("--output")
        .arg(dir.path().join("o.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
