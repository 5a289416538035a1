use std::process::Command;

fn idiomspan() -> Command {
    Command::new(env!("CARGO_BIN_EXE_idiomspan"))
}

#[test]
fn bad_override_exits_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = idiomspan()
        .args(["synth-data", "--out"])
        .arg(dir.path())
        .args(["--set", "idiom_rate=3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("idiom_rate"));
}

#[test]
fn missing_config_names_the_file() {
    let out = idiomspan().args(["train", "--config", "/nonexistent/run.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.toml"));
}
