use std::process::Command;

fn status(args: &[&str], dir: &std::path::Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_fleetgrid"))
        .args(args)
        .current_dir(dir)
        .env("FLEETGRID_LOG", "off")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(status(&["bogus"], dir.path()), 1);
    assert_eq!(status(&["simulate-agent"], dir.path()), 1);
    assert_eq!(status(&["scenario", "--preset", "9"], dir.path()), 1);
    assert_eq!(status(&["fit-eventsim", "--in", "missing"], dir.path()), 1);
    assert_eq!(status(&["--help"], dir.path()), 0);
}

#[test]
fn synth_pop_writes_a_manifest_with_hashes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(status(&["synth-pop", "--out", "pop", "--scale", "0.005"], dir.path()), 0);
    let text = std::fs::read_to_string(dir.path().join("pop/manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(manifest["command"], "synth-pop");
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|o| o["path"] == "agents.csv"));
    assert!(outputs.iter().all(|o| o["sha256"].as_str().unwrap().len() == 64));
}
