use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybrid-rad"))
}

#[test]
fn run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("scene.json"),
        r#"{"mesh": {"cuboid": {"half": [1.0, 0.5, 0.5]}}, "domain_size": 0.7, "resolution": 16,
            "source": {"type": "monopole", "frequency": 600.0}, "listeners": [[0.2, 0.0, 0.0]],
            "duration": 0.002}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .arg("run")
        .arg("--scene")
        .arg(dir.path().join("scene.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("backend=Hybrid"));
    assert!(out.join("listener_0.csv").exists());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let missing = bin().args(["monopole-test", "--mesh", "no/such/file.obj"]).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));
    let absorber = bin().args(["monopole-test", "--absorber", "sponge"]).output().unwrap();
    assert!(!absorber.status.success());
    let oracle_slice = bin()
        .args(["--oracle", "slice", "--scene", "x.json", "--index", "3"])
        .output()
        .unwrap();
    assert!(!oracle_slice.status.success());
}
