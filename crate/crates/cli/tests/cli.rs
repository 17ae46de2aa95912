use std::path::Path;
use std::process::{Command, Output};

fn exp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt-exp")).args(args).output().expect("binary runs")
}

fn quick_run(out: &Path) -> Output {
    exp(&["--preset", "sinr", "--trials", "2", "--seed", "7", "--scheme", "passive", "--sweep", "gamma_db=0", "--out", out.to_str().unwrap()])
}

#[test]
fn preset_with_overrides_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = quick_run(dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.csv", "trials.csv", "timings.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let text = manifest.to_string();
    assert!(text.contains("\"trials\":2"), "{text}");
    assert!(text.contains("\"seed\":7"), "{text}");
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    // Header plus one row: one sweep value and one scheme.
    assert_eq!(results.lines().count(), 2, "{results}");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("gamma_db=0"), "{stdout}");
}

#[test]
fn replay_reproduces_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(quick_run(&a).status.success());
    let o = exp(&["--replay", a.join("manifest.json").to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.csv", "trials.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn spec_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(quick_run(&a).status.success());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let json = dir.path().join("spec.json");
    std::fs::write(&json, manifest["spec"].to_string()).unwrap();
    let out = dir.path().join("from_json");
    let o = exp(&["--spec", json.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let want = std::fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(std::fs::read_to_string(out.join("results.csv")).unwrap(), want);

    // Same spec through the TOML path.
    let spec: swipt_core::experiment::ExperimentSpec = serde_json::from_value(manifest["spec"].clone()).unwrap();
    let toml_path = dir.path().join("spec.toml");
    std::fs::write(&toml_path, toml::to_string(&spec).unwrap()).unwrap();
    let out = dir.path().join("from_toml");
    let o = exp(&["--spec", toml_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(out.join("results.csv")).unwrap(), want);
}

#[test]
fn rejects_bad_input() {
    assert!(!exp(&[]).status.success());
    assert!(!exp(&["--preset", "sinr", "--replay", "x.json"]).status.success());
    assert!(!exp(&["--preset", "nope"]).status.success());
    assert!(!exp(&["--preset", "sinr", "--sweep", "gamma_db"]).status.success());
    assert!(!exp(&["--preset", "sinr", "--sweep", "warp=1"]).status.success());
    assert!(!exp(&["--preset", "sinr", "--scheme", "mystery"]).status.success());
    assert!(!exp(&["--preset", "sinr", "--trials", "0"]).status.success());
}
