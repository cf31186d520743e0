use std::process::Command;

fn dampwave(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dampwave")).args(args).output().unwrap()
}

#[test]
fn bad_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[damping]\nsigma = 1.0\ndelta = 0.0\n").unwrap();
    let out = dampwave(&["roots", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("damping.delta"));
}

#[test]
fn missing_config_exits_with_validation_code() {
    assert_eq!(dampwave(&["roots"]).status.code(), Some(2));
}

#[test]
fn roots_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ok.toml");
    std::fs::write(&cfg, "[damping]\nsigma = 1.0\ndelta = 1.0\n\n[spectrum]\ncount = 3\n").unwrap();
    let out = dampwave(&["roots", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("o/manifest.csv").exists());
}

#[test]
fn recipe_listing_names_every_criterion() {
    let out = dampwave(&["recipes"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for n in 1..=11 {
        assert!(text.contains(&format!("AC{n}-")), "AC{n}");
    }
}
