use std::path::Path;
use std::process::Command;

fn run(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_cryamabe"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("CRYAMABE_THREADS", "2")
        .output()
        .expect("spawn cryamabe");
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
    )
}

#[test]
fn passing_subcommand_exits_zero_and_writes_report() {
    let d = tempfile::tempdir().unwrap();
    let (code, stdout) = run(&["verify-group"], d.path());
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("verify-group.json")).unwrap())
            .unwrap();
    assert_eq!(v["subcommand"], "verify-group");
    assert_eq!(v["pass"], true);
    assert!(v["checks"].as_array().unwrap().len() >= 6);
    assert!(d.path().join("verify-group.csv").exists());
}

#[test]
fn usage_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["no-such-command"], d.path()).0, 2);
    assert_eq!(run(&["verify-group", "--k", "5"], d.path()).0, 2);
    assert_eq!(
        run(&["ps-quantization", "--ladder", "0.1,0.5"], d.path()).0,
        2
    );
    // pointwise bubble PDE is only available at k = 1
    assert_eq!(run(&["bubble-residual", "--k", "0.5"], d.path()).0, 2);
    let cfg = d.path().join("bad.json");
    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(
        run(
            &["verify-group", "--config", cfg.to_str().unwrap()],
            d.path()
        )
        .0,
        2
    );
}

#[test]
fn tiny_tolerance_scale_fails_with_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let (code, stdout) = run(&["verify-spectral", "--tol-scale", "1e-12"], d.path());
    assert_eq!(code, 1);
    assert!(stdout.contains("FAIL"));
    let v: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(d.path().join("verify-spectral.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(v["pass"], false);
}

#[test]
fn same_seed_gives_identical_tables() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(run(&["commutator-check", "--seed", "7"], d.path()).0, 0);
        assert_eq!(run(&["verify-cayley", "--seed", "7"], d.path()).0, 0);
    }
    for f in ["commutator-check.csv", "verify-cayley.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
}

#[test]
fn config_file_is_honoured() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    std::fs::write(&cfg, r#"{"N": 2, "seed": 11, "seed_count": 200}"#).unwrap();
    let (code, _) = run(
        &["verify-group", "--config", cfg.to_str().unwrap()],
        d.path(),
    );
    assert_eq!(code, 0);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("verify-group.json")).unwrap())
            .unwrap();
    assert_eq!(v["config"]["N"], 2);
    assert_eq!(v["details"]["cases"], 200);
}
