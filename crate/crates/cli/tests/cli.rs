use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.toml")
}

fn radarfed(args: &[&str], out: &Path) -> Output {
    let output = Command::new(env!("CARGO_BIN_EXE_radarfed"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "radarfed {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario();
    let args = [
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "coop",
        "--epochs",
        "12",
        "--dump-grids",
        "5",
        "--replay",
    ];
    let stdout = String::from_utf8(radarfed(&args, dir.path()).stdout).unwrap();
    assert!(stdout.starts_with("cooperation seed 1 radar 0"), "{stdout}");
    for file in [
        "epochs.csv",
        "summary.csv",
        "messages.jsonl",
        "grids/posterior_e000010_r1.csv",
    ] {
        assert!(dir.path().join(file).is_file(), "{file} missing");
    }
    let epochs = fs::read_to_string(dir.path().join("epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 1 + 12 * 3);
    assert_eq!(
        fs::read_to_string(dir.path().join("messages.jsonl"))
            .unwrap()
            .lines()
            .count(),
        12 * 3
    );
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario();
    let cfg = cfg.to_str().unwrap();
    for mode in ["isolated", "federation"] {
        radarfed(
            &[
                "sweep", "--config", cfg, "--mode", mode, "--epochs", "8", "--seeds", "2",
            ],
            dir.path(),
        );
    }
    let iso = dir.path().join("sweep_isolated.csv");
    let fed = dir.path().join("sweep_federation.csv");
    let report = dir.path().join("report.csv");
    let output = Command::new(env!("CARGO_BIN_EXE_radarfed"))
        .args([
            "report",
            iso.to_str().unwrap(),
            fed.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = fs::read_to_string(report).unwrap();
    assert!(text.starts_with("mode,radar,metric,key,mean,runs"));
    assert!(
        text.lines().any(|l| l.starts_with("isolated,0,rate_bps,,0,2")),
        "{text}"
    );
    assert!(text.lines().any(|l| l.starts_with("federation,0,rate_bps,")));
}

#[test]
fn kl_reports_medians() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario();
    let stdout = radarfed(&["kl", "--config", cfg.to_str().unwrap(), "--epochs", "10"], dir.path()).stdout;
    let stdout = String::from_utf8(stdout).unwrap();
    assert!(stdout.contains("pooled"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("kl.csv")).unwrap();
    assert!(csv.starts_with("radar,divergence,count,mean,q10,median,q90"));
    assert_eq!(csv.lines().filter(|l| l.contains(",local,")).count(), 3);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let output = Command::new(env!("CARGO_BIN_EXE_radarfed"))
        .args(["run", "--config", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("nope.toml"));

    let cfg = scenario();
    let output = Command::new(env!("CARGO_BIN_EXE_radarfed"))
        .args(["run", "--config", cfg.to_str().unwrap(), "--mode", "mesh"])
        .output()
        .unwrap();
    assert!(!output.status.success());
}
