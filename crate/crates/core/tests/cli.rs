use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_tscm");

const SMALL: [&str; 10] = [
    "--set",
    "mesh.target_h=0.15",
    "--set",
    "mesh.data_refinement=1.5",
    "--set",
    "plan.n_coils=8",
    "--set",
    "tscm.delta_lambda=0.5",
    "--set",
    "tscm.max_inner_iters=10",
];

fn tscm(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("TSCM_WORKERS")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let mut args = vec![
        "run",
        "--preset",
        "exp1-3disks",
        "--seed",
        "9",
        "--out",
        path(&first),
    ];
    args.extend(SMALL);
    let out = tscm(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("final_error"));

    let manifest = first.join("manifest.toml");
    let out = tscm(&[
        "--workers",
        "2",
        "run",
        "--config",
        path(&manifest),
        "--out",
        path(&second),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "manifest.toml",
        "data.meas",
        "iterations.csv",
        "stages.csv",
        "sigma.field",
        "summary.txt",
    ] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f} differs"
        );
    }

    let out = tscm(&["report", "--run", path(&first)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("stages"));
}

#[test]
fn generated_data_feeds_a_baseline_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut args = vec!["gen-data", "--preset", "lsm-baseline", "--out", path(&data)];
    args.extend(SMALL);
    assert!(tscm(&args).status.success());
    for f in [
        "manifest.toml",
        "mesh.txt",
        "clean.meas",
        "rho-0.01.meas",
        "rho-0.2.meas",
    ] {
        assert!(data.join(f).is_file(), "{f} missing");
    }
    let run = dir.path().join("run");
    let meas = data.join("rho-0.05.meas");
    let manifest = data.join("manifest.toml");
    let out = tscm(&[
        "baseline",
        "--config",
        path(&manifest),
        "--data",
        path(&meas),
        "--out",
        path(&run),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read(meas).unwrap(),
        fs::read(run.join("data.meas")).unwrap()
    );
    let summary = fs::read_to_string(run.join("summary.txt")).unwrap();
    assert!(summary.contains("method = lsm"));
    assert_eq!(summary.matches("stage lambda=1 ").count(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("x");
    let out = tscm(&["run", "--preset", "nope", "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());

    let out = tscm(&[
        "run",
        "--preset",
        "exp1-3disks",
        "--set",
        "reg.gamma=1",
        "--out",
        path(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));

    fs::create_dir(&out_dir).unwrap();
    let out = tscm(&[
        "gen-data",
        "--preset",
        "exp1-3disks",
        "--out",
        path(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("already exists"));
}
