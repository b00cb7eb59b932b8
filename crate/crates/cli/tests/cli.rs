use std::fs;
use std::process::Command;

fn flr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flr"))
}

#[test]
fn convention_check_reports_minus_one() {
    let out = flr().arg("convention-check").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("sign = -1"), "{text}");
    assert!(text.contains("unique = true"));
}

#[test]
fn poisson_test_passes() {
    let out = flr().arg("poisson-test").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out_dir = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "# small quasineutral run\nmodel = quasineutral\nepsilon = 0.2\nn1 = 8\nn2 = 8\nn3 = 8\nparticles = 2000\nt_end = 0.02\noutput_dir = {}\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let out = flr().arg("run").arg(&cfg).env("FLR_THREADS", "2").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    assert!(csv.starts_with("t,kinetic,"));
    let resolved = fs::read_to_string(out_dir.join("resolved.cfg")).unwrap();
    assert!(resolved.contains("dt = 0.01"), "{resolved}");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "no_such_key = 3\n").unwrap();
    let out = flr().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    let missing = flr().arg("run").arg(dir.path().join("absent.cfg")).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let threads = flr()
        .arg("convention-check")
        .env("FLR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let cfg = dir.path().join("run.cfg");
    // The output directory sits beneath a regular file, so it cannot be created.
    fs::write(
        &cfg,
        format!(
            "n1 = 8\nn2 = 8\nn3 = 8\nparticles = 100\nt_end = 0.01\noutput_dir = {}\n",
            blocker.join("out").display()
        ),
    )
    .unwrap();
    let out = flr().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
