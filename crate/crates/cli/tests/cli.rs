use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn phasemix(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasemix"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn missing_final_time_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasemix(&["linear-decay"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("time.t_final"));
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasemix(
        &["period-table", "--t-final", "1", "--set", "grid.bogus=3"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn failed_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasemix(
        &[
            "linear-decay",
            "--t-final",
            "30",
            "--set",
            "grid.probes=4",
            "--set",
            "checks.max_exponent=-50",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAILED"));
    assert!(dir.path().join("decay.csv").exists());
}

#[test]
fn small_linear_decay_emits_its_tables() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = phasemix(
        &["linear-decay", "--t-final", "40", "--set", "grid.probes=6"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed().as_secs() < 60);
    let decay = std::fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    let mut lines = decay.lines();
    assert_eq!(lines.next(), Some("t,sup_dphi_dt"));
    assert_eq!(lines.count(), 41);
    for name in ["field.csv", "spectrum.csv", "fit.csv", "config.toml"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let o = phasemix(
        &[
            "period-table",
            "--t-final",
            "1",
            "--set",
            "grid.table_h=5",
            "--set",
            "field.amplitude=1e-3",
        ],
        a.path(),
    );
    assert!(o.status.success());
    let echo = a.path().join("config.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_phasemix"))
        .args(["period-table", "--config"])
        .arg(&echo)
        .arg("--out")
        .arg(b.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |d: &Path| std::fs::read(d.join("periods.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn worker_count_does_not_change_the_output() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = |w: &'static str| {
        [
            "nonlinear-run",
            "--t-final",
            "10",
            "--workers",
            w,
            "--set",
            "markers.nh=24",
            "--set",
            "markers.nq=16",
            "--set",
            "time.dt=0.1",
        ]
    };
    assert!(phasemix(&args("1"), a.path()).status.success());
    assert!(phasemix(&args("3"), b.path()).status.success());
    for name in ["field.csv", "decay.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}
