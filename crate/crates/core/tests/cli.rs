//! End-to-end checks of the `dspsim` binary: exit codes and output layout.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
[pattern]
builtin = ring
[optics]
grid = 32
pitch_m = 100e-6
[ensemble]
n_z = 3
[coils.gradient]
kind = anti-helmholtz
axis = x
calibrate_gauss = 0.05
[schedule]
seg0.coils = gradient
[times]
ranges_us = 0:6:1
";

fn dspsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dspsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn dspsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), config).unwrap();
    dir
}

#[test]
fn simulate_writes_run_directory() {
    let dir = workspace(SMALL);
    let o = dspsim(&["simulate", "run.cfg", "--out", "res"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let res = dir.path().join("res");
    for name in ["similarity.csv", "config.echo.cfg", "constants.csv", "manifest.txt", "frame_t0.000_zall.pgm"] {
        assert!(res.join(name).exists(), "missing {name}");
    }
    let csv = std::fs::read_to_string(res.join("similarity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t_us,S,S_r,efficiency"));
    assert_eq!(lines.count(), 7);
    assert!(!dir.path().read_dir().unwrap().any(|e| e.unwrap().file_name().to_string_lossy().contains("partial")));

    // the echoed config reproduces the run
    let o = dspsim(&["simulate", "res/config.echo.cfg", "--out", "again"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = std::fs::read_to_string(dir.path().join("again/similarity.csv")).unwrap();
    assert_eq!(csv, again);

    // rerunning into a previous run directory replaces it; --no-frames drops frames
    let o = dspsim(&["--no-frames", "simulate", "run.cfg", "--out", "res"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!res.join("frame_t0.000_zall.pgm").exists());
}

#[test]
fn config_errors_exit_2_with_line() {
    let dir = workspace(&SMALL.replace("n_z = 3", "n_zz = 3"));
    let o = dspsim(&["simulate", "run.cfg", "--out", "res"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 7"), "{}", stderr(&o));

    let dir = workspace(&SMALL.replace("pitch_m", "pitch"));
    assert_eq!(code(&dspsim(&["simulate", "run.cfg"], dir.path())), 2);

    assert_eq!(code(&dspsim(&["preset", "nope"], dir.path())), 2);
    assert_eq!(code(&dspsim(&["--threads", "0", "constants"], dir.path())), 2);
    assert_eq!(code(&dspsim(&["simulate", "run.cfg", "--grid", "100"], dir.path())), 2);
}

#[test]
fn io_errors_exit_4() {
    let dir = workspace(SMALL);
    assert_eq!(code(&dspsim(&["simulate", "missing.cfg"], dir.path())), 4);
    let dir = workspace(&SMALL.replace("builtin = ring", "file = nowhere.png"));
    assert_eq!(code(&dspsim(&["simulate", "run.cfg"], dir.path())), 4);

    // refuses to replace a directory that does not hold a previous run
    let dir = workspace(SMALL);
    std::fs::create_dir(dir.path().join("busy")).unwrap();
    std::fs::write(dir.path().join("busy/keep.txt"), "x").unwrap();
    let o = dspsim(&["simulate", "run.cfg", "--out", "busy"], dir.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(dir.path().join("busy/keep.txt").exists());
}

#[test]
fn numeric_errors_exit_3() {
    let dir = workspace(SMALL);
    let o = dspsim(&["field-map", "run.cfg", "--segment", "4"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let a: &[u8] = b"P5\n2 2\n255\n\x00\xff\xff\x00";
    let b: &[u8] = b"P5\n3 1\n255\n\x00\xff\x00";
    std::fs::write(dir.path().join("a.pgm"), a).unwrap();
    std::fs::write(dir.path().join("b.pgm"), b).unwrap();
    assert_eq!(code(&dspsim(&["similarity", "a.pgm", "b.pgm"], dir.path())), 3);
    let o = dspsim(&["similarity", "a.pgm", "a.pgm"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("S = 1.000000"));
}

#[test]
fn constants_and_field_map_print_csv() {
    let dir = workspace(SMALL);
    let o = dspsim(&["constants"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).lines().count() > 5);

    let o = dspsim(&["field-map", "run.cfg", "--points", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 1 + 27);
}

#[test]
fn fit_recovers_simulated_strength() {
    let dir = workspace(SMALL);
    let o = dspsim(&["--no-frames", "simulate", "run.cfg", "--out", "res"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = dspsim(&["fit", "run.cfg", "res/similarity.csv", "--bracket-gauss", "0,0.2", "--out", "fit"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("fit/fit_report.txt")).unwrap();
    let fitted: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("fitted_gauss = "))
        .expect("fitted_gauss line")
        .parse()
        .unwrap();
    // the CSV carries 6 significant digits
    assert!((fitted - 0.05).abs() < 1e-3 * 0.05, "{report}");
}
