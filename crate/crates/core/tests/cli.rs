use std::path::Path;
use std::process::Command;

use coshf::report::{
    parse_schedule_csv, parse_trajectory_csv, Results, RunMode, TRAJECTORY_HEADER,
};

fn coshf(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_coshf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

#[test]
fn iteration_cap_exits_two_and_still_exports() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = coshf(&["--max-iter", "2", "--audit-samples", "500"], dir.path());
    assert_eq!(code, 2);
    let res =
        Results::from_json(&std::fs::read_to_string(dir.path().join("results.json")).unwrap())
            .unwrap();
    assert_eq!(res.mode, RunMode::Coshf);
    assert!(res.trajectory.as_ref().unwrap().schedule_is_binary());
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), TRAJECTORY_HEADER.join(","));
    let rows = parse_trajectory_csv(&traj).unwrap();
    let t_end = rows.last().unwrap().t;
    assert!(t_end > 0.0 && t_end <= res.scenario.mission_time + 1e-9);
    let (k, sched) =
        parse_schedule_csv(&std::fs::read_to_string(dir.path().join("schedule.csv")).unwrap())
            .unwrap();
    assert_eq!(k, res.scenario.k());
    let total: f64 = sched.iter().map(|r| r.duration).sum();
    assert!(total <= res.scenario.mission_time + 1e-6);
}

#[test]
fn loose_threshold_converges_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = coshf(
        &["--random-k", "1", "--eps", "1000", "--audit-samples", "500"],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(coshf(&["--mode", "td", "--td-n0", "1"], dir.path()).0, 1);
    assert_eq!(coshf(&["--bogus"], dir.path()).0, 1);
    assert_eq!(coshf(&["--eps", "0"], dir.path()).0, 1);
    assert_eq!(coshf(&["--random-k", "0"], dir.path()).0, 1);
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        coshf(&["--scenario", missing.to_str().unwrap()], dir.path()).0,
        1
    );
}

#[test]
fn scenario_file_is_loaded() {
    let dir = tempfile::tempdir().unwrap();
    let sc = coshf::Scenario::reference();
    let path = dir.path().join("sc.toml");
    std::fs::write(&path, sc.to_toml_string()).unwrap();
    let out = dir.path().join("out");
    let (code, _) = coshf(
        &[
            "--scenario",
            path.to_str().unwrap(),
            "--max-iter",
            "1",
            "--audit-samples",
            "200",
        ],
        &out,
    );
    assert_eq!(code, 2);
    let res =
        Results::from_json(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(res.scenario, sc);
    assert_eq!(res.scenario_hash, sc.hash_hex());
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(coshf(&["--help"], dir.path()).0, 0);
}
