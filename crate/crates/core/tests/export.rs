use std::fs;

use coshf::report::{
    export_run, parse_schedule_csv, parse_sweep_csv, parse_trajectory_csv, schedule_csv, sweep_csv,
    trajectory_csv, Results, RunMode, SweepRow,
};
use coshf::sca::{run, RunStatus, ScaConfig};
use coshf::Scenario;

fn short_run() -> Results {
    let sc = Scenario::reference();
    let cfg = ScaConfig {
        max_outer: 3,
        audit_samples: 500,
        ..ScaConfig::default()
    };
    let out = run(&sc, &cfg).unwrap();
    let mut r = Results::new(RunMode::Coshf, &sc, cfg, out.report);
    r.trajectory = Some(out.trajectory);
    r.fractional = Some(out.fractional);
    r
}

#[test]
fn reruns_are_identical_up_to_timings() {
    let (a, b) = (short_run(), short_run());
    assert_eq!(a.canonical_json(), b.canonical_json());
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    export_run(da.path(), &a, 0.5).unwrap();
    export_run(db.path(), &b, 0.5).unwrap();
    for f in ["trajectory.csv", "schedule.csv"] {
        assert_eq!(
            fs::read(da.path().join(f)).unwrap(),
            fs::read(db.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn files_round_trip() {
    let r = short_run();
    let dir = tempfile::tempdir().unwrap();
    export_run(dir.path(), &r, 0.5).unwrap();

    let json = fs::read_to_string(dir.path().join("results.json")).unwrap();
    let back = Results::from_json(&json).unwrap();
    assert_eq!(back.to_json(), json);

    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(trajectory_csv(&parse_trajectory_csv(&traj).unwrap()), traj);

    let sched = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    let (k, rows) = parse_schedule_csv(&sched).unwrap();
    assert_eq!(schedule_csv(&rows, k), sched);
}

#[test]
fn sweep_table_round_trips() {
    let rows = vec![
        SweepRow {
            param: "pj_mw".into(),
            value: 0.1,
            seed: 3,
            objective: 12.345678901234567,
            objective_fractional: 13.0,
            status: RunStatus::MaxIter,
            iters: 42,
            wallclock_s: 1.5,
        },
        SweepRow {
            param: "pj_mw".into(),
            value: 100.0,
            seed: 3,
            objective: f64::NAN,
            objective_fractional: f64::NAN,
            status: RunStatus::Infeasible,
            iters: 0,
            wallclock_s: 0.01,
        },
    ];
    let text = sweep_csv(&rows);
    let back = parse_sweep_csv(&text).unwrap();
    assert_eq!(sweep_csv(&back), text);
    assert_eq!(back[0].objective, rows[0].objective);
    assert!(back[1].objective.is_nan());
}
