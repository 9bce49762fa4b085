//! Result export: `results.json`, `trajectory.csv`, `schedule.csv` and sweep
//! tables. Numbers are written in Rust's shortest round-trip form with a
//! `.` decimal separator, so parsing and re-exporting is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sca::{RunStatus, SolveReport, Timings};
use crate::scenario::Scenario;
use crate::trajectory::{CoShfTrajectory, DiscretePath, Piece};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "xS", "yS", "xJ", "yJ", "active_user"];
pub const SWEEP_HEADER: [&str; 8] = [
    "param",
    "value",
    "seed",
    "objective",
    "objective_fractional",
    "status",
    "iters",
    "wallclock_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Coshf,
    Td,
    Single,
}

/// Everything written to `results.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Results {
    pub format_version: u32,
    pub mode: RunMode,
    pub scenario_hash: String,
    pub scenario: Scenario,
    pub config: serde_json::Value,
    pub report: SolveReport,
    /// Final (rounded) co-SHF solution.
    pub trajectory: Option<CoShfTrajectory>,
    /// co-SHF solution before rounding.
    pub fractional: Option<CoShfTrajectory>,
    /// Slotted benchmark solution.
    pub path: Option<DiscretePath>,
}

impl Results {
    pub fn new(
        mode: RunMode,
        scenario: &Scenario,
        config: impl Serialize,
        report: SolveReport,
    ) -> Self {
        Results {
            format_version: FORMAT_VERSION,
            mode,
            scenario_hash: scenario.hash_hex(),
            scenario: scenario.clone(),
            config: serde_json::to_value(config).expect("configs serialize"),
            report,
            trajectory: None,
            fractional: None,
            path: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// JSON with wallclock timings zeroed; identical across reruns.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.report.timings = Timings::default();
        c.to_json()
    }

    /// Sampled path used for `trajectory.csv`.
    pub fn sampled_path(&self, sample_dt: f64) -> Result<Option<DiscretePath>> {
        if let Some(p) = &self.path {
            return Ok(Some(p.clone()));
        }
        match &self.trajectory {
            Some(t) => Ok(Some(t.to_discrete(&self.scenario, sample_dt)?)),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub s: [f64; 2],
    pub j: [f64; 2],
    pub active_user: usize,
}

pub fn trajectory_rows(path: &DiscretePath) -> Vec<TrajectoryRow> {
    (0..path.len())
        .map(|n| TrajectoryRow {
            t: path.times[n],
            s: path.pos_s[n],
            j: path.pos_j[n],
            active_user: path.active_user(n),
        })
        .collect()
}

/// One hover, flight segment or time slot with its scheduling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub kind: String,
    pub i: usize,
    pub j: usize,
    pub start: f64,
    pub duration: f64,
    pub weights: Vec<f64>,
}

pub fn schedule_rows_coshf(traj: &CoShfTrajectory, sc: &Scenario) -> Vec<ScheduleRow> {
    let mut start = 0.0;
    traj.timeline(sc)
        .iter()
        .map(|p| {
            let (kind, i, j) = match *p {
                Piece::Hover { i, .. } => ("hover", i, 0),
                Piece::Fly { seg, .. } => ("fly", seg.i, seg.j),
            };
            let row = ScheduleRow {
                kind: kind.into(),
                i,
                j,
                start,
                duration: p.duration(),
                weights: traj.piece_weights(p).to_vec(),
            };
            start += p.duration();
            row
        })
        .collect()
}

/// Slot `n` covers `(t_{n−1}, t_n]`.
pub fn schedule_rows_slots(path: &DiscretePath) -> Vec<ScheduleRow> {
    (1..path.len())
        .map(|n| ScheduleRow {
            kind: "slot".into(),
            i: n,
            j: 0,
            start: path.times[n - 1],
            duration: path.times[n] - path.times[n - 1],
            weights: path.sched[n].clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub objective: f64,
    pub objective_fractional: f64,
    pub status: RunStatus,
    pub iters: usize,
    pub wallclock_s: f64,
}

fn status_str(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Converged => "converged",
        RunStatus::MaxIter => "max_iter",
        RunStatus::Infeasible => "infeasible",
    }
}

fn parse_status(s: &str) -> Result<RunStatus> {
    match s {
        "converged" => Ok(RunStatus::Converged),
        "max_iter" => Ok(RunStatus::MaxIter),
        "infeasible" => Ok(RunStatus::Infeasible),
        _ => Err(Error::Parse(format!("unknown status `{s}`"))),
    }
}

fn write_table(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(
            rec.map_err(|e| Error::Parse(e.to_string()))?
                .iter()
                .map(String::from)
                .collect(),
        );
    }
    Ok((header, rows))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

fn expect_header(got: &[String], want: &[String]) -> Result<()> {
    if got != want {
        return Err(Error::Parse(format!(
            "unexpected header {got:?}, expected {want:?}"
        )));
    }
    Ok(())
}

fn fixed_header(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    write_table(
        &fixed_header(&TRAJECTORY_HEADER),
        rows.iter().map(|r| {
            vec![
                r.t.to_string(),
                r.s[0].to_string(),
                r.s[1].to_string(),
                r.j[0].to_string(),
                r.j[1].to_string(),
                r.active_user.to_string(),
            ]
        }),
    )
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let (h, rows) = read_table(text)?;
    expect_header(&h, &fixed_header(&TRAJECTORY_HEADER))?;
    rows.iter()
        .map(|r| {
            Ok(TrajectoryRow {
                t: num(&r[0])?,
                s: [num(&r[1])?, num(&r[2])?],
                j: [num(&r[3])?, num(&r[4])?],
                active_user: num(&r[5])?,
            })
        })
        .collect()
}

fn schedule_header(k: usize) -> Vec<String> {
    let mut h = fixed_header(&["kind", "i", "j", "start", "duration"]);
    h.extend((0..k).map(|u| format!("a{u}")));
    h
}

pub fn schedule_csv(rows: &[ScheduleRow], k: usize) -> String {
    write_table(
        &schedule_header(k),
        rows.iter().map(|r| {
            let mut v = vec![
                r.kind.clone(),
                r.i.to_string(),
                r.j.to_string(),
                r.start.to_string(),
                r.duration.to_string(),
            ];
            v.extend(r.weights.iter().map(|a| a.to_string()));
            v
        }),
    )
}

pub fn parse_schedule_csv(text: &str) -> Result<(usize, Vec<ScheduleRow>)> {
    let (h, rows) = read_table(text)?;
    let k = h.len().saturating_sub(5);
    expect_header(&h, &schedule_header(k))?;
    let rows = rows
        .iter()
        .map(|r| {
            Ok(ScheduleRow {
                kind: r[0].clone(),
                i: num(&r[1])?,
                j: num(&r[2])?,
                start: num(&r[3])?,
                duration: num(&r[4])?,
                weights: r[5..].iter().map(|a| num(a)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((k, rows))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    write_table(
        &fixed_header(&SWEEP_HEADER),
        rows.iter().map(|r| {
            vec![
                r.param.clone(),
                r.value.to_string(),
                r.seed.to_string(),
                r.objective.to_string(),
                r.objective_fractional.to_string(),
                status_str(r.status).into(),
                r.iters.to_string(),
                r.wallclock_s.to_string(),
            ]
        }),
    )
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let (h, rows) = read_table(text)?;
    expect_header(&h, &fixed_header(&SWEEP_HEADER))?;
    rows.iter()
        .map(|r| {
            Ok(SweepRow {
                param: r[0].clone(),
                value: num(&r[1])?,
                seed: num(&r[2])?,
                objective: num(&r[3])?,
                objective_fractional: num(&r[4])?,
                status: parse_status(&r[5])?,
                iters: num(&r[6])?,
                wallclock_s: num(&r[7])?,
            })
        })
        .collect()
}

/// Write `results.json`, `trajectory.csv` (sampled every `sample_dt` s for
/// co-SHF solutions) and `schedule.csv` into `dir`.
pub fn export_run(dir: &Path, results: &Results, sample_dt: f64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    put("results.json", results.to_json())?;
    if let Some(path) = results.sampled_path(sample_dt)? {
        put("trajectory.csv", trajectory_csv(&trajectory_rows(&path)))?;
    }
    let k = results.scenario.k();
    let sched = match (&results.path, &results.trajectory) {
        (Some(p), _) => Some(schedule_rows_slots(p)),
        (None, Some(t)) => Some(schedule_rows_coshf(t, &results.scenario)),
        _ => None,
    };
    if let Some(rows) = sched {
        put("schedule.csv", schedule_csv(&rows, k))?;
    }
    Ok(written)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, sweep_csv(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sca::initialize;

    #[test]
    fn empty_sweep_is_header_only() {
        assert_eq!(
            sweep_csv(&[]),
            "param,value,seed,objective,objective_fractional,status,iters,wallclock_s\n"
        );
        assert!(parse_sweep_csv(&sweep_csv(&[])).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trips() {
        let sc = Scenario::reference();
        let t = initialize(&sc).unwrap();
        let path = t.to_discrete(&sc, 0.7).unwrap();
        let a = trajectory_csv(&trajectory_rows(&path));
        assert_eq!(trajectory_csv(&parse_trajectory_csv(&a).unwrap()), a);
        let s = schedule_csv(&schedule_rows_coshf(&t, &sc), sc.k());
        let (k, rows) = parse_schedule_csv(&s).unwrap();
        assert_eq!(k, sc.k());
        assert_eq!(schedule_csv(&rows, k), s);
        let sweep = vec![SweepRow {
            param: "pj".into(),
            value: 1e-4,
            seed: 3,
            objective: 1.0 / 3.0,
            objective_fractional: 0.5,
            status: RunStatus::MaxIter,
            iters: 7,
            wallclock_s: 0.125,
        }];
        assert_eq!(parse_sweep_csv(&sweep_csv(&sweep)).unwrap(), sweep);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(parse_trajectory_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn schedule_rows_cover_the_mission() {
        let sc = Scenario::reference();
        let t = initialize(&sc).unwrap();
        let rows = schedule_rows_coshf(&t, &sc);
        let end = rows.last().map(|r| r.start + r.duration).unwrap();
        assert!((end - t.total_time(&sc)).abs() < 1e-9);
        assert_eq!(rows.iter().filter(|r| r.kind == "hover").count(), sc.k());
    }
}
