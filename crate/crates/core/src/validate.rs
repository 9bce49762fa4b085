//! Feasibility audit of finished trajectories.
//!
//! The audit rebuilds the hover/fly pieces directly from the stored points,
//! samples every piece at midpoints (piece boundaries are always sample
//! breakpoints) and compares the sampled throughput with the reported one.

use serde::{Deserialize, Serialize};

use crate::channel::secrecy_rate;
use crate::geometry::{dist, lerp, sub, Point};
use crate::scenario::Scenario;
use crate::trajectory::{min_relative_distance, CoShfTrajectory, DiscretePath};

/// Relative tolerance on speed, separation and time budget.
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    /// Largest flown speed divided by `V`.
    pub max_speed_ratio: f64,
    pub min_separation: f64,
    /// Mission time at which `min_separation` occurs.
    pub min_separation_time: f64,
    /// `T` minus the used time.
    pub time_slack: f64,
    /// Largest deviation of a scheduling vector from the simplex.
    pub simplex_violation: f64,
    pub schedule_binary: bool,
    /// Throughput from the audit's own midpoint sampling.
    pub sampled_throughput: Vec<f64>,
    /// Largest relative gap between sampled and reported throughput.
    pub throughput_gap: f64,
    pub samples: usize,
    pub feasible: bool,
}

struct AuditPiece {
    duration: f64,
    s: (Point, Point),
    j: (Point, Point),
    weights: Vec<f64>,
}

fn pieces(traj: &CoShfTrajectory, v_max: f64) -> Vec<AuditPiece> {
    let k = traj.hover_s.len();
    let n = traj.turn_s.first().map_or(0, Vec::len);
    let mut s_pts = vec![traj.start_s];
    let mut j_pts = vec![traj.start_j];
    let mut tags = Vec::new();
    for i in 0..=k {
        if i >= 1 {
            s_pts.push(traj.hover_s[i - 1]);
            j_pts.push(traj.hover_j[i - 1]);
            tags.push(Some(i - 1));
        }
        for j in 0..n {
            s_pts.push(traj.turn_s[i][j]);
            j_pts.push(traj.turn_j[i][j]);
            tags.push(None);
        }
    }
    s_pts.push(traj.end_s);
    j_pts.push(traj.end_j);
    // tags[m] marks whether point m+1 is a hover point
    let mut out = Vec::new();
    let mut fly_i = 0;
    let mut fly_j = 0;
    for m in 0..s_pts.len() - 1 {
        let (s0, s1, j0, j1) = (s_pts[m], s_pts[m + 1], j_pts[m], j_pts[m + 1]);
        let chord = dist(s0, s1).max(dist(j0, j1));
        let duration = if chord < 1e-6 { 0.0 } else { chord / v_max };
        out.push(AuditPiece {
            duration,
            s: (s0, s1),
            j: (j0, j1),
            weights: traj.sched_fly[fly_i][fly_j].clone(),
        });
        if fly_j < n {
            fly_j += 1;
        } else {
            fly_i += 1;
            fly_j = 0;
        }
        if let Some(Some(h)) = tags.get(m) {
            out.push(AuditPiece {
                duration: traj.hover_dur[*h],
                s: (s1, s1),
                j: (j1, j1),
                weights: traj.sched_hover[*h].clone(),
            });
        }
    }
    out
}

fn simplex_violation(w: &[f64]) -> f64 {
    let neg = w.iter().fold(0.0f64, |m, &a| m.max(-a));
    neg.max((w.iter().sum::<f64>() - 1.0).abs())
}

/// Audit a co-SHF trajectory against the constraints of `sc` using at least
/// `samples` sample points. `reported` is the throughput to compare against.
pub fn audit_trajectory(
    traj: &CoShfTrajectory,
    sc: &Scenario,
    reported: &[f64],
    samples: usize,
) -> Audit {
    let ps = pieces(traj, sc.v_max);
    let total: f64 = ps.iter().map(|p| p.duration).sum();
    let flying: f64 = ps
        .iter()
        .filter(|p| p.s.0 != p.s.1 || p.j.0 != p.j.1)
        .map(|p| p.duration)
        .sum();
    let k = sc.k();
    let mut sampled = vec![0.0; k];
    let mut max_speed: f64 = 0.0;
    let mut min_sep = f64::INFINITY;
    let mut min_sep_time = 0.0;
    let mut used = 0;
    let mut elapsed = 0.0;
    let mut note_sep = |d: f64, t: f64, min_sep: &mut f64| {
        if d < *min_sep {
            *min_sep = d;
            min_sep_time = t;
        }
    };
    for p in &ps {
        note_sep(dist(p.s.0, p.j.0), elapsed, &mut min_sep);
        if p.duration > 0.0 {
            max_speed = max_speed
                .max(dist(p.s.0, p.s.1) / p.duration)
                .max(dist(p.j.0, p.j.1) / p.duration);
            let moving = p.s.0 != p.s.1 || p.j.0 != p.j.1;
            let m = if !moving {
                1
            } else if flying > 0.0 {
                ((samples as f64 * p.duration / flying).ceil() as usize).max(2)
            } else {
                2
            };
            used += m;
            let h = p.duration / m as f64;
            for q in 0..m {
                let z = (q as f64 + 0.5) / m as f64;
                let (qs, qj) = (lerp(p.s.0, p.s.1, z), lerp(p.j.0, p.j.1, z));
                note_sep(dist(qs, qj), elapsed + z * p.duration, &mut min_sep);
                for (u, acc) in sampled.iter_mut().enumerate() {
                    if p.weights[u] != 0.0 {
                        *acc += h * p.weights[u] * secrecy_rate(qs, qj, u, sc);
                    }
                }
            }
        }
        elapsed += p.duration;
        note_sep(dist(p.s.1, p.j.1), elapsed, &mut min_sep);
    }
    let speed_ratio = max_speed / sc.v_max;
    let simplex = traj
        .sched_hover
        .iter()
        .chain(traj.sched_fly.iter().flatten())
        .map(|w| simplex_violation(w))
        .fold(0.0, f64::max);
    let gap = sampled
        .iter()
        .zip(reported)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    let time_slack = sc.mission_time - total;
    let feasible = speed_ratio <= 1.0 + AUDIT_TOL
        && min_sep >= sc.d_min - AUDIT_TOL * sc.d_min.max(1.0)
        && time_slack >= -AUDIT_TOL * sc.mission_time
        && simplex <= AUDIT_TOL
        && traj.hover_dur.iter().all(|&t| t >= -AUDIT_TOL);
    Audit {
        max_speed_ratio: speed_ratio,
        min_separation: min_sep,
        min_separation_time: min_sep_time,
        time_slack,
        simplex_violation: simplex,
        schedule_binary: traj.schedule_is_binary(),
        sampled_throughput: sampled,
        throughput_gap: gap,
        samples: used,
        feasible,
    }
}

/// Audit a sampled path: speed between consecutive samples, exact minimum
/// separation under straight-line motion between samples, time budget.
pub fn audit_discrete(path: &DiscretePath, sc: &Scenario, reported: &[f64]) -> Audit {
    let mut max_speed: f64 = 0.0;
    let mut min_sep = f64::INFINITY;
    let mut min_sep_time = 0.0;
    for n in 0..path.len() {
        let d = dist(path.pos_s[n], path.pos_j[n]);
        if d < min_sep {
            min_sep = d;
            min_sep_time = path.times[n];
        }
        if n == 0 {
            continue;
        }
        let h = path.times[n] - path.times[n - 1];
        let step =
            dist(path.pos_s[n - 1], path.pos_s[n]).max(dist(path.pos_j[n - 1], path.pos_j[n]));
        if h > 0.0 {
            max_speed = max_speed.max(step / h);
        } else if step > 0.0 {
            max_speed = f64::INFINITY;
        }
        let r0 = sub(path.pos_s[n - 1], path.pos_j[n - 1]);
        let r1 = sub(path.pos_s[n], path.pos_j[n]);
        let d = min_relative_distance(r0, r1);
        if d < min_sep {
            min_sep = d;
            min_sep_time = path.times[n - 1];
        }
    }
    let sampled = path.integrate_throughput(sc);
    let gap = sampled
        .iter()
        .zip(reported)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    let total = path.times.last().copied().unwrap_or(0.0);
    let simplex = path
        .sched
        .iter()
        .map(|w| simplex_violation(w))
        .fold(0.0, f64::max);
    let binary = path.sched.iter().flatten().all(|&a| a == 0.0 || a == 1.0);
    let speed_ratio = max_speed / sc.v_max;
    let time_slack = sc.mission_time - total;
    let feasible = speed_ratio <= 1.0 + AUDIT_TOL
        && min_sep >= sc.d_min - AUDIT_TOL * sc.d_min.max(1.0)
        && time_slack >= -AUDIT_TOL * sc.mission_time
        && simplex <= AUDIT_TOL;
    Audit {
        max_speed_ratio: speed_ratio,
        min_separation: min_sep,
        min_separation_time: min_sep_time,
        time_slack,
        simplex_violation: simplex,
        schedule_binary: binary,
        sampled_throughput: sampled,
        throughput_gap: gap,
        samples: path.len(),
        feasible,
    }
}
