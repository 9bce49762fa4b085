//! Time-discretized benchmark: the mission is cut into `N0` equal slots,
//! each slot holds one position pair and one scheduling vector, and the
//! slotwise problem is solved by the same successive convex approximation.
//!
//! Slot `n ∈ 1..=N0` uses the positions `q[n]` over `(t_{n−1}, t_n]`;
//! `q[0]` and `q[N0]` are the pinned endpoints.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::convexify::bounds::{floor, kappa_row};
use crate::convexify::{Counts, RateConsts, Slot, SumFn, Term, TermKind};
use crate::geometry::{dist, lerp, sub, Point};
use crate::sca::{initialize, RunStatus, SolveReport, Timings};
use crate::scenario::Scenario;
use crate::subsolver::{solve, Constraint, Equality, Ineq, Problem, SolverOptions, Status};
use crate::trajectory::{DiscretePath, Interp};
use crate::validate::audit_discrete;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdConfig {
    /// Number of slots.
    pub n0: usize,
    pub eps: f64,
    pub max_outer: usize,
    pub eps_ref: f64,
    pub round_schedule: bool,
    pub solver: SolverOptions,
}

impl Default for TdConfig {
    fn default() -> Self {
        TdConfig {
            n0: 40,
            eps: 1e-3,
            max_outer: 100,
            eps_ref: 1e-4,
            round_schedule: true,
            solver: SolverOptions::default(),
        }
    }
}

impl TdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 {
            return Err(Error::InvalidArgument("N0 must be at least 2".into()));
        }
        if !(self.eps > 0.0) || self.max_outer < 1 {
            return Err(Error::InvalidArgument(
                "eps must be positive and max_outer at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Slot length `T / N0`.
pub fn slot_len(sc: &Scenario, n0: usize) -> f64 {
    sc.mission_time / n0 as f64
}

struct TdLayout {
    n0: usize,
    /// Free positions `q[1..N0−1]`, `[x, y]` per UAV.
    s: Vec<[usize; 2]>,
    j: Vec<[usize; 2]>,
    /// `a[n−1][k]` for slot `n` (free scheduling only).
    a: Vec<Vec<usize>>,
    u: usize,
    n: usize,
}

impl TdLayout {
    fn new(n0: usize, k: usize, free: bool) -> Self {
        let mut next = 0;
        let mut pair = || {
            next += 2;
            [next - 2, next - 1]
        };
        let s: Vec<_> = (1..n0).map(|_| pair()).collect();
        let j: Vec<_> = (1..n0).map(|_| pair()).collect();
        let a = if free {
            (0..n0)
                .map(|_| {
                    (0..k)
                        .map(|_| {
                            next += 1;
                            next - 1
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        let u = next;
        TdLayout {
            n0,
            s,
            j,
            a,
            u,
            n: u + 1,
        }
    }

    fn point(&self, path: &DiscretePath, jammer: bool, n: usize) -> [Slot; 2] {
        if n == 0 || n == self.n0 {
            let p = if jammer { path.pos_j[n] } else { path.pos_s[n] };
            return [Slot::Const(p[0]), Slot::Const(p[1])];
        }
        let v = if jammer { self.j[n - 1] } else { self.s[n - 1] };
        [Slot::Var(v[0]), Slot::Var(v[1])]
    }

    fn encode(&self, path: &DiscretePath) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for n in 1..self.n0 {
            for c in 0..2 {
                x[self.s[n - 1][c]] = path.pos_s[n][c];
                x[self.j[n - 1][c]] = path.pos_j[n][c];
            }
        }
        for (n, row) in self.a.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                x[v] = path.sched[n + 1][k];
            }
        }
        x
    }

    fn decode(&self, x: &[f64], base: &DiscretePath) -> DiscretePath {
        let mut out = base.clone();
        for n in 1..self.n0 {
            out.pos_s[n] = [x[self.s[n - 1][0]], x[self.s[n - 1][1]]];
            out.pos_j[n] = [x[self.j[n - 1][0]], x[self.j[n - 1][1]]];
        }
        for (n, row) in self.a.iter().enumerate() {
            let w: Vec<f64> = row.iter().map(|&v| x[v].max(0.0)).collect();
            out.sched[n + 1] = crate::convexify::normalize(w);
        }
        out.sched[0] = out.sched[1].clone();
        out
    }
}

/// Affine row `Σ w·slot + constant ≥ 0` with constant slots folded in.
fn affine_row(terms: &[([Slot; 2], Point)], constant: f64, label: &str) -> Result<Option<Ineq>> {
    let mut coef: Vec<(usize, f64)> = Vec::new();
    let mut c = constant;
    for (slots, w) in terms {
        for (s, wi) in slots.iter().zip(w) {
            match *s {
                Slot::Var(i) => match coef.iter_mut().find(|e| e.0 == i) {
                    Some(e) => e.1 += wi,
                    None => coef.push((i, *wi)),
                },
                Slot::Const(v) => c += wi * v,
            }
        }
    }
    coef.retain(|e| e.1 != 0.0);
    if coef.is_empty() {
        if c < -1e-9 {
            return Err(Error::Infeasible(format!(
                "{label}: violated by pinned endpoints"
            )));
        }
        return Ok(None);
    }
    Ok(Some(Ineq::Affine { coef, constant: c }))
}

fn assemble_td(
    path: &DiscretePath,
    sc: &Scenario,
    free: bool,
    eps_ref: f64,
) -> Result<(TdLayout, Problem)> {
    let n0 = path.len() - 1;
    let k_users = sc.k();
    let dt = path.dt;
    let lay = TdLayout::new(n0, k_users, free);
    let c0 = Slot::Const(0.0);
    let mut ineqs = Vec::new();

    let mut user_terms: Vec<Vec<Term>> = vec![Vec::new(); k_users];
    for n in 1..=n0 {
        let s = lay.point(path, false, n);
        let j = lay.point(path, true, n);
        for (k, terms) in user_terms.iter_mut().enumerate() {
            let rate = RateConsts::new(path.pos_s[n], path.pos_j[n], k, sc);
            if !rate.judgment {
                continue;
            }
            let kind = if free {
                let h_r = rate.h_ref();
                let c = floor(h_r, eps_ref) / floor(path.sched[n][k], eps_ref);
                TermKind::Slot { rate, dt, c }
            } else if path.sched[n][k] > 0.5 {
                TermKind::SlotFixed { rate, dt }
            } else {
                continue;
            };
            let a = if free { Slot::Var(lay.a[n - 1][k]) } else { c0 };
            terms.push(Term {
                kind,
                slots: [a, s[0], s[1], j[0], j[1], c0, c0, c0, c0],
            });
        }
    }
    for (k, terms) in user_terms.into_iter().enumerate() {
        ineqs.push(Constraint {
            label: format!("throughput[{k}] >= U"),
            ineq: Ineq::Concave(Box::new(SumFn::new(terms, vec![(lay.u, -1.0)], 0.0))),
        });
    }

    let reach = sc.v_max * dt;
    for n in 1..=n0 {
        for jammer in [false, true] {
            let p0 = lay.point(path, jammer, n - 1);
            let p1 = lay.point(path, jammer, n);
            let term = Term {
                kind: TermKind::Step { reach },
                slots: [p0[0], p0[1], p1[0], p1[1], c0, c0, c0, c0, c0],
            };
            ineqs.push(Constraint {
                label: format!("step {}[{n}] <= V dt", if jammer { "J" } else { "S" }),
                ineq: Ineq::Concave(Box::new(SumFn::new(vec![term], vec![], 0.0))),
            });
        }
    }

    for n in 1..n0 {
        let s = lay.point(path, false, n);
        let j = lay.point(path, true, n);
        if sc.d_min > 0.0 {
            // 2 r·(S − J) − ‖r‖² ≥ d_min²
            let r = sub(path.pos_s[n], path.pos_j[n]);
            let rr = r[0] * r[0] + r[1] * r[1];
            let label = format!("collision[{n}]");
            if let Some(ineq) = affine_row(
                &[
                    (s, [2.0 * r[0], 2.0 * r[1]]),
                    (j, [-2.0 * r[0], -2.0 * r[1]]),
                ],
                -rr - sc.d_min * sc.d_min,
                &label,
            )? {
                ineqs.push(Constraint { label, ineq });
            }
        }
        let mut pairs = vec![(s, path.pos_s[n], sc.eve_pos, "S-eve".to_string())];
        if sc.p_j > 0.0 {
            pairs
                .extend((0..k_users).map(|k| (j, path.pos_j[n], sc.gu_pos[k], format!("J-gu{k}"))));
        }
        for (slots, qr, w, name) in pairs {
            let (g, c) = kappa_row(qr, w);
            let label = format!("kappa {name} [{n}]");
            if let Some(ineq) = affine_row(&[(slots, g)], c, &label)? {
                ineqs.push(Constraint { label, ineq });
            }
        }
    }

    let mut eqs = Vec::new();
    for (n, row) in lay.a.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            ineqs.push(Constraint {
                label: format!("a[{}][{k}] >= 0", n + 1),
                ineq: Ineq::Affine {
                    coef: vec![(v, 1.0)],
                    constant: 0.0,
                },
            });
        }
        eqs.push(Equality {
            label: format!("sum a[{}] = 1", n + 1),
            coef: row.iter().map(|&v| (v, 1.0)).collect(),
            rhs: 1.0,
        });
    }
    let problem = Problem {
        n: lay.n,
        objective: vec![(lay.u, 1.0)],
        ineqs,
        eqs,
    };
    Ok((lay, problem))
}

fn min_throughput(path: &DiscretePath, sc: &Scenario) -> f64 {
    path.integrate_throughput(sc)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Slot-point feasibility: per-slot displacement and pair distance.
fn check_path(path: &DiscretePath, sc: &Scenario) -> Result<()> {
    let reach = sc.v_max * path.dt;
    for n in 1..path.len() {
        for (name, p) in [("S", &path.pos_s), ("J", &path.pos_j)] {
            let step = dist(p[n - 1], p[n]);
            if step > reach * (1.0 + 1e-9) + 1e-9 {
                return Err(Error::Invariant(format!(
                    "{name} moves {step} m in slot {n}, limit {reach} m"
                )));
            }
        }
    }
    for n in 0..path.len() {
        let d = dist(path.pos_s[n], path.pos_j[n]);
        if sc.d_min > 0.0 && d < sc.d_min - 1e-6 {
            return Err(Error::Invariant(format!(
                "UAVs {d} m apart at slot point {n}"
            )));
        }
    }
    Ok(())
}

/// Slot-sampled copy of the co-SHF initial trajectory, or straight
/// constant-speed lines when the hover tour does not fit.
pub fn initial_path(sc: &Scenario, n0: usize) -> Result<DiscretePath> {
    let dt = slot_len(sc, n0);
    let need = dist(sc.start_s, sc.end_s).max(dist(sc.start_j, sc.end_j));
    if sc.v_max * dt * n0 as f64 + 1e-9 < need {
        return Err(Error::Infeasible(format!(
            "endpoints are {need:.3} m apart but {n0} slots of {dt:.3} s cover only {:.3} m",
            sc.v_max * dt * n0 as f64
        )));
    }
    sc.validate()?;
    let k = sc.k();
    let times: Vec<f64> = (0..=n0).map(|n| n as f64 * dt).collect();
    let (mut pos_s, mut pos_j): (Vec<Point>, Vec<Point>) = match initialize(sc) {
        Ok(traj) => times.iter().map(|&t| traj.positions_at_time(sc, t)).unzip(),
        Err(_) => (0..=n0)
            .map(|n| {
                let z = n as f64 / n0 as f64;
                (lerp(sc.start_s, sc.end_s, z), lerp(sc.start_j, sc.end_j, z))
            })
            .unzip(),
    };
    pos_s[0] = sc.start_s;
    pos_j[0] = sc.start_j;
    pos_s[n0] = sc.end_s;
    pos_j[n0] = sc.end_j;
    let path = DiscretePath {
        dt,
        times,
        pos_s,
        pos_j,
        sched: vec![vec![1.0 / k as f64; k]; n0 + 1],
        interp: Interp::HoldNext,
    };
    check_path(&path, sc).map_err(|e| Error::Init(format!("slot-sampled initial path: {e}")))?;
    Ok(path)
}

struct TdPhase {
    path: DiscretePath,
    trace: Vec<f64>,
    iters: usize,
    status: RunStatus,
    guard: bool,
    steps: usize,
    counts: Counts,
    message: Option<String>,
}

fn td_phase(sc: &Scenario, cfg: &TdConfig, init: DiscretePath, free: bool) -> TdPhase {
    let mut path = init;
    let mut obj = min_throughput(&path, sc);
    let mut out = TdPhase {
        path: path.clone(),
        trace: vec![obj],
        iters: 0,
        status: RunStatus::MaxIter,
        guard: false,
        steps: 0,
        counts: Counts {
            vars: 0,
            core_vars: 0,
            constraints: 0,
        },
        message: None,
    };
    for _ in 0..cfg.max_outer {
        let (lay, problem) = match assemble_td(&path, sc, free, cfg.eps_ref) {
            Ok(a) => a,
            Err(e) => {
                out.status = RunStatus::Infeasible;
                out.message = Some(e.to_string());
                break;
            }
        };
        out.counts = Counts {
            vars: lay.n,
            core_vars: lay.n - 1,
            constraints: problem.ineqs.len() + problem.eqs.len(),
        };
        let mut x0 = lay.encode(&path);
        let sums = (0..sc.k())
            .filter_map(|k| problem.constraint_value(k, &x0))
            .fold(f64::INFINITY, f64::min);
        x0[lay.u] = sums - 1e-6 * sums.abs().max(1.0);
        let sol = solve(&problem, &x0, &cfg.solver);
        out.steps += sol.newton_steps;
        if sol.status == Status::Infeasible {
            out.status = RunStatus::Infeasible;
            out.message = Some(format!(
                "subproblem infeasible at {}",
                sol.violated.unwrap_or_default()
            ));
            break;
        }
        out.iters += 1;
        let next = lay.decode(&sol.x, &path);
        let next_obj = min_throughput(&next, sc);
        if next_obj < obj - 1e-9 || check_path(&next, sc).is_err() {
            out.guard = true;
            out.status = RunStatus::Converged;
            break;
        }
        let delta = next_obj - obj;
        path = next;
        obj = next_obj;
        out.trace.push(obj);
        out.path = path.clone();
        if delta.abs() < cfg.eps {
            out.status = RunStatus::Converged;
            break;
        }
    }
    out
}

fn round_path(path: &mut DiscretePath) {
    for w in path.sched.iter_mut() {
        let best = (0..w.len()).fold(0, |b, k| if w[k] > w[b] { k } else { b });
        w.iter_mut()
            .enumerate()
            .for_each(|(k, a)| *a = if k == best { 1.0 } else { 0.0 });
    }
}

/// Run the time-discretized benchmark.
pub fn run_td(sc: &Scenario, cfg: &TdConfig) -> Result<(DiscretePath, SolveReport)> {
    cfg.validate()?;
    let t0 = Instant::now();
    let init = initial_path(sc, cfg.n0)?;
    let init_s = t0.elapsed().as_secs_f64();

    let start = Instant::now();
    let phase = td_phase(sc, cfg, init, true);
    let optimize_s = start.elapsed().as_secs_f64();
    let objective_fractional = phase.trace.last().copied().unwrap_or(f64::NAN);
    let mut status = phase.status;
    let mut message = phase.message;
    let mut guard = phase.guard;
    let mut steps = phase.steps;
    let counts = phase.counts;

    let polish_start = Instant::now();
    let (path, polish_trace, polish_iters) =
        if cfg.round_schedule && status != RunStatus::Infeasible {
            let mut rounded = phase.path;
            round_path(&mut rounded);
            let polish = td_phase(sc, cfg, rounded, false);
            if polish.status != RunStatus::Converged {
                status = polish.status;
            }
            if message.is_none() {
                message = polish.message;
            }
            guard |= polish.guard;
            steps += polish.steps;
            (polish.path, polish.trace, polish.iters)
        } else {
            (phase.path, Vec::new(), 0)
        };
    let polish_s = polish_start.elapsed().as_secs_f64();

    let audit_start = Instant::now();
    let throughput = path.integrate_throughput(sc);
    let objective = throughput.iter().copied().fold(f64::INFINITY, f64::min);
    let audit = audit_discrete(&path, sc, &throughput);
    let audit_s = audit_start.elapsed().as_secs_f64();

    let report = SolveReport {
        objective_trace: phase.trace,
        polish_trace,
        iters: phase.iters,
        polish_iters,
        status,
        guard_triggered: guard,
        objective,
        objective_fractional,
        throughput,
        counts,
        formula_counts: None,
        subsolver_newton_steps: steps,
        timings: Timings {
            init_s,
            optimize_s,
            polish_s,
            audit_s,
            total_s: init_s + start.elapsed().as_secs_f64(),
        },
        audit: Some(audit),
        message,
    };
    Ok((path, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::random_scenario;

    #[test]
    fn layout_counts_grow_linearly() {
        let a = TdLayout::new(10, 3, true);
        let b = TdLayout::new(20, 3, true);
        assert_eq!(a.n, 4 * 9 + 3 * 10 + 1);
        assert_eq!(b.n - a.n, 4 * 10 + 3 * 10);
    }

    #[test]
    fn rejects_too_few_slots() {
        let sc = Scenario::reference();
        let cfg = TdConfig {
            n0: 1,
            ..TdConfig::default()
        };
        assert!(run_td(&sc, &cfg).is_err());
    }

    #[test]
    fn unreachable_endpoints_are_reported() {
        let mut sc = random_scenario(4, 2, 500.0);
        sc.start_s = [0.0, 0.0];
        sc.end_s = [sc.v_max * sc.mission_time + 50.0, 0.0];
        let err = initial_path(&sc, 10).unwrap_err().to_string();
        assert!(err.contains("cover only"), "{err}");
    }

    #[test]
    fn encode_decode_round_trip() {
        let sc = Scenario::reference();
        let path = initial_path(&sc, 12).unwrap();
        let lay = TdLayout::new(12, sc.k(), true);
        let back = lay.decode(&lay.encode(&path), &path);
        assert_eq!(back, path);
    }

    #[test]
    fn initial_path_respects_slot_limits() {
        let sc = Scenario::reference();
        let path = initial_path(&sc, 20).unwrap();
        assert_eq!(path.len(), 21);
        assert!(check_path(&path, &sc).is_ok());
        assert_eq!(path.pos_s[20], sc.end_s);
    }

    #[test]
    fn short_run_is_monotone_and_feasible() {
        let sc = random_scenario(5, 2, 400.0);
        let cfg = TdConfig {
            n0: 10,
            max_outer: 5,
            ..TdConfig::default()
        };
        let (path, rep) = run_td(&sc, &cfg).unwrap();
        assert!(
            rep.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9),
            "{:?}",
            rep.objective_trace
        );
        assert!(check_path(&path, &sc).is_ok());
        assert!(path.sched.iter().flatten().all(|&a| a == 0.0 || a == 1.0));
        assert!(rep.objective >= rep.objective_trace[0] - 1e-9 || rep.polish_trace.is_empty());
    }
}
