//! Initialization and the outer successive convex approximation loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::convexify::{assemble, formula_counts, Counts, Mode};
use crate::geometry::{add, lerp, norm, scale, sub, Point};
use crate::quadrature::UnitRule;
use crate::scenario::Scenario;
use crate::subsolver::{solve, SolverOptions, Status};
use crate::trajectory::{CoShfTrajectory, Uav};
use crate::tsp::visit_order;
use crate::validate::{audit_trajectory, Audit};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaConfig {
    /// Stop when the objective changes by less than this (bits/Hz).
    pub eps: f64,
    pub max_outer: usize,
    pub quad_order: usize,
    /// Equal panels per segment, each with `quad_order` nodes.
    pub quad_panels: usize,
    /// Floor applied to reference values that enter ratios.
    pub eps_ref: f64,
    /// Round scheduling to one-hot and re-optimize positions and durations.
    pub round_schedule: bool,
    pub solver: SolverOptions,
    /// Samples used by the final audit.
    pub audit_samples: usize,
}

impl Default for ScaConfig {
    fn default() -> Self {
        ScaConfig {
            eps: 1e-3,
            max_outer: 100,
            quad_order: 8,
            quad_panels: 4,
            eps_ref: 1e-4,
            round_schedule: true,
            solver: SolverOptions::default(),
            audit_samples: 10_000,
        }
    }
}

impl ScaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        if self.max_outer < 1 {
            return Err(Error::InvalidArgument(
                "max_outer must be at least 1".into(),
            ));
        }
        if self.quad_order < 1 || self.quad_panels < 1 {
            return Err(Error::InvalidArgument(
                "quad_order and quad_panels must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub init_s: f64,
    pub optimize_s: f64,
    pub polish_s: f64,
    pub audit_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Minimum throughput after initialization and after each accepted iteration.
    pub objective_trace: Vec<f64>,
    /// Same after rounding, during the re-optimization with frozen scheduling.
    pub polish_trace: Vec<f64>,
    pub iters: usize,
    pub polish_iters: usize,
    pub status: RunStatus,
    /// A surrogate step that lowered the true objective was rejected.
    pub guard_triggered: bool,
    pub objective: f64,
    /// Objective before rounding (equals `objective` without rounding).
    pub objective_fractional: f64,
    pub throughput: Vec<f64>,
    pub counts: Counts,
    /// `(M_var, M_con)` from the closed-form counting rule.
    pub formula_counts: Option<(usize, usize)>,
    pub subsolver_newton_steps: usize,
    pub timings: Timings,
    pub audit: Option<Audit>,
    pub message: Option<String>,
}

/// Result of a run: rounded (or final) trajectory plus the fractional one.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: CoShfTrajectory,
    pub fractional: CoShfTrajectory,
    pub report: SolveReport,
}

/// Hover above users in shortest-tour order, jammer on its straight chord,
/// spare time split evenly, uniform scheduling.
pub fn initialize(sc: &Scenario) -> Result<CoShfTrajectory> {
    init_with(sc, false)
}

fn init_with(sc: &Scenario, tied: bool) -> Result<CoShfTrajectory> {
    sc.validate()?;
    let k = sc.k();
    let n = sc.n_turn;
    let order = visit_order(sc.start_s, &sc.gu_pos, sc.end_s);
    let hover_s: Vec<Point> = order.iter().map(|&i| sc.gu_pos[i]).collect();
    let stops: Vec<Point> = std::iter::once(sc.start_s)
        .chain(hover_s.iter().copied())
        .chain([sc.end_s])
        .collect();
    let turn_s: Vec<Vec<Point>> = (0..=k)
        .map(|i| {
            (1..=n)
                .map(|j| lerp(stops[i], stops[i + 1], j as f64 / (n + 1) as f64))
                .collect()
        })
        .collect();
    let total_pts = ((k + 1) * (n + 1)) as f64;
    let on_chord = |m: usize| lerp(sc.start_j, sc.end_j, m as f64 / total_pts);
    let (hover_j, turn_j) = if tied {
        (hover_s.clone(), turn_s.clone())
    } else {
        (
            (1..=k).map(|i| on_chord(i * (n + 1))).collect(),
            (0..=k)
                .map(|i| (1..=n).map(|j| on_chord(i * (n + 1) + j)).collect())
                .collect(),
        )
    };
    let uniform = vec![1.0 / k as f64; k];
    let mut traj = CoShfTrajectory {
        start_s: sc.start_s,
        end_s: sc.end_s,
        start_j: sc.start_j,
        end_j: sc.end_j,
        hover_s,
        hover_j,
        turn_s,
        turn_j,
        hover_dur: vec![0.0; k],
        sched_hover: vec![uniform.clone(); k],
        sched_fly: vec![vec![uniform; n + 1]; k + 1],
    };
    if !tied && sc.d_min > 0.0 {
        repair_collision(&mut traj, sc)?;
    }
    let flight = traj.flight_time(sc);
    if flight > sc.mission_time {
        return Err(Error::Init(format!(
            "mission time {} s is too short for the initial tour; at least {flight:.3} s required",
            sc.mission_time
        )));
    }
    let spare = sc.mission_time - flight;
    traj.hover_dur = vec![spare / k as f64; k];
    Ok(traj)
}

fn min_separation(traj: &CoShfTrajectory) -> f64 {
    traj.segments()
        .map(|s| traj.min_pair_distance(s))
        .fold(f64::INFINITY, f64::min)
}

/// Shift the jammer's free points perpendicular to its chord when the two
/// initial paths come within `d_min`.
fn repair_collision(traj: &mut CoShfTrajectory, sc: &Scenario) -> Result<()> {
    let m = min_separation(traj);
    if m >= sc.d_min {
        return Ok(());
    }
    let chord = sub(sc.end_j, sc.start_j);
    let len = norm(chord);
    let perp = if len > 0.0 {
        [-chord[1] / len, chord[0] / len]
    } else {
        [0.0, 1.0]
    };
    let shift = scale(perp, sc.d_min - m + 0.1);
    traj.hover_j.iter_mut().for_each(|p| *p = add(*p, shift));
    traj.turn_j
        .iter_mut()
        .flatten()
        .for_each(|p| *p = add(*p, shift));
    let after = min_separation(traj);
    if after < sc.d_min {
        return Err(Error::Init(format!(
            "initial paths stay {after:.3} m apart after lateral repair; d_min is {} m",
            sc.d_min
        )));
    }
    Ok(())
}

/// Scenario used for single-UAV operation: no jamming, the jammer rides
/// along with UAV-S, no separation requirement.
pub fn single_uav_scenario(sc: &Scenario) -> Scenario {
    let mut s = sc.with_p_j(0.0);
    s.start_j = s.start_s;
    s.end_j = s.end_s;
    s.d_min = 0.0;
    s
}

/// Dual-UAV co-SHF optimization.
pub fn run(sc: &Scenario, cfg: &ScaConfig) -> Result<RunOutput> {
    let t0 = Instant::now();
    let init = initialize(sc)?;
    let init_s = t0.elapsed().as_secs_f64();
    optimize(sc, cfg, init, false, init_s)
}

/// Single-UAV successive hover-and-fly baseline.
pub fn run_single_uav(sc: &Scenario, cfg: &ScaConfig) -> Result<RunOutput> {
    let t0 = Instant::now();
    let single = single_uav_scenario(sc);
    let init = init_with(&single, true)?;
    let init_s = t0.elapsed().as_secs_f64();
    optimize(&single, cfg, init, true, init_s)
}

/// Run the SCA loop from `init`.
pub fn optimize(
    sc: &Scenario,
    cfg: &ScaConfig,
    init: CoShfTrajectory,
    tied: bool,
    init_s: f64,
) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let rule = UnitRule::composite(cfg.quad_order, cfg.quad_panels);
    let mode = Mode {
        free_schedule: true,
        tied_jammer: tied,
    };
    let mut phase = Phase::run(sc, cfg, &rule, init, mode)?;
    let optimize_s = start.elapsed().as_secs_f64();
    let fractional = phase.traj.clone();
    let objective_fractional = phase.trace.last().copied().unwrap_or(f64::NAN);
    let mut counts = phase.counts;
    let mut status = phase.status;
    let mut message = phase.message.take();
    let mut guard = phase.guard;
    let mut steps = phase.steps;
    let objective_trace = std::mem::take(&mut phase.trace);
    let iters = phase.iters;

    let polish_start = Instant::now();
    let (traj, polish_trace, polish_iters) =
        if cfg.round_schedule && status != RunStatus::Infeasible {
            let mut rounded = phase.traj;
            rounded.round_schedule();
            let fixed = Mode {
                free_schedule: false,
                tied_jammer: tied,
            };
            let polish = Phase::run(sc, cfg, &rule, rounded, fixed)?;
            if polish.status != RunStatus::Converged {
                status = polish.status;
            }
            if message.is_none() {
                message = polish.message;
            }
            guard |= polish.guard;
            steps += polish.steps;
            if counts.vars == 0 {
                counts = polish.counts;
            }
            (polish.traj, polish.trace, polish.iters)
        } else {
            (phase.traj, Vec::new(), 0)
        };
    let polish_s = polish_start.elapsed().as_secs_f64();

    let audit_start = Instant::now();
    let throughput = traj.throughput(sc, &rule);
    let objective = throughput.iter().copied().fold(f64::INFINITY, f64::min);
    let audit = audit_trajectory(&traj, sc, &throughput, cfg.audit_samples);
    let audit_s = audit_start.elapsed().as_secs_f64();

    let report = SolveReport {
        objective_trace,
        polish_trace,
        iters,
        polish_iters,
        status,
        guard_triggered: guard,
        objective,
        objective_fractional,
        throughput,
        counts,
        formula_counts: Some(formula_counts(sc.k(), sc.n_turn)),
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
    Ok(RunOutput {
        trajectory: traj,
        fractional,
        report,
    })
}

/// One SCA loop at a fixed mode.
struct Phase {
    traj: CoShfTrajectory,
    trace: Vec<f64>,
    iters: usize,
    status: RunStatus,
    guard: bool,
    steps: usize,
    counts: Counts,
    message: Option<String>,
}

impl Phase {
    fn run(
        sc: &Scenario,
        cfg: &ScaConfig,
        rule: &UnitRule,
        init: CoShfTrajectory,
        mode: Mode,
    ) -> Result<Phase> {
        let mut traj = init;
        let mut obj = traj.min_throughput(sc, rule);
        let mut out = Phase {
            traj: traj.clone(),
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
            let asm = match assemble(&traj, sc, rule, mode, cfg.eps_ref) {
                Ok(a) => a,
                Err(e) => {
                    out.status = RunStatus::Infeasible;
                    out.message = Some(e.to_string());
                    break;
                }
            };
            out.counts = asm.counts();
            let x0 = asm.warm_start(sc);
            let sol = solve(&asm.problem, &x0, &cfg.solver);
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
            let next = asm.layout.decode(&sol.x, &traj);
            let next_obj = next.min_throughput(sc, rule);
            if next_obj < obj - 1e-9 || next.check(sc, 1e-6).is_err() {
                // surrogate step did not improve the true objective: keep the reference
                out.guard = true;
                out.status = RunStatus::Converged;
                break;
            }
            let delta = next_obj - obj;
            traj = next;
            obj = next_obj;
            out.trace.push(obj);
            out.traj = traj.clone();
            if delta.abs() < cfg.eps {
                out.status = RunStatus::Converged;
                break;
            }
        }
        Ok(out)
    }
}

/// Every point of one UAV in flight order.
pub fn uav_points(traj: &CoShfTrajectory, u: Uav) -> Vec<Point> {
    let mut pts = Vec::new();
    for i in 0..=traj.k() + 1 {
        let last = if i == traj.k() + 1 { 0 } else { traj.n_turn() };
        for j in 0..=last {
            pts.push(traj.point(u, i, j));
        }
    }
    pts
}
