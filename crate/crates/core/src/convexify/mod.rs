//! One successive-approximation step: freeze constants at a reference
//! trajectory and assemble the convex subproblem over the flat decision vector.

pub mod bounds;

use nalgebra::SVector;
use num_dual::Dual2SVec64;
use serde::{Deserialize, Serialize};

use crate::geometry::{lerp, sub, Point};
use crate::quadrature::UnitRule;
use crate::scenario::Scenario;
use crate::subsolver::{ConcaveFn, Constraint, Equality, Ineq, LocalEval, Problem};
use crate::trajectory::{CoShfTrajectory, SegmentIndex, Uav};
use crate::{Error, Result};

pub use bounds::{
    interior_vertex, judgment, lambda_selects_jammer, CollisionBound, FlyTerm, HoverTerm,
    ProductShape, RateConsts, CHORD_SMOOTHING,
};

/// Which parts of the trajectory are decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mode {
    /// Scheduling weights are variables (otherwise frozen at the reference).
    pub free_schedule: bool,
    /// Jammer points are tied to UAV-S points (single-UAV operation).
    pub tied_jammer: bool,
}

impl Mode {
    pub const DUAL: Mode = Mode {
        free_schedule: true,
        tied_jammer: false,
    };
}

/// A local argument of a bound: a decision variable or a frozen value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    Var(usize),
    Const(f64),
}

/// Index map from trajectory entries to the flat decision vector.
#[derive(Debug, Clone, Serialize)]
pub struct Layout {
    pub k: usize,
    pub n_turn: usize,
    pub mode: Mode,
    pub hover_s: Vec<[usize; 2]>,
    pub hover_j: Vec<[usize; 2]>,
    pub turn_s: Vec<Vec<[usize; 2]>>,
    pub turn_j: Vec<Vec<[usize; 2]>>,
    pub t: Vec<usize>,
    /// Empty when scheduling is frozen.
    pub a_hover: Vec<Vec<usize>>,
    pub a_fly: Vec<Vec<Vec<usize>>>,
    /// Per-segment time epigraph variables, in segment order.
    pub tau: Vec<usize>,
    pub u: usize,
    pub n: usize,
}

impl Layout {
    pub fn new(k: usize, n_turn: usize, mode: Mode) -> Self {
        let mut next = 0;
        let mut pt = || {
            next += 2;
            [next - 2, next - 1]
        };
        let hover_s: Vec<_> = (0..k).map(|_| pt()).collect();
        let turn_s: Vec<Vec<_>> = (0..=k)
            .map(|_| (0..n_turn).map(|_| pt()).collect())
            .collect();
        let (hover_j, turn_j) = if mode.tied_jammer {
            (hover_s.clone(), turn_s.clone())
        } else {
            let h: Vec<_> = (0..k).map(|_| pt()).collect();
            let t: Vec<Vec<_>> = (0..=k)
                .map(|_| (0..n_turn).map(|_| pt()).collect())
                .collect();
            (h, t)
        };
        let mut scalar = || {
            next += 1;
            next - 1
        };
        let t: Vec<usize> = (0..k).map(|_| scalar()).collect();
        let (a_hover, a_fly) = if mode.free_schedule {
            let h: Vec<Vec<usize>> = (0..k).map(|_| (0..k).map(|_| scalar()).collect()).collect();
            let f: Vec<Vec<Vec<usize>>> = (0..=k)
                .map(|_| {
                    (0..=n_turn)
                        .map(|_| (0..k).map(|_| scalar()).collect())
                        .collect()
                })
                .collect();
            (h, f)
        } else {
            (Vec::new(), Vec::new())
        };
        let u = scalar();
        let tau: Vec<usize> = (0..(k + 1) * (n_turn + 1)).map(|_| scalar()).collect();
        Layout {
            k,
            n_turn,
            mode,
            hover_s,
            hover_j,
            turn_s,
            turn_j,
            t,
            a_hover,
            a_fly,
            tau,
            u,
            n: next,
        }
    }

    /// Decision variables excluding the segment-time epigraph auxiliaries.
    pub fn core_vars(&self) -> usize {
        self.n - self.tau.len()
    }

    fn point_idx(&self, u: Uav, i: usize, j: usize) -> Option<[usize; 2]> {
        let (hover, turn) = match u {
            Uav::S => (&self.hover_s, &self.turn_s),
            Uav::J => (&self.hover_j, &self.turn_j),
        };
        match (i, j) {
            (0, 0) => None,
            (i, 0) if i == self.k + 1 => None,
            (i, 0) => Some(hover[i - 1]),
            (i, j) => Some(turn[i][j - 1]),
        }
    }

    /// Slots of point `(i, j)` of UAV `u`; pinned endpoints become constants.
    pub fn point_slots(&self, traj: &CoShfTrajectory, u: Uav, i: usize, j: usize) -> [Slot; 2] {
        match self.point_idx(u, i, j) {
            Some([x, y]) => [Slot::Var(x), Slot::Var(y)],
            None => {
                let p = traj.point(u, i, j);
                [Slot::Const(p[0]), Slot::Const(p[1])]
            }
        }
    }

    fn seg_slots(
        &self,
        traj: &CoShfTrajectory,
        u: Uav,
        seg: SegmentIndex,
    ) -> ([Slot; 2], [Slot; 2]) {
        let (ni, nj) = crate::trajectory::next_point(seg, self.n_turn);
        (
            self.point_slots(traj, u, seg.i, seg.j),
            self.point_slots(traj, u, ni, nj),
        )
    }

    fn sched_slot(
        &self,
        traj: &CoShfTrajectory,
        hover: Option<usize>,
        seg: Option<SegmentIndex>,
        k: usize,
    ) -> Slot {
        match (hover, seg) {
            (Some(i), _) if self.mode.free_schedule => Slot::Var(self.a_hover[i][k]),
            (Some(i), _) => Slot::Const(traj.sched_hover[i][k]),
            (None, Some(s)) if self.mode.free_schedule => Slot::Var(self.a_fly[s.i][s.j][k]),
            (None, Some(s)) => Slot::Const(traj.sched_fly[s.i][s.j][k]),
            _ => unreachable!(),
        }
    }

    /// Flat vector for `traj`. `τ` is set to the smoothed segment time and
    /// `U` to `u_value`.
    pub fn encode(&self, traj: &CoShfTrajectory, sc: &Scenario, u_value: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        let put = |x: &mut Vec<f64>, idx: [usize; 2], p: Point| {
            x[idx[0]] = p[0];
            x[idx[1]] = p[1];
        };
        for i in 0..self.k {
            put(&mut x, self.hover_s[i], traj.hover_s[i]);
            if !self.mode.tied_jammer {
                put(&mut x, self.hover_j[i], traj.hover_j[i]);
            }
            x[self.t[i]] = traj.hover_dur[i];
        }
        for i in 0..=self.k {
            for j in 0..self.n_turn {
                put(&mut x, self.turn_s[i][j], traj.turn_s[i][j]);
                if !self.mode.tied_jammer {
                    put(&mut x, self.turn_j[i][j], traj.turn_j[i][j]);
                }
            }
        }
        if self.mode.free_schedule {
            for i in 0..self.k {
                for k in 0..self.k {
                    x[self.a_hover[i][k]] = traj.sched_hover[i][k];
                }
            }
            for i in 0..=self.k {
                for j in 0..=self.n_turn {
                    for k in 0..self.k {
                        x[self.a_fly[i][j][k]] = traj.sched_fly[i][j][k];
                    }
                }
            }
        }
        for (o, seg) in traj.segments().enumerate() {
            let smooth = |u: Uav| {
                let (a, b) = traj.segment_points(u, seg);
                let d = sub(b, a);
                (d[0] * d[0] + d[1] * d[1] + CHORD_SMOOTHING * CHORD_SMOOTHING).sqrt()
            };
            let mut d = smooth(Uav::S);
            if !self.mode.tied_jammer {
                d = d.max(smooth(Uav::J));
            }
            x[self.tau[o]] = d / sc.v_max;
        }
        x[self.u] = u_value;
        x
    }

    /// Trajectory from a flat vector. Frozen parts come from `base`;
    /// durations are clamped at zero and scheduling groups renormalized.
    pub fn decode(&self, x: &[f64], base: &CoShfTrajectory) -> CoShfTrajectory {
        let mut out = base.clone();
        let get = |idx: [usize; 2]| [x[idx[0]], x[idx[1]]];
        for i in 0..self.k {
            out.hover_s[i] = get(self.hover_s[i]);
            out.hover_j[i] = get(self.hover_j[i]);
            out.hover_dur[i] = x[self.t[i]].max(0.0);
        }
        for i in 0..=self.k {
            for j in 0..self.n_turn {
                out.turn_s[i][j] = get(self.turn_s[i][j]);
                out.turn_j[i][j] = get(self.turn_j[i][j]);
            }
        }
        if self.mode.free_schedule {
            let group = |idx: &[usize]| normalize(idx.iter().map(|&v| x[v]).collect());
            for i in 0..self.k {
                out.sched_hover[i] = group(&self.a_hover[i]);
            }
            for i in 0..=self.k {
                for j in 0..=self.n_turn {
                    out.sched_fly[i][j] = group(&self.a_fly[i][j]);
                }
            }
        }
        out
    }
}

/// Clamp to `[0, ∞)` and rescale to sum one (uniform if everything vanished).
pub fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    w.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|v| *v /= s);
    } else {
        let n = w.len() as f64;
        w.iter_mut().for_each(|v| *v = 1.0 / n);
    }
    w
}

/// Kind-specific constants of one concave term.
#[derive(Debug, Clone)]
pub enum TermKind {
    /// Locals `[a, t, S_x, S_y, J_x, J_y]`.
    Hover(HoverTerm),
    /// Locals `[a, S0, S1, J0, J1]` (8 coordinates after `a`).
    Fly(FlyTerm),
    /// `V τ − sqrt(‖p1 − p0‖² + δ²)`; locals `[τ, p0, p1]`.
    SegTime { v_max: f64 },
    /// Time-slot term `Δ·J(B a − (C a² + h²/C)/2)`; locals `[a, S, J]`.
    Slot { rate: RateConsts, dt: f64, c: f64 },
    /// Time-slot term with weight fixed at one: `Δ·J(B − h)`; locals `[_, S, J]`.
    SlotFixed { rate: RateConsts, dt: f64 },
    /// `(V Δ)² − ‖p1 − p0‖²`; locals `[p0, p1]`.
    Step { reach: f64 },
}

impl TermKind {
    pub fn eval<D: bounds::Num>(&self, v: &[D]) -> Option<D> {
        let p = |i: usize| [v[i], v[i + 1]];
        match self {
            TermKind::Hover(h) => h.value(v[0], v[1], p(2), p(4)),
            TermKind::Fly(f) => f.value(v[0], (p(1), p(3)), (p(5), p(7))),
            TermKind::SegTime { v_max } => {
                let dx = v[3] - v[1];
                let dy = v[4] - v[2];
                Some(v[0] * *v_max - (dx * dx + dy * dy + CHORD_SMOOTHING * CHORD_SMOOTHING).sqrt())
            }
            TermKind::Slot { rate, dt, c } => {
                if !rate.judgment {
                    return Some(D::from(0.0));
                }
                let h = rate.h(p(1), p(3))?;
                let a = v[0];
                Some((a * rate.b1 - (a * a * *c + h * h * (1.0 / c)) * 0.5) * *dt)
            }
            TermKind::SlotFixed { rate, dt } => Some(rate.rate(p(1), p(3))? * *dt),
            TermKind::Step { reach } => {
                let dx = v[2] - v[0];
                let dy = v[3] - v[1];
                Some(D::from(reach * reach) - dx * dx - dy * dy)
            }
        }
    }
}

pub const TERM_ARITY: usize = 9;

/// A concave term with its local argument slots.
#[derive(Debug, Clone)]
pub struct Term {
    pub kind: TermKind,
    pub slots: [Slot; TERM_ARITY],
}

impl Term {
    fn locals(&self, x: &[f64]) -> [f64; TERM_ARITY] {
        self.slots.map(|s| match s {
            Slot::Var(i) => x[i],
            Slot::Const(c) => c,
        })
    }

    pub fn value(&self, x: &[f64]) -> Option<f64> {
        self.kind.eval(&self.locals(x))
    }
}

/// `Σ terms + Σ coef·x + constant`, concave; the constraint is `≥ 0`.
#[derive(Debug, Clone)]
pub struct SumFn {
    pub terms: Vec<Term>,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
    vars: Vec<usize>,
    /// Per term, the position of each slot in `vars`.
    maps: Vec<[Option<usize>; TERM_ARITY]>,
}

impl SumFn {
    pub fn new(terms: Vec<Term>, linear: Vec<(usize, f64)>, constant: f64) -> Self {
        let mut vars: Vec<usize> = terms
            .iter()
            .flat_map(|t| {
                t.slots
                    .iter()
                    .filter_map(|s| if let Slot::Var(i) = s { Some(*i) } else { None })
            })
            .chain(linear.iter().map(|l| l.0))
            .collect();
        vars.sort_unstable();
        vars.dedup();
        let maps = terms
            .iter()
            .map(|t| {
                t.slots.map(|s| {
                    if let Slot::Var(i) = s {
                        vars.binary_search(&i).ok()
                    } else {
                        None
                    }
                })
            })
            .collect();
        SumFn {
            terms,
            linear,
            constant,
            vars,
            maps,
        }
    }
}

impl ConcaveFn for SumFn {
    fn vars(&self) -> &[usize] {
        &self.vars
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        let mut v = self.constant + self.linear.iter().map(|&(i, c)| c * x[i]).sum::<f64>();
        for t in &self.terms {
            v += t.value(x)?;
        }
        v.is_finite().then_some(v)
    }

    fn eval(&self, x: &[f64]) -> Option<LocalEval> {
        let m = self.vars.len();
        let mut grad = vec![0.0; m];
        let mut hess = vec![0.0; m * m];
        let mut value = self.constant;
        for &(i, c) in &self.linear {
            value += c * x[i];
            grad[self.vars.binary_search(&i).unwrap()] += c;
        }
        for (t, map) in self.terms.iter().zip(&self.maps) {
            let loc = t.locals(x);
            let (f, g, h) = match &t.kind {
                TermKind::Fly(fly) => fly.local_hessian(&loc)?,
                kind => num_dual::hessian(
                    |v: SVector<Dual2SVec64<TERM_ARITY>, TERM_ARITY>| {
                        let arr: [Dual2SVec64<TERM_ARITY>; TERM_ARITY] = v.into();
                        kind.eval(&arr).unwrap_or(Dual2SVec64::from(f64::NAN))
                    },
                    &SVector::<f64, TERM_ARITY>::from(loc),
                ),
            };
            if !f.is_finite() {
                return None;
            }
            value += f;
            for a in 0..TERM_ARITY {
                let Some(pa) = map[a] else { continue };
                grad[pa] += g[a];
                for b in 0..TERM_ARITY {
                    if let Some(pb) = map[b] {
                        hess[pa * m + pb] += h[(a, b)];
                    }
                }
            }
        }
        value.is_finite().then_some(LocalEval { value, grad, hess })
    }
}

/// Frozen data of one approximation step.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub reference: CoShfTrajectory,
    /// `hover[i][k]`.
    pub hover: Vec<Vec<HoverTerm>>,
    /// `fly[segment ordinal][k]`; `None` where the term contributes nothing.
    pub fly: Vec<Vec<Option<FlyTerm>>>,
    /// Per segment: `true` when the jammer's chord sets the segment time.
    pub lambda_j: Vec<bool>,
    /// Per segment collision bound (absent when collisions are not modeled).
    pub collision: Vec<Option<CollisionBound>>,
    pub rule: UnitRule,
    pub eps_ref: f64,
}

impl Surrogate {
    pub fn build(
        reference: &CoShfTrajectory,
        sc: &Scenario,
        rule: &UnitRule,
        mode: Mode,
        eps_ref: f64,
    ) -> Result<Self> {
        let k_users = sc.k();
        let free = mode.free_schedule;
        let hover = (0..k_users)
            .map(|i| {
                (0..k_users)
                    .map(|k| {
                        let rc = RateConsts::new(reference.hover_s[i], reference.hover_j[i], k, sc);
                        HoverTerm::new(
                            rc,
                            reference.sched_hover[i][k],
                            reference.hover_dur[i],
                            free,
                            eps_ref,
                        )
                    })
                    .collect()
            })
            .collect();
        let nodes: Vec<(f64, f64)> = rule
            .nodes
            .iter()
            .copied()
            .zip(rule.weights.iter().copied())
            .collect();
        let mut fly = Vec::new();
        let mut lambda_j = Vec::new();
        let mut collision = Vec::new();
        for seg in reference.segments() {
            let s_r = reference.segment_points(Uav::S, seg);
            let j_r = reference.segment_points(Uav::J, seg);
            lambda_j.push(!mode.tied_jammer && lambda_selects_jammer(s_r, j_r));
            fly.push(
                (0..k_users)
                    .map(|k| {
                        let a_r = reference.sched_fly[seg.i][seg.j][k];
                        if !free && a_r == 0.0 {
                            return None;
                        }
                        FlyTerm::new(s_r, j_r, k, a_r, &nodes, free, eps_ref, sc).map(|mut f| {
                            if mode.tied_jammer {
                                f.lambda_j = false;
                            }
                            f
                        })
                    })
                    .collect(),
            );
            collision.push(if mode.tied_jammer || sc.d_min <= 0.0 {
                None
            } else {
                Some(CollisionBound::new(
                    sub(s_r.0, j_r.0),
                    sub(s_r.1, j_r.1),
                    sc.d_min,
                )?)
            });
        }
        Ok(Surrogate {
            reference: reference.clone(),
            hover,
            fly,
            lambda_j,
            collision,
            rule: rule.clone(),
            eps_ref,
        })
    }

    /// Per-user surrogate throughput at a trajectory (scheduling taken from `traj`).
    pub fn throughput_bound(&self, traj: &CoShfTrajectory) -> Option<Vec<f64>> {
        let k_users = traj.k();
        let mut u = vec![0.0; k_users];
        for (i, row) in self.hover.iter().enumerate() {
            for (k, term) in row.iter().enumerate() {
                u[k] += term.value(
                    traj.sched_hover[i][k],
                    traj.hover_dur[i],
                    traj.hover_s[i],
                    traj.hover_j[i],
                )?;
            }
        }
        for (o, seg) in traj.segments().enumerate() {
            let s = traj.segment_points(Uav::S, seg);
            let j = traj.segment_points(Uav::J, seg);
            for (k, term) in self.fly[o].iter().enumerate() {
                if let Some(t) = term {
                    u[k] += t.value(traj.sched_fly[seg.i][seg.j][k], s, j)?;
                }
            }
        }
        Some(u)
    }
}

/// Convexity certificate attached to each emitted constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    Affine,
    /// Sum of concave bound terms plus an affine part.
    ConcaveSum,
    /// Affine minus a Euclidean norm.
    AffineMinusNorm,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintTag {
    pub label: String,
    pub convexity: Convexity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    /// All decision variables.
    pub vars: usize,
    /// Variables excluding the segment-time auxiliaries.
    pub core_vars: usize,
    /// Inequalities plus equalities handed to the solver.
    pub constraints: usize,
}

/// Closed-form counts `(M_var, M_con)` quoted for the formulation with `K`
/// users and `N` turning points per leg.
pub fn formula_counts(k: usize, n: usize) -> (usize, usize) {
    let m_var = 2 * n * k * k + 3 * k * k + 6 * n * k + 6 * k + 2 * n;
    let m_con = 6 * n * k * k + 8 * k * k + 12 * n * k + 13 * k + 6 * n + 3;
    (m_var, m_con)
}

pub struct Assembled {
    pub surrogate: Surrogate,
    pub layout: Layout,
    pub problem: Problem,
    pub tags: Vec<ConstraintTag>,
    /// Epigraph constraint index per user.
    pub epigraph: Vec<usize>,
}

impl Assembled {
    pub fn counts(&self) -> Counts {
        Counts {
            vars: self.layout.n,
            core_vars: self.layout.core_vars(),
            constraints: self.problem.ineqs.len() + self.problem.eqs.len(),
        }
    }

    /// Warm start at the reference, nudged into the strict interior: `τ`
    /// slightly above the smoothed segment times, hover durations shrunk to
    /// pay for the smoothing, `U` just below the smallest surrogate throughput.
    pub fn warm_start(&self, sc: &Scenario) -> Vec<f64> {
        let mut x = self.layout.encode(&self.surrogate.reference, sc, 0.0);
        let l = &self.layout;
        for &o in &l.tau {
            x[o] = x[o] * (1.0 + 1e-9) + 1e-12;
        }
        let hover: f64 = l.t.iter().map(|&i| x[i]).sum();
        let used = hover + l.tau.iter().map(|&o| x[o]).sum::<f64>();
        let excess = used - sc.mission_time * (1.0 - 1e-9);
        if excess > 0.0 && hover > excess {
            let f = 1.0 - excess / hover;
            l.t.iter().for_each(|&i| x[i] *= f);
        }
        let u = self
            .epigraph
            .iter()
            .map(|&c| {
                self.problem
                    .constraint_value(c, &x)
                    .unwrap_or(f64::NEG_INFINITY)
            })
            .fold(f64::INFINITY, f64::min);
        x[self.layout.u] = if u.is_finite() {
            u - 1e-6 * u.abs().max(1.0)
        } else {
            0.0
        };
        x
    }

    /// Structured text listing the variable layout and constraints with their tags.
    pub fn debug_dump(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            layout: &'a Layout,
            counts: Counts,
            constraints: &'a [ConstraintTag],
            equalities: Vec<&'a str>,
        }
        let d = Dump {
            layout: &self.layout,
            counts: self.counts(),
            constraints: &self.tags,
            equalities: self.problem.eqs.iter().map(|e| e.label.as_str()).collect(),
        };
        serde_json::to_string_pretty(&d).expect("dump serializes")
    }
}

/// Build the convex subproblem around `reference`.
pub fn assemble(
    reference: &CoShfTrajectory,
    sc: &Scenario,
    rule: &UnitRule,
    mode: Mode,
    eps_ref: f64,
) -> Result<Assembled> {
    reference.check(sc, 1e-6)?;
    let surrogate = Surrogate::build(reference, sc, rule, mode, eps_ref)?;
    let layout = Layout::new(sc.k(), sc.n_turn, mode);
    let k_users = sc.k();
    let mut ineqs: Vec<Constraint> = Vec::new();
    let mut tags = Vec::new();
    let mut push = |label: String, convexity: Convexity, ineq: Ineq| {
        tags.push(ConstraintTag {
            label: label.clone(),
            convexity,
        });
        ineqs.push(Constraint { label, ineq });
    };

    // Throughput epigraph per user.
    let mut user_terms: Vec<Vec<Term>> = vec![Vec::new(); k_users];
    for i in 0..k_users {
        let s = layout.point_slots(reference, Uav::S, i + 1, 0);
        let j = layout.point_slots(reference, Uav::J, i + 1, 0);
        for k in 0..k_users {
            let term = &surrogate.hover[i][k];
            let a = layout.sched_slot(reference, Some(i), None, k);
            if !term.rate.judgment || a == Slot::Const(0.0) {
                continue;
            }
            let c0 = Slot::Const(0.0);
            user_terms[k].push(Term {
                kind: TermKind::Hover(term.clone()),
                slots: [
                    a,
                    Slot::Var(layout.t[i]),
                    s[0],
                    s[1],
                    j[0],
                    j[1],
                    c0,
                    c0,
                    c0,
                ],
            });
        }
    }
    for (o, seg) in reference.segments().enumerate() {
        let (s0, s1) = layout.seg_slots(reference, Uav::S, seg);
        let (j0, j1) = layout.seg_slots(reference, Uav::J, seg);
        for k in 0..k_users {
            if let Some(term) = &surrogate.fly[o][k] {
                let a = layout.sched_slot(reference, None, Some(seg), k);
                user_terms[k].push(Term {
                    kind: TermKind::Fly(term.clone()),
                    slots: [a, s0[0], s0[1], s1[0], s1[1], j0[0], j0[1], j1[0], j1[1]],
                });
            }
        }
    }
    // emitted first, so constraint k is user k's epigraph
    let epigraph: Vec<usize> = (0..k_users).collect();
    for (k, terms) in user_terms.into_iter().enumerate() {
        push(
            format!("throughput[{k}] >= U"),
            Convexity::ConcaveSum,
            Ineq::Concave(Box::new(SumFn::new(terms, vec![(layout.u, -1.0)], 0.0))),
        );
    }

    // Nonnegativity of durations and weights.
    for i in 0..k_users {
        push(
            format!("t[{i}] >= 0"),
            Convexity::Affine,
            Ineq::Affine {
                coef: vec![(layout.t[i], 1.0)],
                constant: 0.0,
            },
        );
    }
    if mode.free_schedule {
        for i in 0..k_users {
            for k in 0..k_users {
                push(
                    format!("a_hover[{i}][{k}] >= 0"),
                    Convexity::Affine,
                    Ineq::Affine {
                        coef: vec![(layout.a_hover[i][k], 1.0)],
                        constant: 0.0,
                    },
                );
            }
        }
        for i in 0..=k_users {
            for j in 0..=sc.n_turn {
                for k in 0..k_users {
                    push(
                        format!("a_fly[{i}][{j}][{k}] >= 0"),
                        Convexity::Affine,
                        Ineq::Affine {
                            coef: vec![(layout.a_fly[i][j][k], 1.0)],
                            constant: 0.0,
                        },
                    );
                }
            }
        }
    }

    // Segment-time epigraph and the mission-time budget.
    for (o, seg) in reference.segments().enumerate() {
        let uavs: &[Uav] = if mode.tied_jammer {
            &[Uav::S]
        } else {
            &[Uav::S, Uav::J]
        };
        for &u in uavs {
            let (p0, p1) = layout.seg_slots(reference, u, seg);
            let c0 = Slot::Const(0.0);
            let term = Term {
                kind: TermKind::SegTime { v_max: sc.v_max },
                slots: [
                    Slot::Var(layout.tau[o]),
                    p0[0],
                    p0[1],
                    p1[0],
                    p1[1],
                    c0,
                    c0,
                    c0,
                    c0,
                ],
            };
            if p0.iter().chain(&p1).all(|s| matches!(s, Slot::Const(_))) {
                // fixed chord: τ ≥ smoothed length / V is affine
                let d = reference.segment_length(u, seg);
                let len = (d * d + CHORD_SMOOTHING * CHORD_SMOOTHING).sqrt();
                push(
                    format!("tau[{}][{}] >= |{u:?}| / V", seg.i, seg.j),
                    Convexity::Affine,
                    Ineq::Affine {
                        coef: vec![(layout.tau[o], sc.v_max)],
                        constant: -len,
                    },
                );
                continue;
            }
            push(
                format!("tau[{}][{}] >= |{u:?}| / V", seg.i, seg.j),
                Convexity::AffineMinusNorm,
                Ineq::Concave(Box::new(SumFn::new(vec![term], vec![], 0.0))),
            );
        }
    }
    let mut budget: Vec<(usize, f64)> = layout.t.iter().map(|&v| (v, -1.0)).collect();
    budget.extend(layout.tau.iter().map(|&v| (v, -1.0)));
    push(
        "time budget".into(),
        Convexity::Affine,
        Ineq::Affine {
            coef: budget,
            constant: sc.mission_time,
        },
    );

    // Linearized collision avoidance at the segment check points.
    for (o, seg) in reference.segments().enumerate() {
        let Some(cb) = &surrogate.collision[o] else {
            continue;
        };
        let (s0, s1) = layout.seg_slots(reference, Uav::S, seg);
        let (j0, j1) = layout.seg_slots(reference, Uav::J, seg);
        let last = o + 1 == layout.tau.len();
        let mut zs = vec![0.0];
        if last {
            zs.push(1.0);
        }
        zs.extend(cb.z_star);
        for z in zs {
            let r = cb.ref_at(z);
            // D(z) = 2 r·((1−z)(S0 − J0) + z (S1 − J1)) − ‖r‖² ≥ d_min²
            let mut lin = LinearAcc::default();
            for (slots, w) in [
                (s0, 2.0 * (1.0 - z)),
                (j0, -2.0 * (1.0 - z)),
                (s1, 2.0 * z),
                (j1, -2.0 * z),
            ] {
                lin.add_point(slots, [w * r[0], w * r[1]]);
            }
            lin.constant -= r[0] * r[0] + r[1] * r[1] + sc.d_min * sc.d_min;
            if let Some(ineq) = lin.finish(&format!("collision[{}][{}] z={z:.4}", seg.i, seg.j))? {
                push(
                    format!("collision[{}][{}] z={z:.4}", seg.i, seg.j),
                    Convexity::Affine,
                    ineq,
                );
            }
        }
    }

    // Positivity of linearized horizontal distances used by the bounds.
    for (o, seg) in reference.segments().enumerate() {
        let last = o + 1 == layout.tau.len();
        let mut pairs: Vec<(Uav, Point, String)> = vec![(Uav::S, sc.eve_pos, "S-eve".into())];
        if sc.p_j > 0.0 && !mode.tied_jammer {
            pairs.extend((0..k_users).map(|k| (Uav::J, sc.gu_pos[k], format!("J-gu{k}"))));
        }
        for (u, w, name) in pairs {
            let (p0, p1) = layout.seg_slots(reference, u, seg);
            let (r0, r1) = reference.segment_points(u, seg);
            let mut zs = vec![0.0];
            if last {
                zs.push(1.0);
            }
            zs.extend(interior_vertex(sub(r0, w), sub(r1, w)));
            for z in zs {
                let qr = lerp(r0, r1, z);
                let (g, c0) = bounds::kappa_row(qr, w);
                let mut lin = LinearAcc::default();
                lin.add_point(p0, [(1.0 - z) * g[0], (1.0 - z) * g[1]]);
                lin.add_point(p1, [z * g[0], z * g[1]]);
                lin.constant += c0;
                let label = format!("kappa {name} [{}][{}] z={z:.4}", seg.i, seg.j);
                if let Some(ineq) = lin.finish(&label)? {
                    push(label, Convexity::Affine, ineq);
                }
            }
        }
    }

    // Scheduling simplex.
    let mut eqs = Vec::new();
    if mode.free_schedule {
        for i in 0..k_users {
            eqs.push(Equality {
                label: format!("sum a_hover[{i}] = 1"),
                coef: layout.a_hover[i].iter().map(|&v| (v, 1.0)).collect(),
                rhs: 1.0,
            });
        }
        for i in 0..=k_users {
            for j in 0..=sc.n_turn {
                eqs.push(Equality {
                    label: format!("sum a_fly[{i}][{j}] = 1"),
                    coef: layout.a_fly[i][j].iter().map(|&v| (v, 1.0)).collect(),
                    rhs: 1.0,
                });
            }
        }
    }

    let problem = Problem {
        n: layout.n,
        objective: vec![(layout.u, 1.0)],
        ineqs,
        eqs,
    };
    Ok(Assembled {
        surrogate,
        layout,
        problem,
        tags,
        epigraph,
    })
}

/// Accumulates an affine row over point slots, folding constants.
#[derive(Default)]
struct LinearAcc {
    coef: Vec<(usize, f64)>,
    constant: f64,
}

impl LinearAcc {
    fn add_point(&mut self, slots: [Slot; 2], w: Point) {
        for (s, wi) in slots.into_iter().zip(w) {
            match s {
                Slot::Var(i) => match self.coef.iter_mut().find(|c| c.0 == i) {
                    Some(c) => c.1 += wi,
                    None => self.coef.push((i, wi)),
                },
                Slot::Const(v) => self.constant += wi * v,
            }
        }
    }

    /// `None` for a satisfied constant row; error for a violated one.
    fn finish(mut self, label: &str) -> Result<Option<Ineq>> {
        self.coef.retain(|c| c.1 != 0.0);
        if self.coef.is_empty() {
            if self.constant < -1e-9 {
                return Err(Error::Infeasible(format!(
                    "{label}: violated by pinned endpoints"
                )));
            }
            return Ok(None);
        }
        Ok(Some(Ineq::Affine {
            coef: self.coef,
            constant: self.constant,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sca::initialize;
    use crate::scenario::random_scenario;
    use crate::subsolver::{solve, SolverOptions};

    fn rule() -> UnitRule {
        UnitRule::composite(8, 4)
    }

    #[test]
    fn epigraph_rows_are_tight_at_reference() {
        for (seed, k, n) in [(1, 4, 1), (7, 3, 2), (9, 2, 0)] {
            let mut sc = random_scenario(seed, k, 500.0);
            sc.n_turn = n;
            let t = initialize(&sc).unwrap();
            let asm = assemble(&t, &sc, &rule(), Mode::DUAL, 1e-4).unwrap();
            let x = asm.layout.encode(&t, &sc, 0.0);
            let truth = t.throughput(&sc, &rule());
            for (k, &c) in asm.epigraph.iter().enumerate() {
                let g = asm.problem.constraint_value(c, &x).unwrap();
                assert!(
                    (g - truth[k]).abs() <= 1e-5 * truth[k].abs().max(1.0),
                    "seed {seed} user {k}: {g} vs {}",
                    truth[k]
                );
            }
        }
    }

    #[test]
    fn variable_count_matches_layout_oracle() {
        for (k, n) in [(1, 0), (4, 1), (6, 2)] {
            let mut sc = random_scenario(3, k, 500.0);
            sc.n_turn = n;
            let t = initialize(&sc).unwrap();
            let asm = assemble(&t, &sc, &rule(), Mode::DUAL, 1e-4).unwrap();
            let points = k + (k + 1) * n;
            let segments = (k + 1) * (n + 1);
            let expect = 2 * 2 * points + k + k * k + segments * k + segments + 1;
            assert_eq!(asm.counts().vars, expect, "(K,N)=({k},{n})");
            assert_eq!(asm.counts().core_vars, expect - segments);
        }
    }

    #[test]
    fn fixed_schedule_drops_weight_variables() {
        let sc = Scenario::reference();
        let t = initialize(&sc).unwrap();
        let free = assemble(&t, &sc, &rule(), Mode::DUAL, 1e-4).unwrap();
        let fixed = assemble(
            &t,
            &sc,
            &rule(),
            Mode {
                free_schedule: false,
                tied_jammer: false,
            },
            1e-4,
        )
        .unwrap();
        let k = sc.k();
        assert_eq!(
            free.counts().vars - fixed.counts().vars,
            k * k + (k + 1) * (sc.n_turn + 1) * k
        );
        assert!(fixed.problem.eqs.is_empty());
    }

    #[test]
    fn warm_start_is_strictly_inside() {
        let sc = Scenario::reference();
        let t = initialize(&sc).unwrap();
        let asm = assemble(&t, &sc, &rule(), Mode::DUAL, 1e-4).unwrap();
        let x = asm.warm_start(&sc);
        for (i, c) in asm.problem.ineqs.iter().enumerate() {
            let g = asm.problem.constraint_value(i, &x).unwrap();
            assert!(g > -1e-9, "{}: {g}", c.label);
        }
        let (viol, _) = asm.problem.max_violation(&x);
        assert!(viol < 1e-9);
    }

    #[test]
    fn single_user_step_does_not_regress() {
        let mut sc = random_scenario(11, 1, 500.0);
        sc.n_turn = 0;
        let t = initialize(&sc).unwrap();
        let before = t.min_throughput(&sc, &rule());
        let asm = assemble(&t, &sc, &rule(), Mode::DUAL, 1e-4).unwrap();
        let sol = solve(
            &asm.problem,
            &asm.warm_start(&sc),
            &SolverOptions::default(),
        );
        let next = asm.layout.decode(&sol.x, &t);
        assert!(next.check(&sc, 1e-6).is_ok());
        // the surrogate optimum lower-bounds the true objective of the new point
        let after = next.min_throughput(&sc, &rule());
        assert!(sol.objective <= after + 1e-6, "{} > {after}", sol.objective);
        assert!(after >= before - 1e-9, "{after} < {before}");
    }
}
