//! Primal-dual interior-point method for small dense convex programs:
//!
//! ```text
//! maximize cᵀx  s.t.  g_i(x) ≥ 0 (g_i affine or concave),  A x = b
//! ```
//!
//! Rows are written as `g_i(x) = s_i` with slacks `s ≥ 0` and multipliers
//! `z ≥ 0`. Steps come from Mehrotra's predictor-corrector on the perturbed
//! KKT system, solved in the null space of `A`. Because every `g_i` is
//! concave, a step of length `α` shrinks any row violation by at least the
//! factor `1 − α`, so infeasible warm starts need no separate phase.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Value, gradient and Hessian of a concave function restricted to its variables.
#[derive(Debug, Clone)]
pub struct LocalEval {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major `vars × vars`.
    pub hess: Vec<f64>,
}

/// A concave function of a few entries of the decision vector.
pub trait ConcaveFn: Send + Sync {
    /// Global indices of the variables the function depends on, without duplicates.
    fn vars(&self) -> &[usize];
    /// `None` outside the function's domain.
    fn value(&self, x: &[f64]) -> Option<f64>;
    fn eval(&self, x: &[f64]) -> Option<LocalEval>;
}

pub enum Ineq {
    /// `Σ coef·x + constant ≥ 0`.
    Affine {
        coef: Vec<(usize, f64)>,
        constant: f64,
    },
    /// `f(x) ≥ 0` with `f` concave.
    Concave(Box<dyn ConcaveFn>),
}

pub struct Constraint {
    pub label: String,
    pub ineq: Ineq,
}

/// `Σ coef·x = rhs`.
#[derive(Debug, Clone)]
pub struct Equality {
    pub label: String,
    pub coef: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Default)]
pub struct Problem {
    pub n: usize,
    /// Sparse linear objective, maximized.
    pub objective: Vec<(usize, f64)>,
    pub ineqs: Vec<Constraint>,
    pub eqs: Vec<Equality>,
}

impl Problem {
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * x[i]).sum()
    }

    /// Constraint value at `x` (`None` outside a concave function's domain).
    pub fn constraint_value(&self, idx: usize, x: &[f64]) -> Option<f64> {
        match &self.ineqs[idx].ineq {
            Ineq::Affine { coef, constant } => {
                Some(coef.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + constant)
            }
            Ineq::Concave(f) => f.value(x),
        }
    }

    /// Largest violation over inequalities (`-g`) and equalities (`|Ax - b|`).
    pub fn max_violation(&self, x: &[f64]) -> (f64, Option<String>) {
        let mut worst = (0.0, None);
        for (i, c) in self.ineqs.iter().enumerate() {
            let v = self.constraint_value(i, x).map_or(f64::INFINITY, |g| -g);
            if v > worst.0 {
                worst = (v, Some(c.label.clone()));
            }
        }
        for e in &self.eqs {
            let v = (e.coef.iter().map(|&(i, c)| c * x[i]).sum::<f64>() - e.rhs).abs();
            if v > worst.0 {
                worst = (v, Some(e.label.clone()));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative tolerance on the complementarity gap and dual residual.
    pub kkt_tol: f64,
    /// Newton iterations allowed.
    pub max_iter: usize,
    pub feas_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kkt_tol: 1e-7,
            max_iter: 200,
            feas_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub x: Vec<f64>,
    pub status: Status,
    pub objective: f64,
    /// Largest of the relative gap and relative dual residual at exit.
    pub kkt_residual: f64,
    pub newton_steps: usize,
    pub wallclock: f64,
    /// Label of the most violated constraint when infeasible.
    pub violated: Option<String>,
}

/// Concave rows tolerate this violation in the final feasibility check.
const CONCAVE_TOL: f64 = 1e-6;
const EQ_TOL: f64 = 1e-9;
/// Multipliers beyond this mark a certificate of infeasibility.
const DUAL_BLOWUP: f64 = 1e12;

enum Row<'a> {
    Affine {
        coef: Vec<(usize, f64)>,
        constant: f64,
    },
    Concave {
        f: &'a dyn ConcaveFn,
        w: f64,
    },
}

/// Rows evaluated at one point: values, sparse gradients, local Hessians.
struct RowEval {
    g: Vec<f64>,
    idx: Vec<Vec<usize>>,
    grad: Vec<Vec<f64>>,
    hess: Vec<Option<Vec<f64>>>,
}

struct Prepared<'a> {
    n: usize,
    c: DVector<f64>,
    rows: Vec<Row<'a>>,
    /// Orthonormal null-space basis of `a`; `None` without equalities.
    z: Option<DMatrix<f64>>,
}

impl<'a> Prepared<'a> {
    fn m(&self) -> usize {
        self.rows.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    fn eval(&self, x: &[f64]) -> Option<RowEval> {
        let evals: Vec<Option<(f64, Vec<usize>, Vec<f64>, Option<Vec<f64>>)>> = self
            .rows
            .par_iter()
            .map(|r| match r {
                Row::Affine { coef, constant } => Some((
                    coef.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + constant,
                    coef.iter().map(|&(i, _)| i).collect(),
                    coef.iter().map(|&(_, c)| c).collect(),
                    None,
                )),
                Row::Concave { f, w } => f.eval(x).map(|e| {
                    (
                        e.value * w,
                        f.vars().to_vec(),
                        e.grad.iter().map(|g| g * w).collect(),
                        Some(e.hess.iter().map(|h| h * w).collect()),
                    )
                }),
            })
            .collect();
        let mut out = RowEval {
            g: Vec::new(),
            idx: Vec::new(),
            grad: Vec::new(),
            hess: Vec::new(),
        };
        for e in evals {
            let (g, idx, grad, hess) = e?;
            out.g.push(g);
            out.idx.push(idx);
            out.grad.push(grad);
            out.hess.push(hess);
        }
        Some(out)
    }

    /// `Jᵀ v` for the row Jacobian at `ev`.
    fn jt(&self, ev: &RowEval, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for r in 0..self.m() {
            for (&i, &g) in ev.idx[r].iter().zip(&ev.grad[r]) {
                out[i] += g * v[r];
            }
        }
        out
    }

    fn j(&self, ev: &RowEval, d: &DVector<f64>) -> Vec<f64> {
        (0..self.m())
            .map(|r| {
                ev.idx[r]
                    .iter()
                    .zip(&ev.grad[r])
                    .map(|(&i, &g)| g * d[i])
                    .sum()
            })
            .collect()
    }

    fn reduce_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.z {
            Some(z) => z.tr_mul(v),
            None => v.clone(),
        }
    }

    fn expand(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.z {
            Some(z) => z * w,
            None => w.clone(),
        }
    }
}

/// Cholesky factor of the reduced Newton matrix, with diagonal
/// regularization added only when needed.
fn factor(h: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let r = h.nrows();
    let scale = (0..r)
        .map(|i| h[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut reg = 0.0;
    loop {
        let mut hr = h.clone();
        for i in 0..r {
            hr[(i, i)] += reg;
        }
        if let Some(ch) = hr.cholesky() {
            return Some(ch);
        }
        reg = if reg == 0.0 {
            1e-14 * scale
        } else {
            reg * 100.0
        };
        if reg > 1e6 * scale {
            return None;
        }
    }
}

/// Largest `α ∈ (0, 1]` with `v + α dv ≥ (1 − frac) v`.
fn max_step(v: &[f64], dv: &[f64], frac: f64) -> f64 {
    v.iter().zip(dv).fold(
        1.0f64,
        |a, (&v, &d)| if d < 0.0 { a.min(-frac * v / d) } else { a },
    )
}

fn feasible(problem: &Problem, x: &[f64], opts: &SolverOptions) -> bool {
    let ineq_ok = problem.ineqs.iter().enumerate().all(|(i, c)| {
        let tol = match c.ineq {
            Ineq::Affine { .. } => opts.feas_tol,
            Ineq::Concave(_) => CONCAVE_TOL,
        };
        problem.constraint_value(i, x).is_some_and(|g| g >= -tol)
    });
    ineq_ok
        && problem.eqs.iter().all(|e| {
            (e.coef.iter().map(|&(i, c)| c * x[i]).sum::<f64>() - e.rhs).abs() <= opts.feas_tol
        })
}

/// Solve `problem` from warm start `x0`.
pub fn solve(problem: &Problem, x0: &[f64], opts: &SolverOptions) -> SubproblemSolution {
    let start = Instant::now();
    assert_eq!(x0.len(), problem.n, "warm start has wrong length");
    let warm_obj = problem.objective_value(x0);
    let warm_feasible = feasible(problem, x0, opts);
    let mut x = x0.to_vec();
    let prep = match prepare(problem, &mut x, opts) {
        Ok(p) => p,
        Err(label) => return infeasible(problem, x0, label, start),
    };
    let n = prep.n;
    let m = prep.m();
    let c_scale = prep.c.amax().max(1.0);

    let Some(ev0) = prep.eval(&x) else {
        return infeasible(problem, x0, problem.max_violation(x0).1, start);
    };
    let mut s: Vec<f64> = ev0
        .g
        .iter()
        .map(|&g| g.max(1e-4 * g.abs().max(1.0)))
        .collect();
    let mut z: Vec<f64> = s.iter().map(|&s| 1.0 / s).collect();
    let mut ev = ev0;
    let mut steps = 0;
    let mut status = Status::MaxIter;
    let mut kkt = f64::INFINITY;
    let mut best: Option<(f64, Vec<f64>)> = None;

    for _ in 0..opts.max_iter {
        let obj = prep.objective(&x);
        // r_d = ∇f − Jᵀz with f = −cᵀx
        let rd_full = -&prep.c - prep.jt(&ev, &z);
        let rd = prep.reduce_vec(&rd_full);
        let rp: Vec<f64> = ev.g.iter().zip(&s).map(|(g, s)| g - s).collect();
        let mu = if m > 0 {
            s.iter().zip(&z).map(|(s, z)| s * z).sum::<f64>() / m as f64
        } else {
            0.0
        };
        let rp_inf = rp.iter().fold(0.0f64, |a, v| a.max(-v));
        let gap_rel = mu * m as f64 / obj.abs().max(1.0);
        let dual_rel = rd.amax() / c_scale;
        kkt = gap_rel.max(dual_rel);
        if feasible(problem, &x, opts) && best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, x.clone()));
        }
        if rp_inf <= opts.feas_tol && gap_rel <= opts.kkt_tol && dual_rel <= opts.kkt_tol {
            status = Status::Optimal;
            break;
        }
        if z.iter().any(|&v| v > DUAL_BLOWUP) && rp_inf > opts.feas_tol {
            status = Status::Infeasible;
            break;
        }

        // Reduced matrix Zᵀ (W + Jᵀ Σ J) Z.
        let mut h = DMatrix::zeros(n, n);
        for r in 0..m {
            let idx = &ev.idx[r];
            let gv = &ev.grad[r];
            let sig = z[r] / s[r];
            for (a, &ia) in idx.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    h[(ia, ib)] += sig * gv[a] * gv[b];
                }
            }
            if let Some(hl) = &ev.hess[r] {
                let k = idx.len();
                for a in 0..k {
                    for b in 0..k {
                        h[(idx[a], idx[b])] -= z[r] * hl[a * k + b];
                    }
                }
            }
        }
        let hr = match &prep.z {
            Some(zb) => zb.tr_mul(&(&h * zb)),
            None => h,
        };
        let Some(ch) = factor(hr) else { break };
        steps += 1;

        // Newton direction for a complementarity residual `rc`.
        let direction = |rc: &[f64]| {
            // rhs = −r_d − Jᵀ Σ r_p − Jᵀ S⁻¹ r_c
            let v: Vec<f64> = (0..m).map(|r| (z[r] * rp[r] + rc[r]) / s[r]).collect();
            let rhs = -&rd - prep.reduce_vec(&prep.jt(&ev, &v));
            let w = ch.solve(&rhs);
            let dx = prep.expand(&w);
            let jdx = prep.j(&ev, &dx);
            let ds: Vec<f64> = (0..m).map(|r| rp[r] + jdx[r]).collect();
            let dz: Vec<f64> = (0..m).map(|r| -(rc[r] + z[r] * ds[r]) / s[r]).collect();
            (dx, ds, dz)
        };
        let rc_aff: Vec<f64> = s.iter().zip(&z).map(|(s, z)| s * z).collect();
        let (_, ds_a, dz_a) = direction(&rc_aff);
        let ap = max_step(&s, &ds_a, 1.0);
        let ad = max_step(&z, &dz_a, 1.0);
        let mu_aff = if m > 0 {
            (0..m)
                .map(|r| (s[r] + ap * ds_a[r]) * (z[r] + ad * dz_a[r]))
                .sum::<f64>()
                / m as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let rc: Vec<f64> = (0..m)
            .map(|r| s[r] * z[r] + ds_a[r] * dz_a[r] - sigma * mu)
            .collect();
        let (dx, ds, dz) = direction(&rc);
        let frac = (1.0 - mu).clamp(0.99, 0.9999);
        let ap = max_step(&s, &ds, frac);
        let ad = max_step(&z, &dz, frac);

        // Backtrack the primal step into the domain of every row.
        let mut beta = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x
                .iter()
                .zip(dx.iter())
                .map(|(x, d)| x + beta * ap * d)
                .collect();
            if let Some(evt) = prep.eval(&xt) {
                accepted = Some((xt, evt));
                break;
            }
            beta *= 0.5;
        }
        let Some((xt, evt)) = accepted else { break };
        x = xt;
        ev = evt;
        for r in 0..m {
            s[r] += beta * ap * ds[r];
            z[r] += beta * ad * dz[r];
        }
    }

    let (mut x, mut status) = match status {
        Status::Optimal if feasible(problem, &x, opts) => (x, Status::Optimal),
        other => match &best {
            Some((_, bx)) => (
                bx.clone(),
                if other == Status::Infeasible {
                    Status::MaxIter
                } else {
                    other
                },
            ),
            None => {
                let (_, label) = problem.max_violation(&x);
                let mut sol = infeasible(problem, x0, label, start);
                sol.newton_steps = steps;
                return sol;
            }
        },
    };
    let mut objective = problem.objective_value(&x);
    if warm_feasible && objective < warm_obj {
        x = x0.to_vec();
        objective = warm_obj;
        if status == Status::Optimal && warm_obj - problem.objective_value(&x) > 1e-9 {
            status = Status::MaxIter;
        }
    }
    SubproblemSolution {
        x,
        status,
        objective,
        kkt_residual: kkt,
        newton_steps: steps,
        wallclock: start.elapsed().as_secs_f64(),
        violated: None,
    }
}

fn infeasible(
    problem: &Problem,
    x0: &[f64],
    label: Option<String>,
    start: Instant,
) -> SubproblemSolution {
    SubproblemSolution {
        x: x0.to_vec(),
        status: Status::Infeasible,
        objective: problem.objective_value(x0),
        kkt_residual: f64::INFINITY,
        newton_steps: 0,
        wallclock: start.elapsed().as_secs_f64(),
        violated: label,
    }
}

/// Normalize rows, drop constant ones, build the equality null space and
/// project `x` onto `A x = b`.
fn prepare<'a>(
    problem: &'a Problem,
    x: &mut [f64],
    opts: &SolverOptions,
) -> Result<Prepared<'a>, Option<String>> {
    let n = problem.n;
    let mut c = DVector::zeros(n);
    for &(i, v) in &problem.objective {
        c[i] += v;
    }
    let mut a = DMatrix::zeros(problem.eqs.len(), n);
    let mut b = DVector::zeros(problem.eqs.len());
    for (r, e) in problem.eqs.iter().enumerate() {
        for &(i, v) in &e.coef {
            a[(r, i)] += v;
        }
        b[r] = e.rhs;
    }
    let z = null_space(&a);
    project_equalities(&a, &b, x);
    let mut rows = Vec::new();
    for con in &problem.ineqs {
        match &con.ineq {
            Ineq::Affine { coef, constant } => {
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coef.len());
                for &(i, v) in coef {
                    match merged.iter_mut().find(|(j, _)| *j == i) {
                        Some(e) => e.1 += v,
                        None => merged.push((i, v)),
                    }
                }
                merged.retain(|&(_, v)| v != 0.0);
                let norm = merged.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    if *constant < -opts.feas_tol {
                        return Err(Some(con.label.clone()));
                    }
                    continue;
                }
                rows.push(Row::Affine {
                    coef: merged.into_iter().map(|(i, v)| (i, v / norm)).collect(),
                    constant: constant / norm,
                });
            }
            Ineq::Concave(f) => {
                // scale by the gradient norm at the warm start
                let e = f.eval(x).ok_or_else(|| Some(con.label.clone()))?;
                let gn = e.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                rows.push(Row::Concave {
                    f: f.as_ref(),
                    w: 1.0 / gn.max(1.0),
                });
            }
        }
    }
    Ok(Prepared { n, c, rows, z })
}

/// Orthonormal basis of the null space of `a` (`None` when there are no rows).
fn null_space(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (p, n) = a.shape();
    if p == 0 {
        return None;
    }
    let eig = (a.transpose() * a).symmetric_eigen();
    let top = eig.eigenvalues.amax().max(1e-300);
    let mut cols: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] <= 1e-10 * top)
        .collect();
    cols.sort_unstable();
    let mut z = DMatrix::zeros(n, cols.len());
    for (c, &i) in cols.iter().enumerate() {
        z.set_column(c, &eig.eigenvectors.column(i));
    }
    Some(z)
}

/// Least-squares correction of `x` onto `{A x = b}`.
fn project_equalities(a: &DMatrix<f64>, b: &DVector<f64>, x: &mut [f64]) {
    if a.nrows() == 0 {
        return;
    }
    let xv = DVector::from_column_slice(x);
    let resid = b - a * &xv;
    if resid.amax() <= EQ_TOL * 1e-3 {
        return;
    }
    let aat = a * a.transpose();
    if let Ok(pinv) = aat.pseudo_inverse(1e-12) {
        let dx = a.transpose() * (pinv * resid);
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi += d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NegSquare {
        vars: Vec<usize>,
    }

    /// `U ≤ −(x − 2)²` written as `−(x − 2)² − U ≥ 0` over vars `[x, U]`.
    impl ConcaveFn for NegSquare {
        fn vars(&self) -> &[usize] {
            &self.vars
        }
        fn value(&self, x: &[f64]) -> Option<f64> {
            Some(-(x[0] - 2.0).powi(2) - x[1])
        }
        fn eval(&self, x: &[f64]) -> Option<LocalEval> {
            Some(LocalEval {
                value: self.value(x)?,
                grad: vec![-2.0 * (x[0] - 2.0), -1.0],
                hess: vec![-2.0, 0.0, 0.0, 0.0],
            })
        }
    }

    fn lp_bound() -> Problem {
        Problem {
            n: 1,
            objective: vec![(0, 1.0)],
            ineqs: vec![Constraint {
                label: "U<=3".into(),
                ineq: Ineq::Affine {
                    coef: vec![(0, -1.0)],
                    constant: 3.0,
                },
            }],
            eqs: vec![],
        }
    }

    #[test]
    fn bound_attaining_lp() {
        let sol = solve(&lp_bound(), &[0.0], &SolverOptions::default());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-6);
        // infeasible warm start
        let sol = solve(&lp_bound(), &[10.0], &SolverOptions::default());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn smooth_concave_vertex() {
        let p = Problem {
            n: 2,
            objective: vec![(1, 1.0)],
            ineqs: vec![Constraint {
                label: "epi".into(),
                ineq: Ineq::Concave(Box::new(NegSquare { vars: vec![0, 1] })),
            }],
            eqs: vec![],
        };
        let sol = solve(&p, &[-5.0, -100.0], &SolverOptions::default());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-3, "{:?}", sol.x);
        assert!(sol.x[1].abs() < 1e-6);
    }

    #[test]
    fn equality_constrained_simplex() {
        // maximize 1·a0 + 2·a1 + 0.5·a2 over the simplex
        let p = Problem {
            n: 3,
            objective: vec![(0, 1.0), (1, 2.0), (2, 0.5)],
            ineqs: (0..3)
                .map(|i| Constraint {
                    label: format!("a{i}>=0"),
                    ineq: Ineq::Affine {
                        coef: vec![(i, 1.0)],
                        constant: 0.0,
                    },
                })
                .collect(),
            eqs: vec![Equality {
                label: "sum".into(),
                coef: vec![(0, 1.0), (1, 1.0), (2, 1.0)],
                rhs: 1.0,
            }],
        };
        let sol = solve(&p, &[1.0 / 3.0; 3], &SolverOptions::default());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[1] - 1.0).abs() < 1e-6);
        assert!((sol.x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_infeasibility_with_label() {
        let p = Problem {
            n: 1,
            objective: vec![(0, 1.0)],
            ineqs: vec![
                Constraint {
                    label: "x<=1".into(),
                    ineq: Ineq::Affine {
                        coef: vec![(0, -1.0)],
                        constant: 1.0,
                    },
                },
                Constraint {
                    label: "x>=2".into(),
                    ineq: Ineq::Affine {
                        coef: vec![(0, 1.0)],
                        constant: -2.0,
                    },
                },
            ],
            eqs: vec![],
        };
        let sol = solve(&p, &[0.0], &SolverOptions::default());
        assert_eq!(sol.status, Status::Infeasible);
        assert_eq!(sol.violated.as_deref(), Some("x>=2"));
    }

    #[test]
    fn deterministic() {
        let p = lp_bound();
        let a = solve(&p, &[0.5], &SolverOptions::default());
        let b = solve(&p, &[0.5], &SolverOptions::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.status, b.status);
    }
}
