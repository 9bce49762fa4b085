//! Concave lower bounds of the rate and throughput terms around a reference
//! point, and the affine restrictions that keep them valid.
//!
//! Every bound is written once, generically over [`Num`], so the same code
//! gives plain values (`f64`) and exact second derivatives (hyper-dual numbers).

use nalgebra::{SMatrix, SVector};
use num_dual::{Dual2SVec64, DualNum};

use crate::channel::{dist2_3d, snr_hover, GroundNode};
use crate::geometry::{dot, lerp, min_quadratic_unit, norm2, sub, Point};
use crate::scenario::Scenario;
use crate::Error;

/// Scalar type the bounds are evaluated in.
pub trait Num: DualNum<Primitive = f64> + Copy {}
impl<T: DualNum<Primitive = f64> + Copy> Num for T {}

/// Smoothing length for chord norms (meters): `sqrt(‖Δ‖² + δ²)`.
pub const CHORD_SMOOTHING: f64 = 1e-4;

#[inline]
fn c<D: Num>(v: f64) -> D {
    D::from(v)
}

#[inline]
pub fn lerp_d<D: Num>(a: [D; 2], b: [D; 2], z: f64) -> [D; 2] {
    [a[0] + (b[0] - a[0]) * z, a[1] + (b[1] - a[1]) * z]
}

/// Squared 3D distance `‖q − w‖² + H²`.
#[inline]
pub fn dist2<D: Num>(q: [D; 2], w: Point, alt: f64) -> D {
    let dx = q[0] - w[0];
    let dy = q[1] - w[1];
    dx * dx + dy * dy + alt * alt
}

/// First-order expansion of `‖q − w‖²` at `qr` plus `H²`; a global
/// underestimator of the squared 3D distance.
#[inline]
pub fn lin_dist2<D: Num>(qr: Point, q: [D; 2], w: Point, alt: f64) -> D {
    let g = sub(qr, w);
    (q[0] - w[0]) * (2.0 * g[0]) + (q[1] - w[1]) * (2.0 * g[1]) + (alt * alt - norm2(g))
}

/// `1` iff the reference secrecy margin at `(q_S, q_J)` is nonnegative.
pub fn judgment(q_s: Point, q_j: Point, k: usize, sc: &Scenario) -> bool {
    crate::channel::secrecy_margin(q_s, q_j, k, sc) >= 0.0
}

/// Frozen constants of the rate bound for one user at one reference pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RateConsts {
    pub qs_r: Point,
    pub qj_r: Point,
    pub w_k: Point,
    pub w_e: Point,
    pub alt: f64,
    pub judgment: bool,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub e1: f64,
    pub e2: f64,
    pub f1: f64,
    pub f2: f64,
    /// Coefficients of `h`: `ck·d_Sk + cj·(F1/2ℓ_Jk² + d_Sk²/2F1) + ce1·(F2/2ℓ_Se² + d_Je²/2F2) + ce2/ℓ_Se`.
    pub ck: f64,
    pub cj: f64,
    pub ce1: f64,
    pub ce2: f64,
    /// Reference secrecy margin `R_k − R_e`.
    pub margin_r: f64,
}

impl RateConsts {
    pub fn new(qs_r: Point, qj_r: Point, k: usize, sc: &Scenario) -> Self {
        let ln2 = std::f64::consts::LN_2;
        let user = GroundNode::User(k);
        let gk = snr_hover(qs_r, qj_r, user, sc);
        let ge = snr_hover(qs_r, qj_r, GroundNode::Eve, sc);
        let margin_r = (gk.ln_1p() - ge.ln_1p()) / ln2;
        let a1 = gk * gk / (ln2 * (gk + 1.0));
        let a2 = 1.0 / (ln2 * (ge + 1.0));
        let b1 = a1 / gk + a2 * ge + margin_r;
        let w_k = sc.gu_pos[k];
        let w_e = sc.eve_pos;
        let d_sk = dist2_3d(qs_r, w_k, sc.alt);
        let d_jk = dist2_3d(qj_r, w_k, sc.alt);
        let d_se = dist2_3d(qs_r, w_e, sc.alt);
        let d_je = dist2_3d(qj_r, w_e, sc.alt);
        let x = sc.beta0 * sc.p_j + sc.sigma2_eve * d_je;
        let e1 = sc.beta0 * sc.beta0 * sc.p_s * sc.p_j / (x * x);
        let e2 = sc.beta0 * sc.p_s * sc.sigma2_eve * d_je * d_je / (x * x);
        RateConsts {
            qs_r,
            qj_r,
            w_k,
            w_e,
            alt: sc.alt,
            judgment: margin_r >= 0.0,
            a1,
            a2,
            b1,
            e1,
            e2,
            f1: d_sk * d_jk,
            f2: d_se * d_je,
            ck: a1 * sc.sigma2_gu / (sc.beta0 * sc.p_s),
            cj: a1 * sc.p_j / sc.p_s,
            ce1: a2 * e1,
            ce2: a2 * e2,
            margin_r,
        }
    }

    /// Convex upper bound `h` of `A1/γ_k + A2 γ_e`; `None` if a linearized distance is nonpositive.
    pub fn h<D: Num>(&self, qs: [D; 2], qj: [D; 2]) -> Option<D> {
        let d_sk = dist2(qs, self.w_k, self.alt);
        let l_se = lin_dist2(self.qs_r, qs, self.w_e, self.alt);
        if !(l_se.re() > 0.0) {
            return None;
        }
        let mut h = d_sk * self.ck + l_se.recip() * self.ce2;
        if self.cj != 0.0 {
            let l_jk = lin_dist2(self.qj_r, qj, self.w_k, self.alt);
            if !(l_jk.re() > 0.0) {
                return None;
            }
            h +=
                ((l_jk * l_jk).recip() * (0.5 * self.f1) + d_sk * d_sk * (0.5 / self.f1)) * self.cj;
        }
        if self.ce1 != 0.0 {
            let d_je = dist2(qj, self.w_e, self.alt);
            h += ((l_se * l_se).recip() * (0.5 * self.f2) + d_je * d_je * (0.5 / self.f2))
                * self.ce1;
        }
        Some(h)
    }

    pub fn h_ref(&self) -> f64 {
        self.h(self.qs_r, self.qj_r).unwrap_or(f64::NAN)
    }

    /// `J·(B1 − h)`: concave lower bound of the clamped secrecy rate.
    pub fn rate<D: Num>(&self, qs: [D; 2], qj: [D; 2]) -> Option<D> {
        if !self.judgment {
            return Some(c(0.0));
        }
        Some(c::<D>(self.b1) - self.h(qs, qj)?)
    }
}

/// Floors a reference quantity before it enters a ratio.
pub fn floor(v: f64, eps: f64) -> f64 {
    v.max(eps)
}

/// Hover term `a_{i,k} t_i R_k` lower bound. Locals: `[a, t, S_x, S_y, J_x, J_y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoverTerm {
    pub rate: RateConsts,
    pub shape: ProductShape,
}

/// How the `a·x·(B − h)` product is decoupled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProductShape {
    /// Free scheduling weight: cubic AM-GM plus the bilinear split with `F3`.
    Free { c1: f64, c2: f64, f3: f64 },
    /// Weight fixed at one: `x·h ≤ (C x² + h²/C)/2`.
    Fixed { c: f64 },
}

impl ProductShape {
    /// Constants for a product with reference `(a, x, h)`, each floored at `eps`.
    pub fn new(free: bool, a_r: f64, x_r: f64, h_r: f64, eps: f64) -> Self {
        let (a, x, h) = (floor(a_r, eps), floor(x_r, eps), floor(h_r, eps));
        if free {
            ProductShape::Free {
                c1: a / x,
                c2: a / h,
                f3: floor(1.0 - a_r, eps) / x,
            }
        } else {
            ProductShape::Fixed { c: h / x }
        }
    }

    /// Lower bound of `a·(B x⁺ − x h)` where `x⁺` is the increasing-term
    /// version of `x` (`x_lin ≤ x`) and `x` appears in the decreasing terms.
    pub fn eval<D: Num>(&self, a: D, x_lin: D, x: D, b: f64, h: D) -> D {
        match *self {
            ProductShape::Free { c1, c2, f3 } => {
                let one_minus = c::<D>(1.0) - a;
                let s = a + x * c1 + h * c2;
                x_lin * b
                    - one_minus * one_minus * (b / (2.0 * f3))
                    - x * x * (b * f3 / 2.0)
                    - s * s * s * (1.0 / (27.0 * c1 * c2))
            }
            ProductShape::Fixed { c: cc } => x_lin * b - (x * x * cc + h * h * (1.0 / cc)) * 0.5,
        }
    }
}

impl HoverTerm {
    pub fn new(rate: RateConsts, a_r: f64, t_r: f64, free: bool, eps: f64) -> Self {
        let h_r = rate.h_ref();
        HoverTerm {
            shape: ProductShape::new(free, a_r, t_r, h_r, eps),
            rate,
        }
    }

    pub fn value<D: Num>(&self, a: D, t: D, qs: [D; 2], qj: [D; 2]) -> Option<D> {
        if !self.rate.judgment {
            return Some(c(0.0));
        }
        let h = self.rate.h(qs, qj)?;
        Some(self.shape.eval(a, t, t, self.rate.b1, h))
    }
}

/// Flight-segment term `a_{i,j,k} Δt ∫R_k dz` lower bound.
/// Locals: `[a, S0_x, S0_y, S1_x, S1_y, J0_x, J0_y, J1_x, J1_y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlyTerm {
    /// Per quadrature node: abscissa, weight, rate constants at the reference node.
    pub nodes: Vec<(f64, f64, RateConsts)>,
    /// `Σ w_n J_n B1_n / V`.
    pub b2: f64,
    /// Reference value of `Σ w_n J_n h_n`.
    pub h_int_r: f64,
    /// `true` when the jammer's chord defines the segment time.
    pub lambda_j: bool,
    /// Unit direction of the selected reference chord.
    pub dir_r: Point,
    pub d_r: f64,
    pub v_max: f64,
    pub shape: ProductShape,
}

impl FlyTerm {
    /// `None` when the selected reference chord is (numerically) zero or no node counts.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s_r: (Point, Point),
        j_r: (Point, Point),
        k: usize,
        a_r: f64,
        nodes: &[(f64, f64)],
        free: bool,
        eps: f64,
        sc: &Scenario,
    ) -> Option<Self> {
        let lambda_j = lambda_selects_jammer(s_r, j_r);
        let (p0, p1) = if lambda_j { j_r } else { s_r };
        let chord = sub(p1, p0);
        let d_r = norm2(chord).sqrt();
        if d_r < crate::trajectory::ZERO_CHORD {
            return None;
        }
        let nodes: Vec<(f64, f64, RateConsts)> = nodes
            .iter()
            .map(|&(z, w)| {
                (
                    z,
                    w,
                    RateConsts::new(lerp(s_r.0, s_r.1, z), lerp(j_r.0, j_r.1, z), k, sc),
                )
            })
            .collect();
        let b2 = nodes
            .iter()
            .filter(|n| n.2.judgment)
            .map(|n| n.1 * n.2.b1)
            .sum::<f64>()
            / sc.v_max;
        if b2 <= 0.0 {
            return None;
        }
        let h_int_r = nodes
            .iter()
            .filter(|n| n.2.judgment)
            .map(|n| n.1 * n.2.h_ref())
            .sum::<f64>();
        Some(FlyTerm {
            nodes,
            b2,
            h_int_r,
            lambda_j,
            dir_r: [chord[0] / d_r, chord[1] / d_r],
            d_r,
            v_max: sc.v_max,
            shape: ProductShape::new(free, a_r, d_r, h_int_r, eps),
        })
    }

    /// `Σ w_n J_n h_n` at the decision's node positions.
    pub fn h_int<D: Num>(&self, s: ([D; 2], [D; 2]), j: ([D; 2], [D; 2])) -> Option<D> {
        let mut acc = c::<D>(0.0);
        for (z, w, rc) in &self.nodes {
            if rc.judgment {
                acc += rc.h(lerp_d(s.0, s.1, *z), lerp_d(j.0, j.1, *z))? * *w;
            }
        }
        Some(acc)
    }

    pub fn value<D: Num>(&self, a: D, s: ([D; 2], [D; 2]), j: ([D; 2], [D; 2])) -> Option<D> {
        let (p0, p1) = if self.lambda_j { j } else { s };
        let h = self.h_int(s, j)?;
        Some(self.outer(a, p1[0] - p0[0], p1[1] - p0[1], h))
    }

    /// The bound as a function of the weight, the selected chord `(dx, dy)`
    /// and the node sum `H`.
    fn outer<D: Num>(&self, a: D, dx: D, dy: D, h: D) -> D {
        let d_lin = dx * self.dir_r[0] + dy * self.dir_r[1];
        let d_s = (dx * dx + dy * dy + CHORD_SMOOTHING * CHORD_SMOOTHING).sqrt();
        // bounds a·d·(B2 − H/V); B2 already carries the 1/V
        let b = self.b2;
        match self.shape {
            ProductShape::Free { c1, c2, f3 } => {
                let one_minus = c::<D>(1.0) - a;
                let sum = a + d_s * c1 + h * c2;
                d_lin * b
                    - one_minus * one_minus * (b / (2.0 * f3))
                    - d_s * d_s * (b * f3 / 2.0)
                    - sum * sum * sum * (1.0 / (27.0 * self.v_max * c1 * c2))
            }
            ProductShape::Fixed { c: cc } => {
                d_lin * b - (d_s * d_s * cc + h * h * (1.0 / cc)) * (0.5 / self.v_max)
            }
        }
    }

    /// Value, gradient and Hessian over the locals `[a, S0, S1, J0, J1]`.
    /// Each node bound is differentiated in its own four coordinates and
    /// mapped onto the endpoints; the outer function is differentiated in
    /// `(a, dx, dy, H)`.
    pub fn local_hessian(
        &self,
        v: &[f64; 9],
    ) -> Option<(f64, SVector<f64, 9>, SMatrix<f64, 9, 9>)> {
        // node coordinate c = (1 − z)·v[FROM[c]] + z·v[TO[c]]
        const FROM: [usize; 4] = [1, 2, 5, 6];
        const TO: [usize; 4] = [3, 4, 7, 8];
        let mut h = 0.0;
        let mut gh = SVector::<f64, 9>::zeros();
        let mut hh = SMatrix::<f64, 9, 9>::zeros();
        for (z, w, rc) in &self.nodes {
            if !rc.judgment {
                continue;
            }
            let q: [f64; 4] = std::array::from_fn(|c| v[FROM[c]] + (v[TO[c]] - v[FROM[c]]) * z);
            let (f, g, hs) = num_dual::hessian(
                |x: SVector<Dual2SVec64<4>, 4>| {
                    rc.h([x[0], x[1]], [x[2], x[3]])
                        .unwrap_or(Dual2SVec64::from(f64::NAN))
                },
                &SVector::<f64, 4>::from(q),
            );
            if !f.is_finite() {
                return None;
            }
            h += w * f;
            let legs = |c: usize| [(FROM[c], 1.0 - z), (TO[c], *z)];
            for c in 0..4 {
                for (ia, wa) in legs(c) {
                    gh[ia] += w * wa * g[c];
                    for d in 0..4 {
                        for (ib, wb) in legs(d) {
                            hh[(ia, ib)] += w * wa * wb * hs[(c, d)];
                        }
                    }
                }
            }
        }
        let (p0, p1) = if self.lambda_j { (5, 7) } else { (1, 3) };
        let y = SVector::<f64, 4>::new(v[0], v[p1] - v[p0], v[p1 + 1] - v[p0 + 1], h);
        let (f, gf, hf) = num_dual::hessian(
            |x: SVector<Dual2SVec64<4>, 4>| self.outer(x[0], x[1], x[2], x[3]),
            &y,
        );
        let mut jac = SMatrix::<f64, 4, 9>::zeros();
        jac[(0, 0)] = 1.0;
        jac[(1, p1)] = 1.0;
        jac[(1, p0)] = -1.0;
        jac[(2, p1 + 1)] = 1.0;
        jac[(2, p0 + 1)] = -1.0;
        jac.set_row(3, &gh.transpose());
        let grad = jac.transpose() * gf;
        let hess = jac.transpose() * hf * jac + hh * gf[3];
        f.is_finite().then_some((f, grad, hess))
    }
}

/// `λ = 1` when the jammer's reference chord is strictly longer (ties go to UAV-S).
pub fn lambda_selects_jammer(s_r: (Point, Point), j_r: (Point, Point)) -> bool {
    let ds = norm2(sub(s_r.1, s_r.0)).sqrt();
    let dj = norm2(sub(j_r.1, j_r.0)).sqrt();
    dj - ds > 1e-9
}

/// Linearized squared inter-UAV distance along a segment,
/// `D(z) = 2 Δr(z)·Δ(z) − ‖Δr(z)‖²`, where `Δr` is the reference relative
/// displacement `S − J` and `Δ` the decision's.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionBound {
    pub r0: Point,
    pub r1: Point,
    /// Vertex of `‖Δr(z)‖²` when it lies strictly inside `(0, 1)`.
    pub z_star: Option<f64>,
}

impl CollisionBound {
    pub fn new(r0: Point, r1: Point, d_min: f64) -> crate::Result<Self> {
        if r0 == r1 && norm2(r0) < d_min * d_min {
            return Err(Error::Infeasible(
                "reference UAVs coincide within d_min along a segment".into(),
            ));
        }
        Ok(CollisionBound {
            r0,
            r1,
            z_star: interior_vertex(r0, r1),
        })
    }

    pub fn ref_at(&self, z: f64) -> Point {
        lerp(self.r0, self.r1, z)
    }

    /// Coefficient vector `2Δr(z)` and constant `−‖Δr(z)‖²`: `D(z) = 2Δr(z)·Δ(z) − ‖Δr(z)‖²`.
    pub fn at(&self, z: f64, d0: Point, d1: Point) -> f64 {
        let r = self.ref_at(z);
        2.0 * dot(r, lerp(d0, d1, z)) - norm2(r)
    }

    /// Points where the bound is enforced.
    pub fn check_points(&self) -> Vec<f64> {
        let mut z = vec![0.0, 1.0];
        z.extend(self.z_star);
        z
    }

    /// Exact `η = min_{z∈[0,1]} D(z)` for the decision displacements `d0, d1`.
    pub fn eta(&self, d0: Point, d1: Point) -> f64 {
        // D(z) = 2 (r0 + z e)·(d0 + z f) − ‖r0 + z e‖²
        let e = sub(self.r1, self.r0);
        let f = sub(d1, d0);
        let c2 = 2.0 * dot(e, f) - norm2(e);
        let c1 = 2.0 * (dot(self.r0, f) + dot(e, d0)) - 2.0 * dot(self.r0, e);
        let c0 = 2.0 * dot(self.r0, d0) - norm2(self.r0);
        let (m, _) = min_quadratic_unit(c2, c1, c0);
        if c2 < 0.0 {
            // concave in z: minimum at an endpoint
            return c0.min(c2 + c1 + c0);
        }
        m
    }
}

/// Vertex of `‖p0 + z (p1 − p0)‖²` if it lies in `(0, 1)`.
pub fn interior_vertex(p0: Point, p1: Point) -> Option<f64> {
    let e = sub(p1, p0);
    let ee = norm2(e);
    if ee == 0.0 {
        return None;
    }
    let z = -dot(p0, e) / ee;
    (z > 0.0 && z < 1.0).then_some(z)
}

/// Linearized horizontal squared distance `2(qr − w)·(q − w) − ‖qr − w‖²`
/// as coefficients on `q` and a constant.
pub fn kappa_row(qr: Point, w: Point) -> (Point, f64) {
    let g = sub(qr, w);
    ([2.0 * g[0], 2.0 * g[1]], -2.0 * dot(g, w) - norm2(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{rate_to, secrecy_rate};
    use crate::scenario::random_scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn near(rng: &mut ChaCha8Rng, p: Point, r: f64) -> Point {
        [p[0] + rng.gen_range(-r..r), p[1] + rng.gen_range(-r..r)]
    }

    #[test]
    fn judgment_examples() {
        let mut sc = random_scenario(1, 2, 500.0);
        sc.eve_pos = sc.gu_pos[0];
        assert!(judgment([100.0, 100.0], [400.0, 400.0], 0, &sc));
        let mut sc = random_scenario(1, 2, 500.0);
        sc.eve_pos = [1e7, 1e7];
        assert!(judgment(sc.gu_pos[1], [0.0, 0.0], 1, &sc));
        let mut sc = random_scenario(1, 2, 500.0);
        sc.gu_pos[0] = [0.0, 0.0];
        sc.eve_pos = [500.0, 500.0];
        let q_s = sc.eve_pos;
        let q_j = [0.0, 500.0];
        let direct =
            rate_to(q_s, q_j, GroundNode::User(0), &sc) < rate_to(q_s, q_j, GroundNode::Eve, &sc);
        assert!(direct);
        assert!(!judgment(q_s, q_j, 0, &sc));
    }

    #[test]
    fn rate_bound_is_tight_and_below() {
        let sc = random_scenario(3, 4, 500.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut checked = 0;
        for _ in 0..50 {
            let qs_r = [rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0)];
            let qj_r = [rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0)];
            for k in 0..4 {
                let rc = RateConsts::new(qs_r, qj_r, k, &sc);
                assert!(rc.a1 > 0.0 && rc.a2 > 0.0 && rc.f1 > 0.0 && rc.f2 > 0.0 && rc.e1 > 0.0);
                if !rc.judgment {
                    continue;
                }
                assert!(rc.b1 > 0.0);
                let truth = secrecy_rate(qs_r, qj_r, k, &sc);
                let got = rc.rate(qs_r, qj_r).unwrap();
                assert!(
                    (got - truth).abs() <= 1e-9 * truth.max(1.0),
                    "{got} vs {truth}"
                );
                for _ in 0..20 {
                    let qs = near(&mut rng, qs_r, 80.0);
                    let qj = near(&mut rng, qj_r, 80.0);
                    if let Some(b) = rc.rate(qs, qj) {
                        assert!(b <= secrecy_rate(qs, qj, k, &sc) + 1e-9);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn rate_bound_without_jamming() {
        let sc = random_scenario(3, 2, 500.0).with_p_j(0.0);
        let rc = RateConsts::new([120.0, 80.0], [300.0, 300.0], 0, &sc);
        assert_eq!(rc.cj, 0.0);
        assert_eq!(rc.ce1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let qs = near(&mut rng, [120.0, 80.0], 100.0);
            let qj = near(&mut rng, [300.0, 300.0], 300.0);
            if let Some(b) = rc.rate(qs, qj) {
                assert!(b <= secrecy_rate(qs, qj, 0, &sc) + 1e-9);
            }
        }
    }

    #[test]
    fn hover_term_tight_and_dominated() {
        let sc = random_scenario(5, 3, 500.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (qs_r, qj_r) = (sc.gu_pos[0], [420.0, 60.0]);
        let rc = RateConsts::new(qs_r, qj_r, 0, &sc);
        assert!(rc.judgment);
        let (a_r, t_r) = (0.4, 20.0);
        let term = HoverTerm::new(rc, a_r, t_r, true, 1e-4);
        let truth = |a: f64, t: f64, qs, qj| a * t * secrecy_rate(qs, qj, 0, &sc);
        let at_ref = term.value(a_r, t_r, qs_r, qj_r).unwrap();
        assert!((at_ref - truth(a_r, t_r, qs_r, qj_r)).abs() <= 1e-9 * at_ref);
        for _ in 0..1000 {
            let a = rng.gen_range(0.0..1.0);
            let t = rng.gen_range(0.0..60.0);
            let qs = near(&mut rng, qs_r, 50.0);
            let qj = near(&mut rng, qj_r, 50.0);
            if let Some(v) = term.value(a, t, qs, qj) {
                assert!(v <= truth(a, t, qs, qj) + 1e-9);
            }
        }
    }

    #[test]
    fn cubic_gradient_matches_finite_differences() {
        let sc = random_scenario(5, 3, 500.0);
        let rc = RateConsts::new(sc.gu_pos[1], [20.0, 450.0], 1, &sc);
        let term = HoverTerm::new(rc, 1.0, 15.0, true, 1e-4);
        let x0 = [
            0.7,
            15.0,
            sc.gu_pos[1][0] + 5.0,
            sc.gu_pos[1][1] - 3.0,
            20.0,
            450.0,
        ];
        let f = |x: &[f64]| term.value(x[0], x[1], [x[2], x[3]], [x[4], x[5]]).unwrap();
        let (_, g, _) = num_dual::hessian(
            |v: nalgebra::SVector<num_dual::Dual2SVec64<6>, 6>| {
                term.value(v[0], v[1], [v[2], v[3]], [v[4], v[5]]).unwrap()
            },
            &nalgebra::SVector::<f64, 6>::from(x0),
        );
        for i in 0..6 {
            let hstep = 1e-5 * x0[i].abs().max(1.0);
            let mut xp = x0;
            let mut xm = x0;
            xp[i] += hstep;
            xm[i] -= hstep;
            let fd = (f(&xp) - f(&xm)) / (2.0 * hstep);
            assert!(
                (fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-3),
                "{i}: {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn fly_term_tight_and_dominated() {
        let sc = random_scenario(7, 2, 500.0);
        let rule = crate::quadrature::UnitRule::gauss_legendre(8);
        let nodes: Vec<(f64, f64)> = rule
            .nodes
            .iter()
            .copied()
            .zip(rule.weights.iter().copied())
            .collect();
        let s_r = (sc.gu_pos[0], sc.gu_pos[1]);
        let j_r = ([450.0, 50.0], [430.0, 90.0]);
        let a_r = 0.6;
        let term = FlyTerm::new(s_r, j_r, 0, a_r, &nodes, true, 1e-4, &sc).unwrap();
        let truth = |a: f64, s: (Point, Point), j: (Point, Point)| {
            let dt =
                crate::geometry::dist(s.0, s.1).max(crate::geometry::dist(j.0, j.1)) / sc.v_max;
            a * dt * rule.integrate(|z| secrecy_rate(lerp(s.0, s.1, z), lerp(j.0, j.1, z), 0, &sc))
        };
        let v = term.value(a_r, s_r, j_r).unwrap();
        let t = truth(a_r, s_r, j_r);
        assert!((v - t).abs() <= 1e-6 * t, "{v} vs {t}");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let a = rng.gen_range(0.0..1.0);
            let s = (near(&mut rng, s_r.0, 40.0), near(&mut rng, s_r.1, 40.0));
            let j = (near(&mut rng, j_r.0, 40.0), near(&mut rng, j_r.1, 40.0));
            if let Some(v) = term.value(a, s, j) {
                assert!(v <= truth(a, s, j) + 1e-9);
            }
        }
    }

    #[test]
    fn fly_hessian_matches_direct_differentiation() {
        let sc = random_scenario(7, 2, 500.0);
        let rule = crate::quadrature::UnitRule::composite(8, 2);
        let nodes: Vec<(f64, f64)> = rule
            .nodes
            .iter()
            .copied()
            .zip(rule.weights.iter().copied())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // S chord longer, then J chord longer; free and fixed weights
        for (j_r, free) in [
            (([450.0, 50.0], [430.0, 90.0]), true),
            (([450.0, 50.0], [30.0, 480.0]), true),
            (([450.0, 50.0], [430.0, 90.0]), false),
        ] {
            let s_r = (sc.gu_pos[0], sc.gu_pos[1]);
            let term = FlyTerm::new(s_r, j_r, 0, 0.6, &nodes, free, 1e-4, &sc).unwrap();
            for _ in 0..5 {
                let p = |rng: &mut ChaCha8Rng, q: Point| near(rng, q, 10.0);
                let (s0, s1, j0, j1) = (
                    p(&mut rng, s_r.0),
                    p(&mut rng, s_r.1),
                    p(&mut rng, j_r.0),
                    p(&mut rng, j_r.1),
                );
                let v = [
                    rng.gen_range(0.1..0.9),
                    s0[0],
                    s0[1],
                    s1[0],
                    s1[1],
                    j0[0],
                    j0[1],
                    j1[0],
                    j1[1],
                ];
                let (f, g, h) = term.local_hessian(&v).unwrap();
                let (f2, g2, h2) = num_dual::hessian(
                    |x: nalgebra::SVector<num_dual::Dual2SVec64<9>, 9>| {
                        term.value(
                            x[0],
                            ([x[1], x[2]], [x[3], x[4]]),
                            ([x[5], x[6]], [x[7], x[8]]),
                        )
                        .unwrap()
                    },
                    &nalgebra::SVector::<f64, 9>::from(v),
                );
                let scale = h2.amax().max(1e-12);
                assert!((f - f2).abs() <= 1e-12 * f2.abs().max(1.0));
                assert!((g - g2).amax() <= 1e-10 * g2.amax().max(1.0));
                assert!(
                    (h - h2).amax() <= 1e-9 * scale,
                    "{}",
                    (h - h2).amax() / scale
                );
            }
        }
    }

    #[test]
    fn lambda_tie_is_symmetric() {
        let s = ([0.0, 0.0], [30.0, 40.0]);
        let j = ([100.0, 0.0], [150.0, 0.0]);
        assert!(!lambda_selects_jammer(s, j));
        let dmax_s = crate::geometry::dist(s.0, s.1);
        let dmax_j = crate::geometry::dist(j.0, j.1);
        assert_eq!(dmax_s, dmax_j);
    }

    #[test]
    fn collision_bound_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let r0 = near(&mut rng, [0.0, 0.0], 50.0);
            let r1 = near(&mut rng, [0.0, 0.0], 50.0);
            let cb = CollisionBound::new(r0, r1, 3.0).unwrap();
            for i in 0..=100 {
                let z = i as f64 / 100.0;
                let truth = norm2(lerp(r0, r1, z));
                assert!((cb.at(z, r0, r1) - truth).abs() <= 1e-9 * truth.max(1.0));
            }
            let d0 = near(&mut rng, r0, 20.0);
            let d1 = near(&mut rng, r1, 20.0);
            for i in 0..=100 {
                let z = i as f64 / 100.0;
                assert!(cb.at(z, d0, d1) <= norm2(lerp(d0, d1, z)) + 1e-9);
            }
        }
        // parallel motion: vertex degenerates, minimum is the offset
        let cb = CollisionBound::new([0.0, 5.0], [0.0, 5.0], 3.0).unwrap();
        assert_eq!(cb.z_star, None);
        assert!((cb.eta([0.0, 5.0], [0.0, 5.0]) - 25.0).abs() < 1e-12);
        assert!(CollisionBound::new([0.0, 1.0], [0.0, 1.0], 3.0).is_err());
    }

    #[test]
    fn eta_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let r0 = near(&mut rng, [0.0, 0.0], 50.0);
            let r1 = near(&mut rng, [0.0, 0.0], 50.0);
            let cb = CollisionBound::new(r0, r1, 0.0).unwrap();
            let d0 = near(&mut rng, r0, 20.0);
            let d1 = near(&mut rng, r1, 20.0);
            let grid = (0..=10_000)
                .map(|i| cb.at(i as f64 / 1e4, d0, d1))
                .fold(f64::INFINITY, f64::min);
            let eta = cb.eta(d0, d1);
            assert!(eta <= grid + 1e-9);
        }
    }
}
