//! Free-space air-to-ground channel, achievable rates and secrecy rate.
//!
//! Rates are per unit bandwidth (bits/s/Hz), log base 2.

use crate::geometry::{norm2, sub, Point};
use crate::scenario::Scenario;

/// A ground receiver: one of the users or the eavesdropper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundNode {
    User(usize),
    Eve,
}

impl GroundNode {
    pub fn position(self, sc: &Scenario) -> Point {
        match self {
            GroundNode::User(k) => sc.gu_pos[k],
            GroundNode::Eve => sc.eve_pos,
        }
    }

    pub fn noise(self, sc: &Scenario) -> f64 {
        match self {
            GroundNode::User(_) => sc.sigma2_gu,
            GroundNode::Eve => sc.sigma2_eve,
        }
    }
}

/// Both UAV positions and the node they are evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct LinkGeometry {
    pub q_s: Point,
    pub q_j: Point,
    pub target: GroundNode,
}

impl LinkGeometry {
    pub fn sinr(&self, sc: &Scenario) -> f64 {
        let w = self.target.position(sc);
        sc.p_s * gain(self.q_s, w, sc) / (sc.p_j * gain(self.q_j, w, sc) + self.target.noise(sc))
    }

    pub fn rate(&self, sc: &Scenario) -> f64 {
        self.sinr(sc).ln_1p() / std::f64::consts::LN_2
    }
}

/// Squared 3D distance from a UAV at `q` (altitude `H`) to a ground point `w`.
#[inline]
pub fn dist2_3d(q: Point, w: Point, alt: f64) -> f64 {
    norm2(sub(q, w)) + alt * alt
}

/// `β0 / (‖q − w‖² + H²)`.
#[inline]
pub fn gain(q: Point, w: Point, sc: &Scenario) -> f64 {
    sc.beta0 / dist2_3d(q, w, sc.alt)
}

/// `log2(1 + P_S g_S / (P_J g_J + σ²))` at a ground point `w` with noise `sigma2`.
pub fn rate(q_s: Point, q_j: Point, w: Point, sigma2: f64, sc: &Scenario) -> f64 {
    let sinr = sc.p_s * gain(q_s, w, sc) / (sc.p_j * gain(q_j, w, sc) + sigma2);
    sinr.ln_1p() / std::f64::consts::LN_2
}

pub fn rate_to(q_s: Point, q_j: Point, node: GroundNode, sc: &Scenario) -> f64 {
    rate(q_s, q_j, node.position(sc), node.noise(sc), sc)
}

/// Legitimate rate minus eavesdropper rate, without the clamp.
pub fn secrecy_margin(q_s: Point, q_j: Point, k: usize, sc: &Scenario) -> f64 {
    rate_to(q_s, q_j, GroundNode::User(k), sc) - rate_to(q_s, q_j, GroundNode::Eve, sc)
}

/// `[R_k − R_e]⁺`.
pub fn secrecy_rate(q_s: Point, q_j: Point, k: usize, sc: &Scenario) -> f64 {
    secrecy_margin(q_s, q_j, k, sc).max(0.0)
}

/// SINR written over squared distances:
/// `β0 P_S d²(q_J) / (β0 P_J d²(q_S) + σ² d²(q_S) d²(q_J))`.
pub fn snr_hover(q_s: Point, q_j: Point, node: GroundNode, sc: &Scenario) -> f64 {
    let w = node.position(sc);
    let ds = dist2_3d(q_s, w, sc.alt);
    let dj = dist2_3d(q_j, w, sc.alt);
    sc.beta0 * sc.p_s * dj / (sc.beta0 * sc.p_j * ds + node.noise(sc) * ds * dj)
}
