//! Gauss–Legendre rules mapped to the unit interval.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRule {
    /// Abscissae in `(0, 1)`, ascending.
    pub nodes: Vec<f64>,
    /// Weights summing to one.
    pub weights: Vec<f64>,
}

impl UnitRule {
    pub fn gauss_legendre(order: usize) -> Self {
        let order = NonZeroUsize::new(order).expect("quadrature order must be positive");
        let rule = GaussLegendre::new(order);
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        UnitRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// `order`-point Gauss–Legendre on each of `panels` equal subintervals.
    pub fn composite(order: usize, panels: usize) -> Self {
        assert!(panels >= 1, "at least one panel required");
        let base = Self::gauss_legendre(order);
        let h = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(order * panels);
        let mut weights = Vec::with_capacity(order * panels);
        for p in 0..panels {
            for (&z, &w) in base.nodes.iter().zip(&base.weights) {
                nodes.push((p as f64 + z) * h);
                weights.push(w * h);
            }
        }
        UnitRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let r = UnitRule::gauss_legendre(8);
        assert_eq!(r.len(), 8);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // degree 15 is exact for 8 nodes
        assert!((r.integrate(|z| z.powi(15)) - 1.0 / 16.0).abs() < 1e-14);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(r.nodes[0] > 0.0 && r.nodes[7] < 1.0);
    }

    #[test]
    fn composite_resolves_kinks() {
        let c = UnitRule::composite(8, 4);
        assert_eq!(c.len(), 32);
        assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(c.nodes.windows(2).all(|w| w[0] < w[1]));
        // a clamp kink at 0.3
        let f = |z: f64| (z - 0.3f64).max(0.0);
        let exact = 0.7 * 0.7 / 2.0;
        let single = (UnitRule::gauss_legendre(8).integrate(f) - exact).abs();
        let comp = (c.integrate(f) - exact).abs();
        assert!(comp < single / 4.0, "{comp} vs {single}");
    }
}
