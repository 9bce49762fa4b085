mod common;

use coshf::channel::secrecy_rate;
use coshf::convexify::bounds::{interior_vertex, kappa_row, CollisionBound, RateConsts};
use coshf::geometry::{dist, lerp, norm, norm2, sub, Point};
use coshf::quadrature::UnitRule;
use coshf::trajectory::min_relative_distance;
use coshf::tsp::{path_length, visit_order};
use coshf::Scenario;
use proptest::prelude::*;

fn point(r: f64) -> impl Strategy<Value = Point> {
    (-r..r, -r..r).prop_map(|(x, y)| [x, y])
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tour_order_is_optimal_permutation(
        start in point(500.0),
        end in point(500.0),
        stops in prop::collection::vec(point(500.0), 0..7),
    ) {
        let order = visit_order(start, &stops, end);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..stops.len()).collect::<Vec<_>>());
        let best = permutations(stops.len())
            .iter()
            .map(|p| path_length(start, &stops, end, p))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(path_length(start, &stops, end, &order) <= best + 1e-9);
    }

    #[test]
    fn composite_rule_is_exact_on_low_degree_polynomials(
        order in 1usize..10,
        panels in 1usize..6,
        coef in prop::collection::vec(-5.0f64..5.0, 1..20),
    ) {
        let r = UnitRule::composite(order, panels);
        let deg = (2 * order - 1).min(coef.len() - 1);
        let c = &coef[..=deg];
        let exact: f64 = c.iter().enumerate().map(|(d, a)| a / (d as f64 + 1.0)).sum();
        let got = r.integrate(|z| c.iter().rev().fold(0.0, |acc, a| acc * z + a));
        prop_assert!((got - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        prop_assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn closed_form_pair_distance_matches_dense_sampling(r0 in point(100.0), r1 in point(100.0)) {
        let exact = min_relative_distance(r0, r1);
        let sampled = (0..=4000)
            .map(|i| norm(lerp(r0, r1, i as f64 / 4000.0)))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(exact <= sampled + 1e-9);
        let (zmin, _) = common::grid_min(|z| norm(lerp(r0, r1, z)), 400);
        prop_assert!((exact - norm(lerp(r0, r1, zmin))).abs() < 1e-6);
    }

    #[test]
    fn collision_bound_underestimates_and_touches(
        r0 in point(100.0), r1 in point(100.0),
        d0 in point(100.0), d1 in point(100.0),
        z in 0.0f64..=1.0,
    ) {
        prop_assume!(min_relative_distance(r0, r1) > 1.0);
        let cb = CollisionBound::new(r0, r1, 1.0).unwrap();
        prop_assert!(cb.at(z, d0, d1) <= norm2(lerp(d0, d1, z)) + 1e-7 * (1.0 + norm2(lerp(d0, d1, z))));
        prop_assert!((cb.at(z, r0, r1) - norm2(lerp(r0, r1, z))).abs() <= 1e-9 * (1.0 + norm2(lerp(r0, r1, z))));
        if let Some(v) = interior_vertex(r0, r1) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn kappa_row_underestimates_squared_distance(qr in point(300.0), q in point(300.0), w in point(300.0)) {
        let (g, c) = kappa_row(qr, w);
        let lin = g[0] * q[0] + g[1] * q[1] + c;
        let truth = norm2(sub(q, w));
        prop_assert!(lin <= truth + 1e-8 * (1.0 + truth));
    }

    #[test]
    fn rate_surrogate_is_a_tight_lower_bound(
        qs_r in point(250.0), qj_r in point(250.0),
        qs in point(250.0), qj in point(250.0),
        k in 0usize..4,
    ) {
        let sc = Scenario::reference();
        let rc = RateConsts::new(qs_r, qj_r, k, &sc);
        let at_ref = rc.rate(qs_r, qj_r).unwrap();
        let truth_ref = secrecy_rate(qs_r, qj_r, k, &sc);
        prop_assert!((at_ref - truth_ref).abs() <= 1e-9 * (1.0 + truth_ref));
        if let Some(v) = rc.rate(qs, qj) {
            prop_assert!(v <= secrecy_rate(qs, qj, k, &sc) + 1e-9);
        }
    }

    #[test]
    fn secrecy_rate_vanishes_when_eve_is_closer(q_j in point(500.0), k in 0usize..4) {
        let sc = Scenario::reference();
        let q_s = sc.eve_pos;
        if dist(q_s, sc.gu_pos[k]) > 1.0 && sc.sigma2_eve <= sc.sigma2_gu && dist(q_j, sc.eve_pos) >= dist(q_j, sc.gu_pos[k]) {
            prop_assert_eq!(secrecy_rate(q_s, q_j, k, &sc), 0.0);
        }
    }
}
