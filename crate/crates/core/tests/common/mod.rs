#![allow(dead_code)]

use coshf::geometry::{dist, Point};
use coshf::sca::initialize;
use coshf::{CoShfTrajectory, Scenario};
use rand::Rng;

pub fn jitter<R: Rng>(rng: &mut R, p: Point, r: f64) -> Point {
    [p[0] + rng.gen_range(-r..=r), p[1] + rng.gen_range(-r..=r)]
}

fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Feasible trajectory near the initial one: jittered free points, random
/// fractional schedules, spare time split at random over the hovers.
pub fn random_reference<R: Rng>(sc: &Scenario, rng: &mut R, radius: f64) -> CoShfTrajectory {
    let base = initialize(sc).expect("scenario admits an initial tour");
    let k = sc.k();
    loop {
        let mut t = base.clone();
        for p in t.hover_s.iter_mut().chain(t.hover_j.iter_mut()) {
            *p = jitter(rng, *p, radius);
        }
        for p in t.turn_s.iter_mut().chain(t.turn_j.iter_mut()).flatten() {
            *p = jitter(rng, *p, radius);
        }
        t.sched_hover = (0..k).map(|_| random_simplex(rng, k)).collect();
        t.sched_fly = (0..=k)
            .map(|_| (0..=sc.n_turn).map(|_| random_simplex(rng, k)).collect())
            .collect();
        let spare = sc.mission_time - t.flight_time(sc);
        if spare <= 0.0 {
            continue;
        }
        let w = random_simplex(rng, k);
        t.hover_dur = w.iter().map(|v| v * spare).collect();
        let sep = t
            .segments()
            .map(|s| t.min_pair_distance(s))
            .fold(f64::INFINITY, f64::min);
        if sep >= sc.d_min + 1e-3 {
            return t;
        }
    }
}

/// Minimum of `f` over `[0, 1]` by a dense grid refined with golden-section search.
pub fn grid_min(f: impl Fn(f64) -> f64, n: usize) -> (f64, f64) {
    let h = 1.0 / n as f64;
    let (mut zb, mut fb) = (0.0, f(0.0));
    for i in 1..=n {
        let z = i as f64 * h;
        let v = f(z);
        if v < fb {
            zb = z;
            fb = v;
        }
    }
    let (mut a, mut b) = ((zb - h).max(0.0), (zb + h).min(1.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let zr = 0.5 * (a + b);
    let fr = f(zr);
    if fr < fb {
        (zr, fr)
    } else {
        (zb, fb)
    }
}

pub fn chord_time(s: (Point, Point), j: (Point, Point), v: f64) -> f64 {
    dist(s.0, s.1).max(dist(j.0, j.1)) / v
}
