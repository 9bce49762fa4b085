//! Open-path visiting order from a fixed start to a fixed end.
//!
//! Exact Held–Karp for up to [`EXACT_LIMIT`] stops, nearest neighbour plus
//! 2-opt above that.

use crate::geometry::{dist, Point};

pub const EXACT_LIMIT: usize = 12;

/// Order of `stops` minimising the length of `start → stops… → end`.
pub fn visit_order(start: Point, stops: &[Point], end: Point) -> Vec<usize> {
    if stops.len() <= EXACT_LIMIT {
        held_karp(start, stops, end)
    } else {
        two_opt(start, stops, end, nearest_neighbour(start, stops))
    }
}

pub fn path_length(start: Point, stops: &[Point], end: Point, order: &[usize]) -> f64 {
    let mut prev = start;
    let mut total = 0.0;
    for &i in order {
        total += dist(prev, stops[i]);
        prev = stops[i];
    }
    total + dist(prev, end)
}

fn held_karp(start: Point, stops: &[Point], end: Point) -> Vec<usize> {
    let n = stops.len();
    if n == 0 {
        return Vec::new();
    }
    let full = 1usize << n;
    let mut cost = vec![f64::INFINITY; full * n];
    let mut parent = vec![usize::MAX; full * n];
    for i in 0..n {
        cost[(1 << i) * n + i] = dist(start, stops[i]);
    }
    for mask in 1..full {
        for last in 0..n {
            let c = cost[mask * n + last];
            if mask & (1 << last) == 0 || !c.is_finite() {
                continue;
            }
            for next in 0..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let m2 = mask | (1 << next);
                let c2 = c + dist(stops[last], stops[next]);
                if c2 < cost[m2 * n + next] {
                    cost[m2 * n + next] = c2;
                    parent[m2 * n + next] = last;
                }
            }
        }
    }
    let mask = full - 1;
    let mut last = (0..n)
        .min_by(|&a, &b| {
            let ca = cost[mask * n + a] + dist(stops[a], end);
            let cb = cost[mask * n + b] + dist(stops[b], end);
            ca.total_cmp(&cb)
        })
        .unwrap();
    let mut order = Vec::with_capacity(n);
    let mut m = mask;
    loop {
        order.push(last);
        let p = parent[m * n + last];
        m &= !(1 << last);
        if p == usize::MAX {
            break;
        }
        last = p;
    }
    order.reverse();
    order
}

fn nearest_neighbour(start: Point, stops: &[Point]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..stops.len()).collect();
    let mut order = Vec::with_capacity(stops.len());
    let mut at = start;
    while !left.is_empty() {
        let (pos, _) = left
            .iter()
            .enumerate()
            .min_by(|a, b| dist(at, stops[*a.1]).total_cmp(&dist(at, stops[*b.1])))
            .unwrap();
        let i = left.remove(pos);
        order.push(i);
        at = stops[i];
    }
    order
}

fn two_opt(start: Point, stops: &[Point], end: Point, mut order: Vec<usize>) -> Vec<usize> {
    let mut best = path_length(start, stops, end, &order);
    let mut improved = true;
    while improved {
        improved = false;
        for a in 0..order.len() {
            for b in a + 1..order.len() {
                order[a..=b].reverse();
                let len = path_length(start, stops, end, &order);
                if len < best - 1e-9 {
                    best = len;
                    improved = true;
                } else {
                    order[a..=b].reverse();
                }
            }
        }
    }
    order
}
