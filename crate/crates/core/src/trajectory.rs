//! The co-SHF decision object and its exact (non-surrogate) evaluation.
//!
//! Each UAV visits the point sequence
//! `q(0,0) = start, q(0,1..=N), q(1,0) = hover 1, q(1,1..=N), …, q(K,0) = hover K,
//! q(K,1..=N), q(K+1,0) = end`. Segment `(i, j)` runs from `q(i, j)` to the next
//! point in that order. Both UAVs traverse a segment in the same time
//! `max(d_S, d_J) / V`; the UAV with the longer chord flies at `V`.

use serde::{Deserialize, Serialize};

use crate::channel::secrecy_rate;
use crate::geometry::{dist, lerp, min_quadratic_unit, norm2, sub, Point};
use crate::quadrature::UnitRule;
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Chords shorter than this are treated as zero-length.
pub const ZERO_CHORD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Uav {
    S,
    J,
}

/// Flight segment `(i, j)`: leg `i ∈ 0..=K`, sub-segment `j ∈ 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentIndex {
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoShfTrajectory {
    pub start_s: Point,
    pub end_s: Point,
    pub start_j: Point,
    pub end_j: Point,
    /// `K` co-hovering points of each UAV.
    pub hover_s: Vec<Point>,
    pub hover_j: Vec<Point>,
    /// `(K+1) × N` turning points; row `i` lies between hover `i` and `i+1`.
    pub turn_s: Vec<Vec<Point>>,
    pub turn_j: Vec<Vec<Point>>,
    pub hover_dur: Vec<f64>,
    /// `sched_hover[i][k]`: share of hover `i` given to user `k`.
    pub sched_hover: Vec<Vec<f64>>,
    /// `sched_fly[i][j][k]`: share of segment `(i, j)` given to user `k`.
    pub sched_fly: Vec<Vec<Vec<f64>>>,
}

/// One piece of the mission timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    Hover { i: usize, duration: f64 },
    Fly { seg: SegmentIndex, duration: f64 },
}

impl Piece {
    pub fn duration(&self) -> f64 {
        match *self {
            Piece::Hover { duration, .. } | Piece::Fly { duration, .. } => duration,
        }
    }
}

impl CoShfTrajectory {
    pub fn k(&self) -> usize {
        self.hover_s.len()
    }

    pub fn n_turn(&self) -> usize {
        self.turn_s.first().map_or(0, Vec::len)
    }

    pub fn num_segments(&self) -> usize {
        (self.k() + 1) * (self.n_turn() + 1)
    }

    pub fn segments(&self) -> impl Iterator<Item = SegmentIndex> {
        let (k, n) = (self.k(), self.n_turn());
        (0..=k).flat_map(move |i| (0..=n).map(move |j| SegmentIndex { i, j }))
    }

    /// Linear position of a segment in `segments()` order.
    pub fn segment_ordinal(&self, seg: SegmentIndex) -> usize {
        seg.i * (self.n_turn() + 1) + seg.j
    }

    /// Trajectory point `q(i, j)`.
    pub fn point(&self, u: Uav, i: usize, j: usize) -> Point {
        let k = self.k();
        let (start, end, hover, turn) = match u {
            Uav::S => (self.start_s, self.end_s, &self.hover_s, &self.turn_s),
            Uav::J => (self.start_j, self.end_j, &self.hover_j, &self.turn_j),
        };
        match (i, j) {
            (0, 0) => start,
            (i, 0) if i == k + 1 => end,
            (i, 0) => hover[i - 1],
            (i, j) => turn[i][j - 1],
        }
    }

    /// Endpoints of a segment for one UAV.
    pub fn segment_points(&self, u: Uav, seg: SegmentIndex) -> (Point, Point) {
        let (ni, nj) = next_point(seg, self.n_turn());
        (self.point(u, seg.i, seg.j), self.point(u, ni, nj))
    }

    pub fn segment_length(&self, u: Uav, seg: SegmentIndex) -> f64 {
        let (a, b) = self.segment_points(u, seg);
        dist(a, b)
    }

    /// `max(d_S, d_J) / V`; zero when both chords are below [`ZERO_CHORD`].
    pub fn segment_time(&self, seg: SegmentIndex, v_max: f64) -> f64 {
        let d = self
            .segment_length(Uav::S, seg)
            .max(self.segment_length(Uav::J, seg));
        if d < ZERO_CHORD {
            0.0
        } else {
            d / v_max
        }
    }

    pub fn position_at(&self, u: Uav, seg: SegmentIndex, z: f64) -> Result<Point> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::InvalidArgument(format!(
                "segment parameter {z} outside [0, 1]"
            )));
        }
        let (a, b) = self.segment_points(u, seg);
        Ok(lerp(a, b, z))
    }

    pub fn flight_time(&self, sc: &Scenario) -> f64 {
        self.segments()
            .map(|s| self.segment_time(s, sc.v_max))
            .sum()
    }

    pub fn total_time(&self, sc: &Scenario) -> f64 {
        self.hover_dur.iter().sum::<f64>() + self.flight_time(sc)
    }

    /// Exact minimum of `‖q_S(z) − q_J(z)‖` over `z ∈ [0, 1]`.
    pub fn min_pair_distance(&self, seg: SegmentIndex) -> f64 {
        let (s0, s1) = self.segment_points(Uav::S, seg);
        let (j0, j1) = self.segment_points(Uav::J, seg);
        min_relative_distance(sub(s0, j0), sub(s1, j1))
    }

    /// Ordered hover and flight pieces from start to end.
    pub fn timeline(&self, sc: &Scenario) -> Vec<Piece> {
        let mut out = Vec::with_capacity(self.k() + self.num_segments());
        for i in 0..=self.k() {
            if i >= 1 {
                out.push(Piece::Hover {
                    i: i - 1,
                    duration: self.hover_dur[i - 1],
                });
            }
            for j in 0..=self.n_turn() {
                let seg = SegmentIndex { i, j };
                out.push(Piece::Fly {
                    seg,
                    duration: self.segment_time(seg, sc.v_max),
                });
            }
        }
        out
    }

    pub fn piece_weights(&self, piece: &Piece) -> &[f64] {
        match *piece {
            Piece::Hover { i, .. } => &self.sched_hover[i],
            Piece::Fly { seg, .. } => &self.sched_fly[seg.i][seg.j],
        }
    }

    /// Positions of both UAVs at mission time `t` (clamped to the timeline).
    pub fn positions_at_time(&self, sc: &Scenario, t: f64) -> (Point, Point) {
        let mut elapsed = 0.0;
        let pieces = self.timeline(sc);
        for (idx, p) in pieces.iter().enumerate() {
            let d = p.duration();
            let last = idx + 1 == pieces.len();
            if t <= elapsed + d || last {
                return match *p {
                    Piece::Hover { i, .. } => (self.hover_s[i], self.hover_j[i]),
                    Piece::Fly { seg, duration } => {
                        let z = if duration > 0.0 {
                            ((t - elapsed) / duration).clamp(0.0, 1.0)
                        } else {
                            1.0
                        };
                        let (s0, s1) = self.segment_points(Uav::S, seg);
                        let (j0, j1) = self.segment_points(Uav::J, seg);
                        (lerp(s0, s1, z), lerp(j0, j1, z))
                    }
                };
            }
            elapsed += d;
        }
        (self.end_s, self.end_j)
    }

    /// Per-user secrecy throughput (bits/Hz): exact hover terms plus
    /// Gauss–Legendre quadrature of the clamped rate along each segment.
    pub fn throughput(&self, sc: &Scenario, rule: &UnitRule) -> Vec<f64> {
        let k_users = sc.k();
        let mut u = vec![0.0; k_users];
        for i in 0..self.k() {
            let t = self.hover_dur[i];
            for (k, uk) in u.iter_mut().enumerate() {
                let a = self.sched_hover[i][k];
                if a > 0.0 && t > 0.0 {
                    *uk += a * t * secrecy_rate(self.hover_s[i], self.hover_j[i], k, sc);
                }
            }
        }
        for seg in self.segments() {
            let dt = self.segment_time(seg, sc.v_max);
            if dt == 0.0 {
                continue;
            }
            let (s0, s1) = self.segment_points(Uav::S, seg);
            let (j0, j1) = self.segment_points(Uav::J, seg);
            let a = &self.sched_fly[seg.i][seg.j];
            for (k, uk) in u.iter_mut().enumerate() {
                if a[k] <= 0.0 {
                    continue;
                }
                let integral =
                    rule.integrate(|z| secrecy_rate(lerp(s0, s1, z), lerp(j0, j1, z), k, sc));
                *uk += a[k] * dt * integral;
            }
        }
        u
    }

    pub fn min_throughput(&self, sc: &Scenario, rule: &UnitRule) -> f64 {
        self.throughput(sc, rule)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Shape, endpoint, scheduling and duration invariants, plus the time budget.
    pub fn check(&self, sc: &Scenario, time_tol: f64) -> Result<()> {
        let k = sc.k();
        let n = sc.n_turn;
        let shape_ok = self.hover_s.len() == k
            && self.hover_j.len() == k
            && self.hover_dur.len() == k
            && self.turn_s.len() == k + 1
            && self.turn_j.len() == k + 1
            && self.turn_s.iter().chain(&self.turn_j).all(|r| r.len() == n)
            && self.sched_hover.len() == k
            && self.sched_hover.iter().all(|r| r.len() == k)
            && self.sched_fly.len() == k + 1
            && self
                .sched_fly
                .iter()
                .all(|r| r.len() == n + 1 && r.iter().all(|w| w.len() == k));
        if !shape_ok {
            return Err(Error::Invariant(format!(
                "trajectory shape does not match K={k}, N={n}"
            )));
        }
        if self.start_s != sc.start_s
            || self.end_s != sc.end_s
            || self.start_j != sc.start_j
            || self.end_j != sc.end_j
        {
            return Err(Error::Invariant(
                "endpoints not pinned to the scenario".into(),
            ));
        }
        if self.hover_dur.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::Invariant("negative hover duration".into()));
        }
        let groups = self
            .sched_hover
            .iter()
            .chain(self.sched_fly.iter().flatten());
        for g in groups {
            let sum: f64 = g.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || g.iter().any(|&a| !(-1e-12..=1.0 + 1e-12).contains(&a)) {
                return Err(Error::Invariant(
                    "scheduling group does not lie in the simplex".into(),
                ));
            }
        }
        let total = self.total_time(sc);
        if total > sc.mission_time + time_tol {
            return Err(Error::Invariant(format!(
                "total time {total} exceeds T = {}",
                sc.mission_time
            )));
        }
        Ok(())
    }

    /// True when every scheduling weight is exactly 0 or 1.
    pub fn schedule_is_binary(&self) -> bool {
        self.sched_hover
            .iter()
            .chain(self.sched_fly.iter().flatten())
            .flatten()
            .all(|&a| a == 0.0 || a == 1.0)
    }

    /// Replace each scheduling group by its argmax indicator (ties → lowest index).
    pub fn round_schedule(&mut self) {
        fn one_hot(w: &mut [f64]) {
            let mut best = 0;
            for (k, &a) in w.iter().enumerate() {
                if a > w[best] {
                    best = k;
                }
            }
            for (k, a) in w.iter_mut().enumerate() {
                *a = if k == best { 1.0 } else { 0.0 };
            }
        }
        self.sched_hover.iter_mut().for_each(|w| one_hot(w));
        self.sched_fly.iter_mut().flatten().for_each(|w| one_hot(w));
    }

    /// Uniformly sampled path, last sample at `total_time`. `sched[n]` holds the
    /// time-averaged weights over `[t_n, t_{n+1})`.
    pub fn to_discrete(&self, sc: &Scenario, dt: f64) -> Result<DiscretePath> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        let total = self.total_time(sc);
        let mut times: Vec<f64> = (0..)
            .map(|n| n as f64 * dt)
            .take_while(|&t| t < total)
            .collect();
        if times.last().is_none_or(|&t| t < total) {
            times.push(total);
        }
        let pieces = self.timeline(sc);
        let mut starts = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            starts.push(acc);
            acc += p.duration();
        }
        let k = sc.k();
        let mut pos_s = Vec::with_capacity(times.len());
        let mut pos_j = Vec::with_capacity(times.len());
        let mut sched = Vec::with_capacity(times.len());
        for (n, &t) in times.iter().enumerate() {
            let (ps, pj) = self.positions_at_time(sc, t);
            pos_s.push(ps);
            pos_j.push(pj);
            let w = if n + 1 < times.len() {
                let (a, b) = (t, times[n + 1]);
                let mut w = vec![0.0; k];
                for (p, &p0) in pieces.iter().zip(&starts) {
                    let overlap = (p0 + p.duration()).min(b) - p0.max(a);
                    if overlap > 0.0 {
                        for (wk, &pk) in w.iter_mut().zip(self.piece_weights(p)) {
                            *wk += pk * overlap / (b - a);
                        }
                    }
                }
                w
            } else {
                sched.last().cloned().unwrap_or_else(|| vec![0.0; k])
            };
            sched.push(w);
        }
        Ok(DiscretePath {
            dt,
            times,
            pos_s,
            pos_j,
            sched,
            interp: Interp::Linear,
        })
    }
}

/// Index of the point following `(i, j)` in the trajectory order.
pub fn next_point(seg: SegmentIndex, n_turn: usize) -> (usize, usize) {
    if seg.j < n_turn {
        (seg.i, seg.j + 1)
    } else {
        (seg.i + 1, 0)
    }
}

/// Exact `min_{z∈[0,1]} ‖r0 + z (r1 − r0)‖`.
pub fn min_relative_distance(r0: Point, r1: Point) -> f64 {
    let dr = sub(r1, r0);
    let (m, _) = min_quadratic_unit(norm2(dr), 2.0 * crate::geometry::dot(r0, dr), norm2(r0));
    m.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interp {
    /// Positions vary linearly between samples (continuous-time trajectories).
    Linear,
    /// Sample `n` holds over `(t_{n-1}, t_n]` (time-slotted designs).
    HoldNext,
}

/// Uniformly sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub dt: f64,
    pub times: Vec<f64>,
    pub pos_s: Vec<Point>,
    pub pos_j: Vec<Point>,
    pub sched: Vec<Vec<f64>>,
    pub interp: Interp,
}

impl DiscretePath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn active_user(&self, n: usize) -> usize {
        let w = &self.sched[n];
        let mut best = 0;
        for (k, &a) in w.iter().enumerate() {
            if a > w[best] {
                best = k;
            }
        }
        best
    }

    /// Per-user throughput from the samples alone: trapezoid rule for
    /// [`Interp::Linear`], rectangle rule for [`Interp::HoldNext`].
    pub fn integrate_throughput(&self, sc: &Scenario) -> Vec<f64> {
        let k = sc.k();
        let rates: Vec<Vec<f64>> = (0..self.len())
            .map(|n| {
                (0..k)
                    .map(|u| secrecy_rate(self.pos_s[n], self.pos_j[n], u, sc))
                    .collect()
            })
            .collect();
        let mut out = vec![0.0; k];
        for n in 1..self.len() {
            let h = self.times[n] - self.times[n - 1];
            for u in 0..k {
                out[u] += match self.interp {
                    Interp::Linear => {
                        h * self.sched[n - 1][u] * 0.5 * (rates[n - 1][u] + rates[n][u])
                    }
                    Interp::HoldNext => h * self.sched[n][u] * rates[n][u],
                };
            }
        }
        out
    }
}
