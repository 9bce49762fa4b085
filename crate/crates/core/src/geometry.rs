//! Planar point helpers. Points are `[x, y]` in meters.

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm2(a: Point) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Point) -> f64 {
    norm2(a).sqrt()
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// `a + z (b - a)`; returns the endpoints bit-exactly at `z = 0` and `z = 1`.
#[inline]
pub fn lerp(a: Point, b: Point, z: f64) -> Point {
    if z == 0.0 {
        a
    } else if z == 1.0 {
        b
    } else {
        [a[0] + z * (b[0] - a[0]), a[1] + z * (b[1] - a[1])]
    }
}

pub fn is_finite(a: Point) -> bool {
    a[0].is_finite() && a[1].is_finite()
}

/// Minimum of `c2 z² + c1 z + c0` over `z ∈ [0, 1]`, with its minimizer.
pub fn min_quadratic_unit(c2: f64, c1: f64, c0: f64) -> (f64, f64) {
    let f = |z: f64| (c2 * z + c1) * z + c0;
    let (mut best_z, mut best) = if f(1.0) < c0 {
        (1.0, f(1.0))
    } else {
        (0.0, c0)
    };
    if c2 > 0.0 {
        let zv = -c1 / (2.0 * c2);
        if zv > 0.0 && zv < 1.0 {
            let v = f(zv);
            if v < best {
                best = v;
                best_z = zv;
            }
        }
    }
    (best, best_z)
}
