//! Tiny 2D vector helpers over `[f64; 2]`.

pub type Point2 = [f64; 2];

#[inline]
pub fn add(a: Point2, b: Point2) -> Point2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(a: Point2, s: f64) -> Point2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Point2, b: Point2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// 2D cross product (z component of the 3D cross).
#[inline]
pub fn cross(a: Point2, b: Point2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: Point2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist(a: Point2, b: Point2) -> f64 {
    norm(sub(a, b))
}

/// Linear interpolation `a + t (b - a)`.
#[inline]
pub fn lerp(a: Point2, b: Point2, t: f64) -> Point2 {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

#[inline]
pub fn is_finite(a: Point2) -> bool {
    a[0].is_finite() && a[1].is_finite()
}
