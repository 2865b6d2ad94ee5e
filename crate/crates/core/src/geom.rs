//! Planar vectors and 2×2 matrices used throughout the toolkit.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A point or vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Clockwise quarter turn, `(x, y) ↦ (y, −x)`.
    #[inline]
    pub fn perp_cw(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn midpoint(self, other: Vec2) -> Vec2 {
        Vec2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    #[inline]
    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

/// Row-major 2×2 matrix; `m[i][j] = ∂f_i/∂x_j` when used as a Jacobian.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { m: [[0.0; 2]; 2] };

    #[inline]
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    #[inline]
    pub fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    /// `Aᵀ v`.
    #[inline]
    pub fn tr_mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.x + self.m[1][0] * v.y,
            self.m[0][1] * v.x + self.m[1][1] * v.y,
        )
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.m[0][0] * s, self.m[0][1] * s, self.m[1][0] * s, self.m[1][1] * s)
    }

    /// Spectral norm (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        let [[a, b], [c, d]] = self.m;
        let s1 = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
        (0.5 * (s1 + disc)).sqrt()
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Region {
    pub fn square(half_width: f64) -> Self {
        Region { lo: Vec2::new(-half_width, -half_width), hi: Vec2::new(half_width, half_width) }
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi.x > self.lo.x && self.hi.y > self.lo.y)
    }

    /// Lattice points with spacing `step`, both ends included.
    pub fn lattice(&self, step: f64) -> Vec<Vec2> {
        let nx = ((self.hi.x - self.lo.x) / step).round() as usize;
        let ny = ((self.hi.y - self.lo.y) / step).round() as usize;
        let mut pts = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            let y = self.lo.y + (self.hi.y - self.lo.y) * j as f64 / ny.max(1) as f64;
            for i in 0..=nx {
                let x = self.lo.x + (self.hi.x - self.lo.x) * i as f64 / nx.max(1) as f64;
                pts.push(Vec2::new(x, y));
            }
        }
        pts
    }

    /// The `n × n` lattice covering the region.
    pub fn lattice_n(&self, n: usize) -> Vec<Vec2> {
        let n = n.max(2);
        let mut pts = Vec::with_capacity(n * n);
        for j in 0..n {
            let y = self.lo.y + (self.hi.y - self.lo.y) * j as f64 / (n - 1) as f64;
            for i in 0..n {
                let x = self.lo.x + (self.hi.x - self.lo.x) * i as f64 / (n - 1) as f64;
                pts.push(Vec2::new(x, y));
            }
        }
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_rotation_is_one() {
        let (s, c) = 0.3f64.sin_cos();
        let r = Mat2::new(c, -s, s, c);
        assert!((r.spectral_norm() - 1.0).abs() < 1e-14);
        assert!((Mat2::new(3.0, 0.0, 0.0, -5.0).spectral_norm() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn lattice_counts() {
        let r = Region::square(1.0);
        assert_eq!(r.lattice(0.5).len(), 25);
        assert_eq!(r.lattice_n(41).len(), 41 * 41);
    }
}
