//! Piecewise-linear paths on a uniform time grid.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

/// Nodes `φ_0 … φ_M` sampled every `dt`; the path lasts `T = M·dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    dt: f64,
    nodes: Vec<Vec2>,
}

impl DiscretePath {
    pub fn new(dt: f64, nodes: Vec<Vec2>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("path time step must be positive, got {dt}")));
        }
        if nodes.len() < 2 {
            return Err(Error::DegeneratePath("a path needs at least two nodes".into()));
        }
        if let Some(k) = nodes.iter().position(|p| !p.is_finite()) {
            return Err(Error::DegeneratePath(format!("node {k} is not finite")));
        }
        Ok(Self { dt, nodes })
    }

    /// Path with `m` segments over duration `t` given by `f(s)` for `s ∈ [0, 1]`.
    pub fn from_fn(t: f64, m: usize, f: impl Fn(f64) -> Vec2) -> Result<Self> {
        if m == 0 {
            return Err(Error::DegeneratePath("zero segments".into()));
        }
        let nodes = (0..=m).map(|k| f(k as f64 / m as f64)).collect();
        Self::new(t / m as f64, nodes)
    }

    pub fn constant(point: Vec2, t: f64, m: usize) -> Result<Self> {
        Self::from_fn(t, m, |_| point)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<Vec2> {
        self.nodes
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.segments() as f64
    }

    pub fn start(&self) -> Vec2 {
        self.nodes[0]
    }

    pub fn end(&self) -> Vec2 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn is_closed(&self) -> bool {
        self.start() == self.end()
    }

    pub fn arc_length(&self) -> f64 {
        self.nodes.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Same nodes in reverse order, `φ*_k = φ_{M−k}`.
    pub fn reversed(&self) -> DiscretePath {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        DiscretePath { dt: self.dt, nodes }
    }

    /// Same nodes on a stretched clock.
    pub fn with_dt(&self, dt: f64) -> Result<DiscretePath> {
        DiscretePath::new(dt, self.nodes.clone())
    }

    /// Position at time `t` by linear interpolation (clamped to the ends).
    pub fn at(&self, t: f64) -> Vec2 {
        let s = (t / self.dt).clamp(0.0, self.segments() as f64);
        let k = (s.floor() as usize).min(self.segments() - 1);
        self.nodes[k].lerp(self.nodes[k + 1], s - k as f64)
    }

    /// Linear resampling onto `m` segments of the same duration.
    pub fn resample(&self, m: usize) -> Result<DiscretePath> {
        let t = self.duration();
        let mut out = DiscretePath::from_fn(t, m, |s| self.at(s * t))?;
        let last = out.nodes.len() - 1;
        out.nodes[0] = self.start();
        out.nodes[last] = self.end();
        Ok(out)
    }

    /// Doubles the resolution by inserting segment midpoints.
    pub fn refine(&self) -> DiscretePath {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(w[0].midpoint(w[1]));
        }
        nodes.push(self.end());
        DiscretePath { dt: 0.5 * self.dt, nodes }
    }

    /// Concatenation; `other` must start where `self` ends and share `dt`.
    pub fn concat(&self, other: &DiscretePath) -> Result<DiscretePath> {
        if self.end() != other.start() {
            return Err(Error::DegeneratePath("concatenated paths do not meet".into()));
        }
        if ((self.dt - other.dt) / self.dt).abs() > 1e-12 {
            return Err(Error::DegeneratePath("concatenated paths use different time steps".into()));
        }
        let mut nodes = self.nodes.clone();
        nodes.extend_from_slice(&other.nodes[1..]);
        Ok(DiscretePath { dt: self.dt, nodes })
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [Vec2] {
        &mut self.nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> DiscretePath {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
        DiscretePath::new(0.5, pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn basic_accessors() {
        let p = square();
        assert_eq!(p.segments(), 4);
        assert_eq!(p.duration(), 2.0);
        assert!(p.is_closed());
        assert_eq!(p.arc_length(), 4.0);
        assert_eq!(p.at(0.75), Vec2::new(1.0, 0.5));
    }

    #[test]
    fn reverse_is_an_involution() {
        let p = square();
        assert_eq!(p.reversed().reversed(), p);
        assert!(p.reversed().is_closed());
    }

    #[test]
    fn refine_keeps_shape() {
        let p = square().refine();
        assert_eq!(p.segments(), 8);
        assert_eq!(p.duration(), 2.0);
        assert_eq!(p.arc_length(), 4.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DiscretePath::new(0.0, vec![Vec2::ZERO; 3]).is_err());
        assert!(DiscretePath::new(0.1, vec![Vec2::ZERO]).is_err());
        assert!(DiscretePath::new(0.1, vec![Vec2::ZERO, Vec2::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn concat_requires_contact() {
        let p = square();
        assert_eq!(p.concat(&p).unwrap().segments(), 8);
        let q = DiscretePath::new(0.5, vec![Vec2::new(3.0, 0.0), Vec2::ZERO]).unwrap();
        assert!(p.concat(&q).is_err());
    }
}
