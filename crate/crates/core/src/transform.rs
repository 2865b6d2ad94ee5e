//! SCGF and rate curves, grid Legendre transforms, and the fluctuation and
//! convexity residuals.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Mc,
    Spectral,
    Variational,
    LegendreOfScgf,
    Empirical,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Mc => "mc",
            Provenance::Spectral => "spectral",
            Provenance::Variational => "variational",
            Provenance::LegendreOfScgf => "legendre-of-scgf",
            Provenance::Empirical => "empirical",
            Provenance::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Provenance::Mc,
            Provenance::Spectral,
            Provenance::Variational,
            Provenance::LegendreOfScgf,
            Provenance::Empirical,
            Provenance::Synthetic,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown provenance `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScgfPoint {
    pub lambda: f64,
    pub value: f64,
    pub reliable: bool,
    /// Monte-Carlo standard error; zero for spectral values.
    pub std_error: f64,
    /// Effective sample size of the tilted average; infinite for spectral values.
    pub ess: f64,
    /// Eigen-residual for spectral values.
    pub residual: f64,
    pub iterations: usize,
}

impl ScgfPoint {
    pub fn exact(lambda: f64, value: f64) -> Self {
        ScgfPoint { lambda, value, reliable: true, std_error: 0.0, ess: f64::INFINITY, residual: 0.0, iterations: 0 }
    }
}

/// Sampled `λ ↦ e(λ)` on a strictly increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScgfCurve {
    pub points: Vec<ScgfPoint>,
    pub provenance: Provenance,
    pub metadata: BTreeMap<String, String>,
}

impl ScgfCurve {
    pub fn new(points: Vec<ScgfPoint>, provenance: Provenance) -> Result<Self> {
        check_increasing(points.iter().map(|p| p.lambda))?;
        Ok(Self { points, provenance, metadata: BTreeMap::new() })
    }

    /// Curve of exact values, e.g. closed forms.
    pub fn from_values(lambdas: &[f64], values: &[f64]) -> Result<Self> {
        if lambdas.len() != values.len() {
            return Err(Error::InvalidParameter("grid and values differ in length".into()));
        }
        let pts = lambdas.iter().zip(values).map(|(&l, &v)| ScgfPoint::exact(l, v)).collect();
        Self::new(pts, Provenance::Synthetic)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn value_at(&self, lambda: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.lambda - lambda).abs() <= 1e-12 * lambda.abs().max(1.0)).map(|p| p.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub q: f64,
    pub value: f64,
    /// The supremum sat on the end of the λ grid, or the minimum on the end of the T grid.
    pub boundary_active: bool,
    pub argmin_t: Option<f64>,
    pub action: Option<f64>,
    pub residual: Option<f64>,
    pub status: Option<String>,
    /// `|s_{2M} − s_M|` at the selected horizon.
    pub halving_delta: Option<f64>,
}

impl RatePoint {
    pub fn plain(q: f64, value: f64) -> Self {
        RatePoint {
            q,
            value,
            boundary_active: false,
            argmin_t: None,
            action: None,
            residual: None,
            status: None,
            halving_delta: None,
        }
    }
}

/// Sampled `q ↦ rate(q)` on a strictly increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<RatePoint>,
    pub provenance: Provenance,
    pub metadata: BTreeMap<String, String>,
}

impl RateCurve {
    pub fn new(points: Vec<RatePoint>, provenance: Provenance) -> Result<Self> {
        check_increasing(points.iter().map(|p| p.q))?;
        Ok(Self { points, provenance, metadata: BTreeMap::new() })
    }

    pub fn from_values(qs: &[f64], values: &[f64]) -> Result<Self> {
        if qs.len() != values.len() {
            return Err(Error::InvalidParameter("grid and values differ in length".into()));
        }
        let pts = qs.iter().zip(values).map(|(&q, &v)| RatePoint::plain(q, v)).collect();
        Self::new(pts, Provenance::Synthetic)
    }

    pub fn qs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.q).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn value_at(&self, q: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.q - q).abs() <= 1e-9 * q.abs().max(1.0)).map(|p| p.value)
    }
}

fn check_increasing(xs: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for x in xs {
        if !x.is_finite() || x <= prev {
            return Err(Error::InvalidParameter("grid must be finite and strictly increasing".into()));
        }
        prev = x;
    }
    Ok(())
}

/// `R(q) = max_λ {λq − e(λ)}` over the reliable sampled λ.
pub fn legendre(curve: &ScgfCurve, q_grid: &[f64]) -> Result<RateCurve> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.reliable && p.value.is_finite())
        .map(|p| (p.lambda, p.value))
        .collect();
    if pts.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, have: pts.len() });
    }
    let last = pts.len() - 1;
    let mut out = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, &(l, e)) in pts.iter().enumerate() {
            let v = l * q - e;
            if v > best {
                best = v;
                arg = i;
            }
        }
        let mut p = RatePoint::plain(q, best);
        p.boundary_active = arg == 0 || arg == last;
        out.push(p);
    }
    let mut rc = RateCurve::new(out, Provenance::LegendreOfScgf)?;
    rc.metadata.insert("source".into(), curve.provenance.as_str().into());
    rc.metadata.insert("lambda_min".into(), pts[0].0.to_string());
    rc.metadata.insert("lambda_max".into(), pts[last].0.to_string());
    Ok(rc)
}

/// Legendre transform of a rate curve back to an SCGF, `e(λ) = max_q {λq − R(q)}`.
pub fn legendre_inverse(rate: &RateCurve, lambda_grid: &[f64]) -> Result<ScgfCurve> {
    let pts: Vec<(f64, f64)> = rate.points.iter().filter(|p| p.value.is_finite()).map(|p| (p.q, p.value)).collect();
    if pts.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, have: pts.len() });
    }
    let last = pts.len() - 1;
    let mut out = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
        for (i, &(q, r)) in pts.iter().enumerate() {
            let v = l * q - r;
            if v > best {
                best = v;
                arg = i;
            }
        }
        let mut p = ScgfPoint::exact(l, best);
        p.reliable = arg != 0 && arg != last;
        out.push(p);
    }
    ScgfCurve::new(out, Provenance::Synthetic)
}

/// `max |rate(q) − rate(−q) + scale·q|` over finite, non-boundary-active pairs.
pub fn ft_residual(rate: &RateCurve, scale: f64) -> Result<f64> {
    let n = rate.points.len();
    let span = rate.points.iter().map(|p| p.q.abs()).fold(0.0, f64::max).max(1e-300);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let a = &rate.points[i];
        let b = &rate.points[n - 1 - i];
        if (a.q + b.q).abs() > 1e-9 * span {
            return Err(Error::AsymmetricGrid);
        }
        if a.value.is_finite() && b.value.is_finite() && !a.boundary_active && !b.boundary_active {
            worst = worst.max((a.value - b.value + scale * a.q).abs());
        }
    }
    Ok(worst)
}

/// Discrete second differences `[(f₊ − f)/h₊ − (f − f₋)/h₋]·(h₊ + h₋)/2`,
/// which reduce to `f₋ − 2f + f₊` on a uniform grid. Indexed by the centre.
pub fn second_differences(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..xs.len().saturating_sub(1) {
        let (hm, hp) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
        let (a, b, c) = (ys[i - 1], ys[i], ys[i + 1]);
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            continue;
        }
        let d = ((c - b) / hp - (b - a) / hm) * 0.5 * (hp + hm);
        out.push((xs[i], d));
    }
    out
}

/// Most negative second difference (0 when convex on the grid).
pub fn convexity_residual(xs: &[f64], ys: &[f64]) -> f64 {
    second_differences(xs, ys).into_iter().map(|(_, d)| d).fold(0.0, f64::min)
}

pub fn scgf_convexity(curve: &ScgfCurve) -> f64 {
    let pts: Vec<_> = curve.points.iter().filter(|p| p.reliable).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.lambda).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.value).collect();
    convexity_residual(&xs, &ys)
}

pub fn rate_convexity(curve: &RateCurve) -> f64 {
    convexity_residual(&curve.qs(), &curve.values())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn quadratic_is_self_dual() {
        let l = grid(-3.0, 3.0, 601);
        let e: Vec<f64> = l.iter().map(|x| 0.5 * x * x).collect();
        let c = ScgfCurve::from_values(&l, &e).unwrap();
        let q = grid(-2.0, 2.0, 41);
        let r = legendre(&c, &q).unwrap();
        for p in &r.points {
            assert!((p.value - 0.5 * p.q * p.q).abs() < 1e-3);
            assert!(!p.boundary_active);
        }
    }

    #[test]
    fn zero_scgf_is_boundary_active_away_from_zero() {
        let l = grid(-1.0, 1.0, 21);
        let c = ScgfCurve::from_values(&l, &vec![0.0; 21]).unwrap();
        let r = legendre(&c, &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.points[1].value, 0.0);
        assert!(r.points[0].boundary_active && r.points[2].boundary_active);
    }

    #[test]
    fn too_few_points() {
        let c = ScgfCurve::from_values(&[0.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(matches!(legendre(&c, &[0.0]), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn ft_negative_control_and_asymmetry() {
        let q = grid(-2.0, 2.0, 9);
        let v: Vec<f64> = q.iter().map(|x: &f64| x.abs()).collect();
        let r = RateCurve::from_values(&q, &v).unwrap();
        assert!((ft_residual(&r, 1.0).unwrap() - 2.0).abs() < 1e-15);
        let r2 = RateCurve::from_values(&[-1.0, 0.0, 2.0], &[0.0; 3]).unwrap();
        assert!(matches!(ft_residual(&r2, 1.0), Err(Error::AsymmetricGrid)));
    }

    #[test]
    fn convexity_controls() {
        let q = grid(-2.0, 2.0, 41);
        let sq: Vec<f64> = q.iter().map(|x| x * x).collect();
        assert!(convexity_residual(&q, &sq) >= 0.0);
        let s: Vec<f64> = q.iter().map(|x| x.sin()).collect();
        assert!(convexity_residual(&q, &s) < 0.0);
    }

    #[test]
    fn non_uniform_second_difference_of_a_line_vanishes() {
        let xs = [0.0, 0.1, 0.5, 0.6, 2.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        for (_, d) in second_differences(&xs, &ys) {
            assert!(d.abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_unsorted_grid() {
        assert!(ScgfCurve::from_values(&[0.0, 0.0, 1.0], &[0.0; 3]).is_err());
    }
}
