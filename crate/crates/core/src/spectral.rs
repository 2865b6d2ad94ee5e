//! Grid discretisation of the tilted generator and its Perron eigenvalue.
//!
//! The tilted generator at noise `ε` and tilt `λ` is
//!
//! ```text
//! A f = (ε/2)Δf + ⟨−½∇V + (1+2λε) b, ∇f⟩ + [2λ(1+λε)|b|² + λε ∇·b] f
//! ```
//!
//! Its principal eigenvalue is the scaled cumulant generating function
//! `e(λ)` of the dissipated power and satisfies `e(λ) = e(−1/ε − λ)`.
//!
//! The gradient part is assembled in divergence form with face weights
//! `exp(−V(face)/ε)`, so it is exactly symmetric in the weighted inner
//! product and annihilates constants row by row. The tilt and potential
//! terms use central differences. Boundary conditions are homogeneous
//! Dirichlet.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::linalg::{self, DominantPair};
use crate::model::VectorFieldModel;
use crate::transform::{scgf_convexity, Provenance, ScgfCurve, ScgfPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest admissible number of grid points `m²`.
pub const MAX_GRID_POINTS: usize = 400_000;

/// Square grid `[−L, L]²` with spacing `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(half_width: f64, spacing: f64) -> Result<Self> {
        if !(half_width > 0.0 && spacing > 0.0 && half_width.is_finite() && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid needs positive L and h, got L = {half_width}, h = {spacing}")));
        }
        let cells = 2.0 * half_width / spacing;
        if (cells - cells.round()).abs() > 1e-6 * cells.max(1.0) || cells.round() < 4.0 {
            return Err(Error::InvalidParameter(format!("2L/h = {cells} must be an integer ≥ 4")));
        }
        let g = GridSpec { half_width, spacing };
        let pts = g.points() * g.points();
        if pts > MAX_GRID_POINTS {
            return Err(Error::GridTooLarge { points: pts });
        }
        Ok(g)
    }

    /// Grid with `m` points per axis.
    pub fn with_points(half_width: f64, m: usize) -> Result<Self> {
        if m < 5 {
            return Err(Error::InvalidParameter(format!("need at least 5 points per axis, got {m}")));
        }
        Self::new(half_width, 2.0 * half_width / (m - 1) as f64)
    }

    /// Default grid: `L` three times the radius of `{V ≤ min V + 10ε}`, with
    /// at least 201 and at most 401 points per axis, refined within that range
    /// until the Péclet number is at most 2.
    pub fn default_for(model: &VectorFieldModel, epsilon: f64) -> Result<Self> {
        let l = 3.0 * sublevel_radius(model, 10.0 * epsilon)?;
        let c_max = crate::geom::Region::square(l)
            .lattice_n(201)
            .into_iter()
            .map(|x| model.drift(x).norm())
            .fold(0.0, f64::max);
        // An even cell count keeps the grid exactly coarsenable.
        let cells = (2.0 * l * c_max / (2.0 * epsilon)).ceil() as usize;
        let cells = (cells + cells % 2).clamp(200, 400);
        Self::with_points(l, cells + 1)
    }

    /// Points per axis, boundary included.
    pub fn points(&self) -> usize {
        (2.0 * self.half_width / self.spacing).round() as usize + 1
    }

    /// Unknowns per axis (boundary excluded).
    pub fn interior(&self) -> usize {
        self.points() - 2
    }

    pub fn refined(&self) -> Result<Self> {
        Self::new(self.half_width, 0.5 * self.spacing)
    }

    pub fn coarsened(&self) -> Result<Self> {
        Self::new(self.half_width, 2.0 * self.spacing)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }
}

/// Radius of the sublevel set `{V ≤ min V + level}` around the origin.
pub fn sublevel_radius(model: &VectorFieldModel, level: f64) -> Result<f64> {
    let r0 = model.r0();
    let v_min = model
        .sampling_box()
        .lattice_n(121)
        .into_iter()
        .map(|x| model.potential(x))
        .fold(f64::INFINITY, f64::min);
    let thresh = v_min + level;
    let rays = 32;
    let step = 0.01 * r0;
    let mut radius: f64 = 0.0;
    for k in 0..rays {
        let th = 2.0 * std::f64::consts::PI * k as f64 / rays as f64;
        let dir = Vec2::new(th.cos(), th.sin());
        let mut last_inside = 0.0;
        let mut r = 0.0;
        while r <= 100.0 * r0 {
            if model.potential(dir * r) <= thresh {
                last_inside = r;
            }
            r += step;
        }
        if last_inside >= 100.0 * r0 - step {
            return Err(Error::InvalidParameter("potential sublevel set is not bounded within 100·R0".into()));
        }
        radius = radius.max(last_inside + step);
    }
    Ok(radius)
}

/// Quality diagnostics computed at assembly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDiagnostics {
    /// `max h·|c|/ε` over the grid.
    pub peclet: f64,
    /// `exp(−(min V on ∂box − min V)/ε)`.
    pub boundary_mass: f64,
    /// Radius of `{V ≤ min V + 10ε}` as a fraction of `L`.
    pub confinement_fraction: f64,
    /// Minimum of `|∇V|² − 2ΔV` on the box boundary.
    pub boundary_cv: f64,
    pub warnings: Vec<String>,
}

/// Tilted generator on the interior grid nodes, stored as a 5-point stencil.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    pub epsilon: f64,
    pub lambda: f64,
    pub grid: GridSpec,
    pub diagnostics: GridDiagnostics,
    n: usize,
    diag: Vec<f64>,
    east: Vec<f64>,
    west: Vec<f64>,
    north: Vec<f64>,
    south: Vec<f64>,
    /// `−V/ε + 2 ln h`.
    log_weight: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Dir {
    East,
    West,
    North,
    South,
}

impl SpectralOperator {
    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        (j - 1) * self.n + (i - 1)
    }

    /// Position of unknown `k`.
    pub fn node(&self, k: usize) -> Vec2 {
        let i = k % self.n + 1;
        let j = k / self.n + 1;
        Vec2::new(self.grid.coordinate(i), self.grid.coordinate(j))
    }

    /// Whether every stencil neighbour of unknown `k` is itself an unknown.
    pub fn is_interior_row(&self, k: usize) -> bool {
        let (i, j) = (k % self.n, k / self.n);
        i > 0 && j > 0 && i + 1 < self.n && j + 1 < self.n
    }

    pub fn log_weight(&self) -> &[f64] {
        &self.log_weight
    }

    /// Quadrature weights `exp(−V/ε)·h²`; entries may underflow for small `ε`.
    pub fn weight(&self) -> Vec<f64> {
        self.log_weight.iter().map(|l| l.exp()).collect()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    fn neighbour(&self, k: usize, d: Dir) -> Option<usize> {
        let (i, j) = (k % self.n, k / self.n);
        match d {
            Dir::East if i + 1 < self.n => Some(k + 1),
            Dir::West if i > 0 => Some(k - 1),
            Dir::North if j + 1 < self.n => Some(k + self.n),
            Dir::South if j > 0 => Some(k - self.n),
            _ => None,
        }
    }

    fn coeff(&self, k: usize, d: Dir) -> f64 {
        match d {
            Dir::East => self.east[k],
            Dir::West => self.west[k],
            Dir::North => self.north[k],
            Dir::South => self.south[k],
        }
    }

    /// Matrix entries as `(row, col, value)` triplets.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(5 * self.dim());
        for k in 0..self.dim() {
            out.push((k, k, self.diag[k]));
            for d in [Dir::East, Dir::West, Dir::North, Dir::South] {
                if let Some(l) = self.neighbour(k, d) {
                    out.push((k, l, self.coeff(k, d)));
                }
            }
        }
        out
    }

    /// Entry `(row, col)` of the matrix.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        if row == col {
            return self.diag[row];
        }
        for d in [Dir::East, Dir::West, Dir::North, Dir::South] {
            if self.neighbour(row, d) == Some(col) {
                return self.coeff(row, d);
            }
        }
        0.0
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                let mut acc = self.diag[k] * x[k];
                if i + 1 < n {
                    acc += self.east[k] * x[k + 1];
                }
                if i > 0 {
                    acc += self.west[k] * x[k - 1];
                }
                if j + 1 < n {
                    acc += self.north[k] * x[k + n];
                }
                if j > 0 {
                    acc += self.south[k] * x[k - n];
                }
                y[k] = acc;
            }
        }
    }

    /// Sums of the matrix rows. Rows of interior unknowns vanish exactly at `λ = 0`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                let mut s = 0.0;
                for d in [Dir::East, Dir::West, Dir::North, Dir::South] {
                    if self.neighbour(k, d).is_some() {
                        s += self.coeff(k, d);
                    }
                }
                s + self.diag[k]
            })
            .collect()
    }

    /// `‖A‖_∞`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|k| self.diag[k].abs() + self.east[k].abs() + self.west[k].abs() + self.north[k].abs() + self.south[k].abs())
            .fold(0.0, f64::max)
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.triplets().iter().map(|t| t.2 * t.2).sum::<f64>().sqrt()
    }

    /// `⟨u, v⟩` in the weighted inner product, with weights rescaled by their maximum.
    pub fn weighted_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let lmax = self.log_weight.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        u.iter().zip(v).zip(&self.log_weight).map(|((a, b), l)| a * b * (l - lmax).exp()).sum()
    }

    /// Values of `v` laid out on the grid as `(x, y, v)` rows.
    pub fn grid_values(&self, v: &[f64]) -> Vec<[f64; 3]> {
        (0..self.dim()).map(|k| {
            let p = self.node(k);
            [p.x, p.y, v[k]]
        }).collect()
    }
}

/// Assembles the tilted generator on `grid`.
pub fn assemble(model: &VectorFieldModel, epsilon: f64, lambda: f64, grid: &GridSpec) -> Result<SpectralOperator> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter("lambda must be finite".into()));
    }
    let grid = GridSpec::new(grid.half_width, grid.spacing)?;
    let m = grid.points();
    let n = m - 2;
    let h = grid.spacing;
    let tilt = 1.0 + 2.0 * lambda * epsilon;
    let u_sq = 2.0 * lambda * (1.0 + lambda * epsilon);
    let u_div = lambda * epsilon;
    let a0 = epsilon / (2.0 * h * h);

    // V on the full node lattice and on the faces.
    let xs: Vec<f64> = (0..m).map(|i| grid.coordinate(i)).collect();
    let pot = |x: f64, y: f64| model.potential(Vec2::new(x, y));
    let mut v_node = vec![0.0; m * m];
    for j in 0..m {
        for i in 0..m {
            v_node[j * m + i] = pot(xs[i], xs[j]);
        }
    }
    if v_node.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("potential is not finite on the grid".into()));
    }

    let nn = n * n;
    let mut op = SpectralOperator {
        epsilon,
        lambda,
        grid,
        diagnostics: GridDiagnostics { peclet: 0.0, boundary_mass: 0.0, confinement_fraction: 0.0, boundary_cv: 0.0, warnings: Vec::new() },
        n,
        diag: vec![0.0; nn],
        east: vec![0.0; nn],
        west: vec![0.0; nn],
        north: vec![0.0; nn],
        south: vec![0.0; nn],
        log_weight: vec![0.0; nn],
    };
    let mut peclet: f64 = 0.0;
    for j in 1..=n {
        for i in 1..=n {
            let k = (j - 1) * n + (i - 1);
            let (x, y) = (xs[i], xs[j]);
            let vi = v_node[j * m + i];
            let half = 0.5 * h;
            let face = |fx: f64, fy: f64| a0 * (-(pot(fx, fy) - vi) / epsilon).exp();
            let ae = face(x + half, y);
            let aw = face(x - half, y);
            let an = face(x, y + half);
            let a_s = face(x, y - half);
            let f = model.eval(Vec2::new(x, y));
            let tb = f.b * (tilt / (2.0 * h));
            let e = ae + tb.x;
            let w = aw - tb.x;
            let no = an + tb.y;
            let so = a_s - tb.y;
            op.east[k] = e;
            op.west[k] = w;
            op.north[k] = no;
            op.south[k] = so;
            op.diag[k] = -(((e + w) + no) + so) + u_sq * f.b.norm_sq() + u_div * f.div_b;
            op.log_weight[k] = -vi / epsilon + 2.0 * h.ln();
            peclet = peclet.max(h * f.drift().norm() / epsilon);
        }
    }

    let v_min = v_node.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut v_bdry = f64::INFINITY;
    let mut cv = f64::INFINITY;
    for i in 0..m {
        for &(a, b) in &[(i, 0), (i, m - 1), (0, i), (m - 1, i)] {
            v_bdry = v_bdry.min(v_node[b * m + a]);
            let f = model.eval(Vec2::new(xs[a], xs[b]));
            cv = cv.min(f.grad_v.norm_sq() - 2.0 * f.lap_v);
        }
    }
    let mut d = GridDiagnostics {
        peclet,
        boundary_mass: (-(v_bdry - v_min) / epsilon).exp(),
        confinement_fraction: sublevel_radius(model, 10.0 * epsilon).map(|r| r / grid.half_width).unwrap_or(f64::INFINITY),
        boundary_cv: cv,
        warnings: Vec::new(),
    };
    if d.peclet > 2.0 {
        d.warnings.push(format!("Péclet number {:.3} exceeds 2", d.peclet));
    }
    if d.boundary_mass > 1e-8 {
        d.warnings.push(format!("boundary mass {:.3e} exceeds 1e-8", d.boundary_mass));
    }
    if d.confinement_fraction > 0.75 {
        d.warnings.push(format!("confining region reaches {:.2} L", d.confinement_fraction));
    }
    if d.boundary_cv <= 0.0 {
        d.warnings.push(format!("|∇V|² − 2ΔV = {:.3e} on the boundary", d.boundary_cv));
    }
    op.diagnostics = d;
    Ok(op)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigMethod {
    /// Restarted Arnoldi.
    Arnoldi,
    /// Shifted power iteration.
    Power,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigOptions {
    pub method: EigMethod,
    /// Bound on `‖Av − θv‖/(‖A‖_∞‖v‖)`.
    pub tol: f64,
    /// Budget of matrix-vector products.
    pub max_iter: usize,
    pub krylov_dim: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions { method: EigMethod::Arnoldi, tol: 1e-11, max_iter: 2_000_000, krylov_dim: 20 }
    }
}

#[derive(Clone, Debug)]
pub struct EigResult {
    pub eigenvalue: f64,
    /// Right Perron vector, scaled to unit maximum.
    pub eigenvector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// `min v / max v`.
    pub min_ratio: f64,
}

const POSITIVITY_FLOOR: f64 = -1e-10;

/// Perron eigenpair of `op`, started from the constant vector.
pub fn dominant_eig(op: &SpectralOperator, opts: &EigOptions) -> Result<EigResult> {
    dominant_eig_from(op, &vec![1.0; op.dim()], opts)
}

/// Perron eigenpair of `op` started from `start`, e.g. a prolongated
/// coarse-grid eigenvector.
pub fn dominant_eig_from(op: &SpectralOperator, start: &[f64], opts: &EigOptions) -> Result<EigResult> {
    if start.len() != op.dim() {
        return Err(Error::InvalidParameter(format!("start vector has length {}, operator has {}", start.len(), op.dim())));
    }
    let scale = op.norm_inf().max(f64::MIN_POSITIVE);
    let start = start.to_vec();
    let pair = match opts.method {
        EigMethod::Arnoldi => linalg::arnoldi_rightmost(|x, y| op.apply(x, y), &start, opts.krylov_dim, scale, opts.tol, opts.max_iter)?,
        EigMethod::Power => power_iteration(op, start, scale, opts)?,
    };
    finish(op, pair)
}

fn finish(op: &SpectralOperator, pair: DominantPair) -> Result<EigResult> {
    let mut v = pair.vector;
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(vmax > 0.0) {
        return Err(Error::PositivityLoss { min_ratio: f64::NEG_INFINITY });
    }
    v.iter_mut().for_each(|x| *x /= vmax);
    let min_ratio = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_ratio < POSITIVITY_FLOOR {
        return Err(Error::PositivityLoss { min_ratio });
    }
    let mut av = vec![0.0; v.len()];
    op.apply(&v, &mut av);
    let eigenvalue = op.weighted_dot(&v, &av) / op.weighted_dot(&v, &v);
    Ok(EigResult { eigenvalue, eigenvector: v, residual: pair.residual, iterations: pair.matvecs, min_ratio })
}

fn power_iteration(op: &SpectralOperator, mut v: Vec<f64>, scale: f64, opts: &EigOptions) -> Result<DominantPair> {
    let shift = op.diag.iter().map(|d| -d).fold(0.0, f64::max);
    let mut av = vec![0.0; v.len()];
    let mut res = f64::INFINITY;
    for it in 1..=opts.max_iter {
        op.apply(&v, &mut av);
        let nv = linalg::dot(&v, &v);
        let theta = linalg::dot(&v, &av) / nv;
        if it % 50 == 0 || it == 1 {
            let r: f64 = av.iter().zip(&v).map(|(a, x)| (a - theta * x).powi(2)).sum::<f64>().sqrt();
            res = r / (scale * nv.sqrt());
            if res <= opts.tol {
                return Ok(DominantPair { value: theta, vector: v, residual: res, matvecs: it });
            }
        }
        for (a, x) in av.iter_mut().zip(&v) {
            *a += shift * x;
        }
        let na = linalg::norm(&av);
        let vmax = av.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let vmin = av.iter().cloned().fold(f64::INFINITY, f64::min);
        if vmin < POSITIVITY_FLOOR * vmax {
            return Err(Error::PositivityLoss { min_ratio: vmin / vmax });
        }
        for (x, a) in v.iter_mut().zip(&av) {
            *x = a / na;
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: res })
}

/// Bilinear interpolation of interior values from `coarse` onto `fine`,
/// where `fine` halves the spacing of `coarse` on the same box.
pub fn prolongate(v: &[f64], coarse: &GridSpec, fine: &GridSpec) -> Result<Vec<f64>> {
    let nc = coarse.interior();
    let nf = fine.interior();
    if v.len() != nc * nc || fine.points() != 2 * coarse.points() - 1 {
        return Err(Error::InvalidParameter("prolongation needs a vector on the coarse grid and a twice finer grid".into()));
    }
    // Coarse values including the zero boundary ring.
    let mc = coarse.points();
    let at = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 || i == mc - 1 || j == mc - 1 {
            0.0
        } else {
            v[(j - 1) * nc + (i - 1)]
        }
    };
    let mut out = vec![0.0; nf * nf];
    for jf in 1..=nf {
        for if_ in 1..=nf {
            let (i0, j0) = (if_ / 2, jf / 2);
            let (i1, j1) = (i0 + if_ % 2, j0 + jf % 2);
            out[(jf - 1) * nf + (if_ - 1)] = 0.25 * (at(i0, j0) + at(i1, j0) + at(i0, j1) + at(i1, j1));
        }
    }
    Ok(out)
}

/// Spectral SCGF `λ ↦ e(λ)` on `lambdas`, solved in parallel.
///
/// Failed points are kept with `reliable = false` and a NaN value.
pub fn scgf_curve_spectral(
    model: &VectorFieldModel,
    epsilon: f64,
    lambdas: &[f64],
    grid: &GridSpec,
    opts: &EigOptions,
) -> Result<ScgfCurve> {
    let solved: Vec<ScgfPoint> = lambdas
        .par_iter()
        .map(|&lambda| match assemble(model, epsilon, lambda, grid).and_then(|op| dominant_eig(&op, opts)) {
            Ok(r) => ScgfPoint {
                lambda,
                value: r.eigenvalue,
                reliable: true,
                std_error: 0.0,
                ess: f64::INFINITY,
                residual: r.residual,
                iterations: r.iterations,
            },
            Err(_) => ScgfPoint { lambda, value: f64::NAN, reliable: false, std_error: 0.0, ess: 0.0, residual: f64::NAN, iterations: 0 },
        })
        .collect();
    let mut curve = ScgfCurve::new(solved, Provenance::Spectral)?;
    let md = &mut curve.metadata;
    md.insert("model".into(), model.name().into());
    md.insert("epsilon".into(), epsilon.to_string());
    md.insert("h".into(), grid.spacing.to_string());
    md.insert("L".into(), grid.half_width.to_string());
    md.insert("method".into(), format!("{:?}", opts.method).to_lowercase());
    md.insert("tol_eig".into(), opts.tol.to_string());
    let conv = scgf_convexity(&curve);
    curve.metadata.insert("convexity_residual".into(), conv.to_string());
    Ok(curve)
}

/// `max |e(λ) − e(−1/ε − λ)|/(1 + |e(λ)|)` over grid points whose mirror is also on the grid.
pub fn symmetry_residual(curve: &ScgfCurve, epsilon: f64) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for p in curve.points.iter().filter(|p| p.reliable) {
        let mirror = -1.0 / epsilon - p.lambda;
        if let Some(q) = curve.points.iter().find(|q| q.reliable && (q.lambda - mirror).abs() < 1e-9) {
            let r = (p.value - q.value).abs() / (1.0 + p.value.abs());
            worst = Some(worst.map_or(r, |w: f64| w.max(r)));
        }
    }
    worst
}

/// Residual of the adjoint identity `W⁻¹A(λ)ᵀW = A(−1/ε − λ)`, measured in
/// the weighted frame `X ↦ W^{1/2} X W^{−1/2}`:
/// `‖S(λ)ᵀ − S(−1/ε − λ)‖_F / ‖S(λ)‖_F`.
pub fn adjoint_residual(model: &VectorFieldModel, epsilon: f64, lambda: f64, grid: &GridSpec) -> Result<f64> {
    let a = assemble(model, epsilon, lambda, grid)?;
    let b = assemble(model, epsilon, -1.0 / epsilon - lambda, grid)?;
    let lw = &a.log_weight;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..a.dim() {
        let d = a.diag[k] - b.diag[k];
        num += d * d;
        den += a.diag[k] * a.diag[k];
        for dir in [Dir::East, Dir::West, Dir::North, Dir::South] {
            if let Some(l) = a.neighbour(k, dir) {
                let opposite = match dir {
                    Dir::East => Dir::West,
                    Dir::West => Dir::East,
                    Dir::North => Dir::South,
                    Dir::South => Dir::North,
                };
                let s_a_lk = a.coeff(l, opposite) * (0.5 * (lw[l] - lw[k])).exp();
                let s_b_kl = b.coeff(k, dir) * (0.5 * (lw[k] - lw[l])).exp();
                num += (s_a_lk - s_b_kl).powi(2);
                den += s_a_lk * s_a_lk;
            }
        }
    }
    Ok((num / den).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjointReport {
    pub lambda: f64,
    pub mirror: f64,
    pub residual_h: f64,
    pub residual_half_h: f64,
    /// `residual_h / residual_half_h`; about 4 for a second-order stencil.
    pub ratio: f64,
}

/// Adjoint identity at `grid` and at half its spacing.
pub fn adjoint_check(model: &VectorFieldModel, epsilon: f64, lambda: f64, grid: &GridSpec) -> Result<AdjointReport> {
    let r1 = adjoint_residual(model, epsilon, lambda, grid)?;
    let r2 = adjoint_residual(model, epsilon, lambda, &grid.refined()?)?;
    Ok(AdjointReport { lambda, mirror: -1.0 / epsilon - lambda, residual_h: r1, residual_half_h: r2, ratio: r1 / r2 })
}

/// Relative residual for the symmetric solves; eigenvalue errors are of its square.
const GROUND_STATE_TOL: f64 = 1e-9;
const FILTER_DEGREE: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStateReport {
    /// Top eigenvalues of the symmetrised weighted `H₀`.
    pub weighted: Vec<f64>,
    /// Top eigenvalues of `(ε/2)Δ − |∇V|²/(8ε) + ΔV/4`.
    pub schrodinger: Vec<f64>,
    pub max_gap: f64,
    pub spacing: f64,
}

/// Compares the top `k` eigenvalues of the reversible part in weighted form
/// with those of its Schrödinger form.
pub fn ground_state_check(model: &VectorFieldModel, epsilon: f64, grid: &GridSpec, k: usize) -> Result<GroundStateReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let grid = GridSpec::new(grid.half_width, grid.spacing)?;
    let m = grid.points();
    let n = m - 2;
    let h = grid.spacing;
    let a0 = epsilon / (2.0 * h * h);
    let xs: Vec<f64> = (0..m).map(|i| grid.coordinate(i)).collect();
    let pot = |x: f64, y: f64| model.potential(Vec2::new(x, y));
    let nn = n * n;

    // Symmetrised divergence form: off-diagonal a0·exp(−(V_face − (V_i+V_j)/2)/ε).
    let mut sd = vec![0.0; nn];
    let mut se = vec![0.0; nn];
    let mut sn = vec![0.0; nn];
    // Schrödinger form.
    let mut qd = vec![0.0; nn];
    for j in 1..=n {
        for i in 1..=n {
            let k = (j - 1) * n + (i - 1);
            let (x, y) = (xs[i], xs[j]);
            let vi = pot(x, y);
            let half = 0.5 * h;
            let mut diag = 0.0;
            for (fx, fy, nx, ny) in [(x + half, y, x + h, y), (x - half, y, x - h, y), (x, y + half, x, y + h), (x, y - half, x, y - h)] {
                let vf = pot(fx, fy);
                diag -= a0 * (-(vf - vi) / epsilon).exp();
                let vn = pot(nx, ny);
                let sym = a0 * (-(vf - 0.5 * (vi + vn)) / epsilon).exp();
                if fx > x {
                    se[k] = sym;
                } else if fy > y {
                    sn[k] = sym;
                }
            }
            sd[k] = diag;
            let f = model.eval(Vec2::new(x, y));
            qd[k] = -4.0 * a0 - f.grad_v.norm_sq() / (8.0 * epsilon) + 0.25 * f.lap_v;
        }
    }
    let stencil = |d: &[f64], e: &dyn Fn(usize) -> f64, no: &dyn Fn(usize) -> f64, x: &[f64], y: &mut [f64]| {
        for jj in 0..n {
            for ii in 0..n {
                let k = jj * n + ii;
                let mut acc = d[k] * x[k];
                if ii + 1 < n {
                    acc += e(k) * x[k + 1];
                }
                if ii > 0 {
                    acc += e(k - 1) * x[k - 1];
                }
                if jj + 1 < n {
                    acc += no(k) * x[k + n];
                }
                if jj > 0 {
                    acc += no(k - n) * x[k - n];
                }
                y[k] = acc;
            }
        }
    };
    let lap = |_: usize| a0;
    let scale_s = sd.iter().map(|d| d.abs() * 2.0).fold(0.0, f64::max);
    let scale_q = qd.iter().map(|d| d.abs() + 4.0 * a0).fold(0.0, f64::max);
    let weighted = linalg::symmetric_top_k(|x, y| stencil(&sd, &|i| se[i], &|i| sn[i], x, y), nn, k, FILTER_DEGREE, scale_s, GROUND_STATE_TOL, 5000)?;
    let schrod = linalg::symmetric_top_k(|x, y| stencil(&qd, &lap, &lap, x, y), nn, k, FILTER_DEGREE, scale_q, GROUND_STATE_TOL, 5000)?;
    let max_gap = weighted.values.iter().zip(&schrod.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(GroundStateReport { weighted: weighted.values, schrodinger: schrod.values, max_gap, spacing: h })
}
