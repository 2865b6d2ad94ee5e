//! Discrete Freidlin–Wentzell action, the power-constrained minimisation
//! `S_T(q)`, the scan `s(q) = min_T S_T(q)/T`, feasible-path construction and
//! subadditivity checks.

use crate::error::{Error, Result};
use crate::functional::path_work;
use crate::geom::Vec2;
use crate::model::VectorFieldModel;
use crate::optim::{minimize_ncg, NcgOptions, Objective, RankOneUpdate, TridiagonalPreconditioner};
use crate::path::DiscretePath;
use crate::sde::rk4_step;
use crate::transform::{Provenance, RateCurve, RatePoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Value and gradients of the action and of the work `Σ⟨Δφ_k, b(m_k)⟩`.
struct Terms {
    action: f64,
    work: f64,
}

/// Evaluates the telescoped action and the work; gradients are written for
/// every node when buffers are supplied.
fn evaluate(
    model: &VectorFieldModel,
    nodes: &[Vec2],
    dt: f64,
    mut grad_i: Option<&mut [Vec2]>,
    mut grad_w: Option<&mut [Vec2]>,
) -> Terms {
    if let Some(g) = grad_i.as_deref_mut() {
        g.fill(Vec2::ZERO);
    }
    if let Some(g) = grad_w.as_deref_mut() {
        g.fill(Vec2::ZERO);
    }
    let inv_dt = 1.0 / dt;
    let half_dt = 0.5 * dt;
    let mut action = 0.0;
    let mut work = 0.0;
    for k in 0..nodes.len() - 1 {
        let (a, c) = (nodes[k], nodes[k + 1]);
        let d = c - a;
        let e = model.eval(a.midpoint(c));
        let drift = e.drift();
        action += 0.5 * d.norm_sq() * inv_dt + half_dt * drift.norm_sq() - d.dot(e.b);
        work += d.dot(e.b);
        if grad_i.is_some() || grad_w.is_some() {
            let jbt_d = e.jac_b.tr_mul_vec(d) * 0.5;
            if let Some(g) = grad_i.as_deref_mut() {
                let common = e.jac_drift().tr_mul_vec(drift) * half_dt - jbt_d;
                let kin = d * inv_dt;
                g[k] += common - kin + e.b;
                g[k + 1] += common + kin - e.b;
            }
            if let Some(g) = grad_w.as_deref_mut() {
                g[k] += jbt_d - e.b;
                g[k + 1] += jbt_d + e.b;
            }
        }
    }
    let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
    let (ef, el) = (model.eval(first), model.eval(last));
    action += 0.5 * (el.v - ef.v);
    if let Some(g) = grad_i {
        let n = g.len();
        g[0] -= ef.grad_v * 0.5;
        g[n - 1] += el.grad_v * 0.5;
    }
    Terms { action, work }
}

/// `Σ[|Δφ|²/(2dt) + (dt/2)|c(m)|² − ⟨Δφ, b(m)⟩] + ½[V(φ_M) − V(φ_0)]`.
pub fn action_value(path: &DiscretePath, model: &VectorFieldModel) -> f64 {
    evaluate(model, path.nodes(), path.dt(), None, None).action
}

/// Exact gradient of [`action_value`] with respect to every node.
pub fn grad_action(path: &DiscretePath, model: &VectorFieldModel) -> Vec<Vec2> {
    let mut g = vec![Vec2::ZERO; path.nodes().len()];
    evaluate(model, path.nodes(), path.dt(), Some(&mut g), None);
    g
}

/// Gradient of the dissipated power `L_T` with respect to every node.
pub fn grad_power(path: &DiscretePath, model: &VectorFieldModel) -> Vec<Vec2> {
    let mut g = vec![Vec2::ZERO; path.nodes().len()];
    evaluate(model, path.nodes(), path.dt(), None, Some(&mut g));
    let s = 2.0 / path.duration();
    g.iter().map(|v| *v * s).collect()
}

/// Time-reversed path `φ*_k = φ_{M−k}`.
pub fn reverse_path(path: &DiscretePath) -> DiscretePath {
    path.reversed()
}

/// RMS of the node gradient read as a functional derivative,
/// `sqrt(Σ|∇_j|² / (dt·T))`.
pub fn gradient_norm(grad: &[Vec2], dt: f64, t: f64) -> f64 {
    (grad.iter().map(|g| g.norm_sq()).sum::<f64>() / (dt * t)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    /// `φ_M = φ_0`.
    Closed,
    /// `φ_M = y`.
    Fixed(Vec2),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Constraint tolerance on `|L_T − q|`.
    pub tol_c: f64,
    /// Tolerance on the Lagrangian gradient norm.
    pub tol_g: f64,
    /// Total inner iterations.
    pub max_iter: usize,
    pub max_outer: usize,
    pub rho_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tol_c: 1e-8, tol_g: 1e-5, max_iter: 20_000, max_outer: 40, rho_max: 1e12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Infeasible,
    MaxIter,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Infeasible => "infeasible",
            Status::MaxIter => "max_iter",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizationResult {
    pub path: DiscretePath,
    pub action_value: f64,
    /// `L_T(φ) − q`.
    pub constraint_residual: f64,
    pub multiplier: f64,
    pub gradient_norm: f64,
    pub status: Status,
    pub iterations: usize,
}

impl MinimizationResult {
    pub fn is_feasible(&self, tol_c: f64) -> bool {
        self.constraint_residual.abs() <= tol_c
    }

    /// Action per unit time.
    pub fn rate(&self) -> f64 {
        self.action_value / self.path.duration()
    }
}

struct PathProblem<'a> {
    model: &'a VectorFieldModel,
    dt: f64,
    t: f64,
    q: f64,
    alpha: f64,
    rho: f64,
    nodes: Vec<Vec2>,
    gi: Vec<Vec2>,
    gw: Vec<Vec2>,
}

impl PathProblem<'_> {
    fn load(&mut self, x: &[f64]) {
        let n = self.nodes.len();
        for j in 1..n - 1 {
            self.nodes[j] = Vec2::new(x[2 * (j - 1)], x[2 * (j - 1) + 1]);
        }
    }

    /// Loads `x` and returns `(action, g)` with gradients in the buffers.
    fn terms(&mut self, x: &[f64]) -> (f64, f64) {
        self.load(x);
        let t = evaluate(self.model, &self.nodes, self.dt, Some(&mut self.gi), Some(&mut self.gw));
        (t.action, 2.0 * t.work / self.t - self.q)
    }

    /// Interior gradient of `I + μ·g` flattened into `out`.
    fn lagrangian_grad(&self, mu: f64, out: &mut [f64]) {
        let s = mu * 2.0 / self.t;
        for j in 1..self.nodes.len() - 1 {
            let v = self.gi[j] + self.gw[j] * s;
            out[2 * (j - 1)] = v.x;
            out[2 * (j - 1) + 1] = v.y;
        }
    }

    fn constraint_grad(&self) -> Vec<f64> {
        let s = 2.0 / self.t;
        let mut out = Vec::with_capacity(2 * (self.nodes.len() - 2));
        for j in 1..self.nodes.len() - 1 {
            out.push(self.gw[j].x * s);
            out.push(self.gw[j].y * s);
        }
        out
    }

    fn constraint_is_flat(&self) -> bool {
        self.gw[1..self.gw.len() - 1].iter().all(|v| *v == Vec2::ZERO)
    }
}

impl Objective for PathProblem<'_> {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (a, g) = self.terms(x);
        self.lagrangian_grad(self.alpha + self.rho * g, grad);
        a + self.alpha * g + 0.5 * self.rho * g * g
    }
}

struct Candidate {
    x: Vec<f64>,
    action: f64,
    g: f64,
    mu: f64,
    gn: f64,
}

/// Minimises the action over paths from `x` to the endpoint with `L_T = q`
/// by an augmented Lagrangian with preconditioned nonlinear CG inside.
#[allow(clippy::too_many_arguments)]
pub fn minimize_constrained(
    model: &VectorFieldModel,
    x: Vec2,
    endpoint: Endpoint,
    t: f64,
    q: f64,
    m: usize,
    init: &DiscretePath,
    tol: &Tolerances,
) -> Result<MinimizationResult> {
    let end = match endpoint {
        Endpoint::Closed => x,
        Endpoint::Fixed(y) => y,
    };
    if !(t > 0.0 && t.is_finite() && q.is_finite()) {
        return Err(Error::InvalidParameter("T must be positive and q finite".into()));
    }
    if m < 2 || init.segments() != m {
        return Err(Error::InvalidParameter(format!("init has {} segments, expected M = {m}", init.segments())));
    }
    if ((init.duration() - t) / t).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("init lasts {}, expected T = {t}", init.duration())));
    }
    if init.start() != x || init.end() != end {
        return Err(Error::InvalidParameter("init does not respect the endpoints".into()));
    }
    let dt = t / m as f64;
    let n = m - 1;
    let mut xv: Vec<f64> = init.nodes()[1..m].iter().flat_map(|p| [p.x, p.y]).collect();
    let mut nodes = init.nodes().to_vec();
    nodes[0] = x;
    nodes[m] = end;
    let mut prob = PathProblem {
        model,
        dt,
        t,
        q,
        alpha: 0.0,
        rho: t.max(1.0),
        nodes,
        gi: vec![Vec2::ZERO; m + 1],
        gw: vec![Vec2::ZERO; m + 1],
    };
    let norm = |g: &[f64]| (g.iter().map(|v| v * v).sum::<f64>() / (dt * t)).sqrt();
    let mut grad = vec![0.0; 2 * n];

    let (a0, g0) = prob.terms(&xv);
    prob.lagrangian_grad(prob.rho * g0, &mut grad);
    let mut best = (g0.abs() <= tol.tol_c).then(|| Candidate { x: xv.clone(), action: a0, g: g0, mu: prob.rho * g0, gn: norm(&grad) });
    let finish = |prob: &mut PathProblem, cand: Candidate, status: Status, iterations: usize| -> Result<MinimizationResult> {
        prob.load(&cand.x);
        let path = DiscretePath::new(dt, prob.nodes.clone())?;
        Ok(MinimizationResult {
            path,
            action_value: cand.action,
            constraint_residual: cand.g,
            multiplier: cand.mu,
            gradient_norm: cand.gn,
            status,
            iterations,
        })
    };
    if n == 0 || (prob.constraint_is_flat() && g0.abs() > tol.tol_c) {
        let cand = Candidate { x: xv, action: a0, g: g0, mu: 0.0, gn: norm(&grad) };
        let status = if g0.abs() > tol.tol_c { Status::Infeasible } else { Status::Converged };
        return finish(&mut prob, cand, status, 0);
    }

    // Least-squares multiplier at the initial path, so that a warm start
    // at a constrained minimiser is already stationary.
    {
        let u = prob.constraint_grad();
        let (mut num, mut den) = (0.0, 0.0);
        for (j, w) in u.chunks(2).enumerate() {
            let gi = prob.gi[j + 1];
            num += gi.x * w[0] + gi.y * w[1];
            den += w[0] * w[0] + w[1] * w[1];
        }
        if den > 0.0 && (num / den).is_finite() {
            prob.alpha = -num / den;
        }
    }
    let mu_reg = model.drift_lipschitz().powi(2).max(1.0);
    let base = TridiagonalPreconditioner::new(n, 2, 1.0 / dt, mu_reg * dt);
    let mut omega = 1e-3f64.max(tol.tol_g);
    let mut g_prev = g0.abs();
    let mut total = 0usize;
    let mut stalls = 0;
    let mut status = Status::MaxIter;
    let mut last = Candidate { x: xv.clone(), action: a0, g: g0, mu: 0.0, gn: f64::INFINITY };
    for _ in 0..tol.max_outer {
        prob.terms(&xv);
        let u = prob.constraint_grad();
        let pre = RankOneUpdate::new(&base, &u, prob.rho);
        let opts = NcgOptions {
            max_iter: (tol.max_iter - total).clamp(1, 5000),
            grad_tol: omega,
            ..Default::default()
        };
        let out = minimize_ncg(&mut prob, &pre, &mut xv, &opts, norm);
        total += out.iterations;
        let (a, g) = prob.terms(&xv);
        let mu = prob.alpha + prob.rho * g;
        prob.lagrangian_grad(mu, &mut grad);
        let gn = norm(&grad);
        last = Candidate { x: xv.clone(), action: a, g, mu, gn };
        if g.abs() <= tol.tol_c && best.as_ref().is_none_or(|b| a < b.action) {
            best = Some(Candidate { x: xv.clone(), action: a, g, mu, gn });
        }
        if g.abs() <= tol.tol_c && gn <= tol.tol_g {
            status = Status::Converged;
            break;
        }
        if prob.constraint_is_flat() && g.abs() > tol.tol_c {
            status = Status::Infeasible;
            break;
        }
        prob.alpha = mu;
        if g.abs() > 0.25 * g_prev {
            if prob.rho >= tol.rho_max {
                stalls += 1;
                if stalls >= 3 {
                    status = Status::Infeasible;
                    break;
                }
            }
            prob.rho = (2.0 * prob.rho).min(tol.rho_max);
        }
        g_prev = g.abs();
        omega = (0.1 * omega).max(0.5 * tol.tol_g);
        if total >= tol.max_iter {
            break;
        }
    }
    match best {
        Some(b) => {
            let s = if b.gn <= tol.tol_g { Status::Converged } else if status == Status::Infeasible { Status::MaxIter } else { status.min_feasible() };
            finish(&mut prob, b, s, total)
        }
        None => finish(&mut prob, last, if status == Status::Converged { Status::MaxIter } else { status }, total),
    }
}

impl Status {
    fn min_feasible(self) -> Status {
        match self {
            Status::Converged => Status::MaxIter,
            s => s,
        }
    }
}

fn segment(a: Vec2, b: Vec2, n: usize) -> Vec<Vec2> {
    let mut v: Vec<Vec2> = (0..=n).map(|k| a.lerp(b, k as f64 / n as f64)).collect();
    v[0] = a;
    v[n] = b;
    v
}

fn append(nodes: &mut Vec<Vec2>, piece: &[Vec2]) {
    if nodes.is_empty() {
        nodes.extend_from_slice(piece);
    } else {
        nodes.extend_from_slice(&piece[1..]);
    }
}

fn nodes_work(model: &VectorFieldModel, nodes: &[Vec2]) -> f64 {
    2.0 * nodes.windows(2).map(|w| model.nonconservative(w[0].midpoint(w[1])).dot(w[1] - w[0])).sum::<f64>()
}

/// Path from `x` to `y` with `L_T = q`: a segment to the loop basepoint `z`,
/// `N` copies of a scaled reference loop, a segment to `y`, then a hold.
///
/// The loop duration is the natural period when that leaves enough budget,
/// otherwise `|Q|/(2|q|)`; the loop is shrunk towards `z` until each copy
/// carries the required work.
pub fn feasible_path(model: &VectorFieldModel, x: Vec2, y: Vec2, t: f64, q: f64, m: usize) -> Result<DiscretePath> {
    if !(t > 0.0 && t.is_finite() && q.is_finite() && x.is_finite() && y.is_finite()) || m == 0 {
        return Err(Error::InvalidParameter("feasible_path needs finite inputs, T > 0 and M > 0".into()));
    }
    let lp = model.reference_loop();
    let z = lp.start();
    let period = lp.duration();
    let q_loop = path_work(lp, model);
    if q_loop.abs() <= 1e-12 {
        return Err(Error::InvalidParameter("the reference loop dissipates no power".into()));
    }
    let dt = t / m as f64;
    let seg_steps = |a: Vec2, b: Vec2| if a == b { 0 } else { ((1.0 / dt).round() as usize).max(1) };
    let n_in = seg_steps(x, z);
    let n_out = seg_steps(z, y);
    let seg_in = segment(x, z, n_in.max(1));
    let seg_out = segment(z, y, n_out.max(1));
    let ell = if n_in > 0 { nodes_work(model, &seg_in) } else { 0.0 } + if n_out > 0 { nodes_work(model, &seg_out) } else { 0.0 };
    let t_seg = (n_in + n_out) as f64 * dt;
    let need = q * t - ell;

    let fast_tau = if q == 0.0 { period } else { period.min(q_loop.abs() / (2.0 * q.abs())) };
    let mut taus = vec![period];
    if fast_tau < period {
        taus.push(fast_tau);
    }
    let avail = m as isize - (n_in + n_out) as isize;
    for tau in taus {
        if avail <= 0 {
            break;
        }
        let n_loop = (tau / dt + 1e-9).floor() as usize;
        if n_loop < 4 {
            continue;
        }
        let copies = avail as usize / n_loop;
        if copies == 0 {
            continue;
        }
        let xi = lp.resample(n_loop)?;
        let full = nodes_work(model, xi.nodes());
        let p = need / copies as f64;
        if p.abs() > full.abs() * (1.0 + 1e-12) {
            continue;
        }
        let xi = if p * full < 0.0 { xi.reversed() } else { xi };
        let target = p.abs();
        let scaled = |th: f64| -> Vec<Vec2> { xi.nodes().iter().map(|&v| z + (v - z) * th).collect() };
        let work_at = |th: f64| nodes_work(model, &scaled(th)).abs();
        let theta = if target == 0.0 {
            0.0
        } else if target >= full.abs() {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if work_at(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if (work_at(lo) - target).abs() <= (work_at(hi) - target).abs() { lo } else { hi }
        };
        let loop_nodes = scaled(theta);
        let mut nodes = Vec::with_capacity(m + 1);
        if n_in > 0 {
            append(&mut nodes, &seg_in);
        } else {
            nodes.push(z);
        }
        for _ in 0..copies {
            append(&mut nodes, &loop_nodes);
        }
        if n_out > 0 {
            append(&mut nodes, &seg_out);
        }
        while nodes.len() < m + 1 {
            nodes.push(y);
        }
        return DiscretePath::new(dt, nodes);
    }
    let t0 = 2.0 * (t_seg + fast_tau + fast_tau * ell.abs() / q_loop.abs());
    Err(Error::HorizonTooShort { t, t0 })
}

/// Closed path at `x` that spends the fraction `q/q̄` of the horizon on the
/// reference loop (reversed for `q < 0`) and the rest resting at the
/// model's anchor point.
pub fn excursion_path(model: &VectorFieldModel, x: Vec2, t: f64, q: f64, m: usize) -> Result<DiscretePath> {
    if !(t > 0.0 && q.is_finite() && x.is_finite()) || m < 4 {
        return Err(Error::InvalidParameter("excursion_path needs T > 0, finite q and M >= 4".into()));
    }
    let dt = t / m as f64;
    let lp = model.reference_loop();
    let period = lp.duration();
    let z = lp.start();
    let rest = model.anchor();
    let rate = path_work(lp, model) / period;
    let frac = if rate.abs() > 1e-12 { q / rate } else { 0.0 };
    let orbit = if frac < 0.0 { lp.reversed() } else { lp.clone() };
    let loop_time = frac.abs() * t;
    let on_loop = loop_time > 1e-12;

    let leg = 1.5;
    let mut d_in = if on_loop && x != z { leg } else { 0.0 };
    let mut d_out = if on_loop || x != rest { leg } else { 0.0 };
    let mut d_ret = if x != rest { leg } else { 0.0 };
    let mut arc = loop_time;
    let fixed = d_in + d_out + d_ret;
    if arc + fixed > t {
        arc = arc.min((t - 0.25 * fixed).max(0.5 * t));
        let s = ((t - arc) / fixed).max(0.0);
        d_in *= s;
        d_out *= s;
        d_ret *= s;
    }
    let steps = |d: f64| if d > 0.0 { ((d / dt).round() as usize).max(1) } else { 0 };
    let (n_in, n_out, n_ret) = (steps(d_in), steps(d_out), steps(d_ret));
    let mut n_arc = if on_loop { ((arc / dt).round() as usize).max(1) } else { 0 };
    let fixed_steps = n_in + n_out + n_ret;
    if fixed_steps >= m {
        return Err(Error::InvalidParameter("horizon too short for an excursion path".into()));
    }
    n_arc = n_arc.min(m - fixed_steps);
    let n_dwell = m - fixed_steps - n_arc;

    let mut nodes = Vec::with_capacity(m + 1);
    nodes.push(x);
    let mut here = x;
    let go = |nodes: &mut Vec<Vec2>, to: Vec2, n: usize, here: &mut Vec2| {
        if n > 0 {
            append(nodes, &segment(*here, to, n));
            *here = to;
        }
    };
    if on_loop {
        go(&mut nodes, z, n_in, &mut here);
        for k in 1..=n_arc {
            let tau = (loop_time * k as f64 / n_arc as f64) % period;
            nodes.push(orbit.at(tau));
        }
        here = *nodes.last().unwrap();
    }
    go(&mut nodes, rest, n_out, &mut here);
    for _ in 0..n_dwell {
        nodes.push(here);
    }
    go(&mut nodes, x, n_ret, &mut here);
    while nodes.len() < m + 1 {
        nodes.push(x);
    }
    let last = nodes.len() - 1;
    nodes[last] = x;
    DiscretePath::new(dt, nodes)
}

/// The zero-noise flow from `x`, closed by a linear correction.
pub fn flow_path(model: &VectorFieldModel, x: Vec2, t: f64, m: usize) -> Result<DiscretePath> {
    if !(t > 0.0) || m == 0 {
        return Err(Error::InvalidParameter("flow_path needs T > 0 and M > 0".into()));
    }
    let dt = t / m as f64;
    let sub = (dt / model.dt_max()).ceil().max(1.0) as usize;
    let h = dt / sub as f64;
    let mut nodes = Vec::with_capacity(m + 1);
    let mut p = x;
    nodes.push(p);
    for _ in 0..m {
        for _ in 0..sub {
            p = rk4_step(model, p, h);
        }
        if !p.is_finite() {
            return Err(Error::IntegratorFailure { step: nodes.len() });
        }
        nodes.push(p);
    }
    let gap = x - p;
    for (k, v) in nodes.iter_mut().enumerate() {
        *v += gap * (k as f64 / m as f64);
    }
    nodes[0] = x;
    nodes[m] = x;
    DiscretePath::new(dt, nodes)
}

fn better(a: &MinimizationResult, b: &MinimizationResult) -> bool {
    match a.action_value.total_cmp(&b.action_value) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.path.arc_length() < b.path.arc_length(),
    }
}

/// Best feasible closed-path result over the given initial paths.
pub fn solve_closed(
    model: &VectorFieldModel,
    x: Vec2,
    t: f64,
    q: f64,
    m: usize,
    inits: &[DiscretePath],
    tol: &Tolerances,
) -> Option<MinimizationResult> {
    let mut best: Option<MinimizationResult> = None;
    for init in inits {
        if let Ok(r) = minimize_constrained(model, x, Endpoint::Closed, t, q, m, init, tol) {
            if r.is_feasible(tol.tol_c) && best.as_ref().is_none_or(|b| better(&r, b)) {
                best = Some(r);
            }
        }
    }
    best
}

/// The standard initial paths for a closed problem.
pub fn standard_inits(model: &VectorFieldModel, x: Vec2, t: f64, q: f64, m: usize) -> Vec<DiscretePath> {
    let mut v = Vec::new();
    if let Ok(p) = feasible_path(model, x, x, t, q, m) {
        v.push(p);
    }
    if let Ok(p) = excursion_path(model, x, t, q, m) {
        v.push(p);
    }
    if let Ok(p) = flow_path(model, x, t, m) {
        v.push(p);
    }
    v
}

fn segments_for(t: f64, m_per_unit_t: f64) -> Result<usize> {
    let m = (t * m_per_unit_t).round();
    if m < 4.0 {
        return Err(Error::InvalidParameter(format!("T = {t} gives fewer than 4 nodes at {m_per_unit_t} per unit time")));
    }
    Ok(m as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    /// Warm-start sweeps after the independent first pass.
    pub refine_passes: usize,
    /// Re-solve each selected horizon at twice the resolution.
    pub halving: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { refine_passes: 1, halving: true }
    }
}

/// `T₀·2^k` for `k = 0 … n−1`.
pub fn geometric_t_grid(t0: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t0 * 2f64.powi(k as i32)).collect()
}

/// `s(q) = min_T S_T(q)/T` over closed paths at `base`.
pub fn s_curve(
    model: &VectorFieldModel,
    q_grid: &[f64],
    t_grid: &[f64],
    m_per_unit_t: f64,
    base: Vec2,
    tol: &Tolerances,
) -> Result<RateCurve> {
    s_curve_with(model, q_grid, t_grid, m_per_unit_t, base, tol, &ScanOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn s_curve_with(
    model: &VectorFieldModel,
    q_grid: &[f64],
    t_grid: &[f64],
    m_per_unit_t: f64,
    base: Vec2,
    tol: &Tolerances,
    opts: &ScanOptions,
) -> Result<RateCurve> {
    if q_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::InvalidParameter("q and T grids must be non-empty".into()));
    }
    if t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("T grid must be positive".into()));
    }
    let ms: Vec<usize> = t_grid.iter().map(|&t| segments_for(t, m_per_unit_t)).collect::<Result<_>>()?;
    let nq = q_grid.len();
    let nt = t_grid.len();
    let cells: Vec<(usize, usize)> = (0..nq).flat_map(|i| (0..nt).map(move |j| (i, j))).collect();

    let mut best: Vec<Option<MinimizationResult>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let inits = standard_inits(model, base, t_grid[j], q_grid[i], ms[j]);
            solve_closed(model, base, t_grid[j], q_grid[i], ms[j], &inits, tol)
        })
        .collect();

    let mirror: Vec<Option<usize>> = q_grid
        .iter()
        .map(|&q| q_grid.iter().position(|&p| (p + q).abs() <= 1e-12 * q.abs().max(1.0)))
        .collect();
    for _ in 0..opts.refine_passes {
        let prev = best.clone();
        best = cells
            .par_iter()
            .enumerate()
            .map(|(c, &(i, j))| {
                let mut inits = Vec::new();
                if i > 0 {
                    if let Some(r) = &prev[c - nt] {
                        inits.push(r.path.clone());
                    }
                }
                if i + 1 < nq {
                    if let Some(r) = &prev[c + nt] {
                        inits.push(r.path.clone());
                    }
                }
                if let Some(k) = mirror[i] {
                    if k != i {
                        if let Some(r) = &prev[k * nt + j] {
                            inits.push(r.path.reversed());
                        }
                    }
                }
                let fresh = solve_closed(model, base, t_grid[j], q_grid[i], ms[j], &inits, tol);
                match (prev[c].clone(), fresh) {
                    (Some(a), Some(b)) => Some(if better(&b, &a) { b } else { a }),
                    (a, b) => a.or(b),
                }
            })
            .collect();
    }

    let picks: Vec<Option<(usize, MinimizationResult)>> = (0..nq)
        .map(|i| {
            let mut pick: Option<(usize, MinimizationResult)> = None;
            for j in 0..nt {
                if let Some(r) = &best[i * nt + j] {
                    let take = match &pick {
                        None => true,
                        Some((pj, p)) => match r.rate().total_cmp(&p.rate()) {
                            Ordering::Less => true,
                            Ordering::Greater => false,
                            Ordering::Equal => match t_grid[j].total_cmp(&t_grid[*pj]) {
                                Ordering::Less => true,
                                Ordering::Greater => false,
                                Ordering::Equal => r.path.arc_length() < p.path.arc_length(),
                            },
                        },
                    };
                    if take {
                        pick = Some((j, r.clone()));
                    }
                }
            }
            pick
        })
        .collect();

    let halving: Vec<Option<f64>> = if opts.halving {
        picks
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let (j, r) = p.as_ref()?;
                let fine = r.path.refine();
                let res = minimize_constrained(model, base, Endpoint::Closed, t_grid[*j], q_grid[i], 2 * ms[*j], &fine, tol).ok()?;
                res.is_feasible(tol.tol_c).then(|| (res.rate() - r.rate()).abs())
            })
            .collect()
    } else {
        vec![None; nq]
    };

    let mut points = Vec::with_capacity(nq);
    let mut at_largest = 0;
    for (i, p) in picks.into_iter().enumerate() {
        let q = q_grid[i];
        match p {
            Some((j, r)) => {
                if j + 1 == nt && nt > 1 {
                    at_largest += 1;
                }
                points.push(RatePoint {
                    q,
                    value: r.rate(),
                    boundary_active: false,
                    argmin_t: Some(t_grid[j]),
                    action: Some(r.action_value),
                    residual: Some(r.constraint_residual),
                    status: Some(r.status.as_str().to_string()),
                    halving_delta: halving[i],
                });
            }
            None => points.push(RatePoint {
                q,
                value: f64::NAN,
                boundary_active: false,
                argmin_t: None,
                action: None,
                residual: None,
                status: Some("failed".into()),
                halving_delta: None,
            }),
        }
    }
    let mut curve = RateCurve::new(points, Provenance::Variational)?;
    curve.metadata.insert("model".into(), model.name().into());
    curve.metadata.insert("base_point".into(), format!("{} {}", base.x, base.y));
    curve.metadata.insert("T_grid".into(), join(t_grid));
    curve.metadata.insert("M_per_unit_T".into(), m_per_unit_t.to_string());
    curve.metadata.insert("tol_c".into(), tol.tol_c.to_string());
    curve.metadata.insert("tol_g".into(), tol.tol_g.to_string());
    curve.metadata.insert("argmin_at_largest_T".into(), at_largest.to_string());
    Ok(curve)
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub q: f64,
    pub t1: f64,
    pub t2: f64,
    pub s_t1: f64,
    pub s_t2: f64,
    pub s_t12: f64,
    /// `S_{T1} + S_{T2} − S_{T1+T2}`.
    pub slack: f64,
}

/// Solves the closed problems at `T1`, `T2` and `T1 + T2`, seeding the last
/// with the concatenation of the first two minimisers.
#[allow(clippy::too_many_arguments)]
pub fn subadditivity_check(
    model: &VectorFieldModel,
    x: Vec2,
    q: f64,
    t1: f64,
    t2: f64,
    m_per_unit_t: f64,
    tol: &Tolerances,
) -> Result<SubadditivityReport> {
    let solve = |t: f64, extra: Option<DiscretePath>| -> Result<MinimizationResult> {
        let m = segments_for(t, m_per_unit_t)?;
        let mut inits = standard_inits(model, x, t, q, m);
        if let Some(p) = extra {
            inits.insert(0, p);
        }
        solve_closed(model, x, t, q, m, &inits, tol)
            .ok_or_else(|| Error::InvalidParameter(format!("no feasible path found at T = {t}, q = {q}")))
    };
    let (m1, m2) = (segments_for(t1, m_per_unit_t)?, segments_for(t2, m_per_unit_t)?);
    if ((t1 / m1 as f64 - t2 / m2 as f64) / (t1 / m1 as f64)).abs() > 1e-12 {
        return Err(Error::InvalidParameter("T1 and T2 must give the same time step".into()));
    }
    let r1 = solve(t1, None)?;
    let r2 = solve(t2, None)?;
    let joined = r1.path.concat(&r2.path.with_dt(r1.path.dt())?)?;
    let joined = joined.with_dt((t1 + t2) / joined.segments() as f64)?;
    let r12 = solve(t1 + t2, Some(joined))?;
    Ok(SubadditivityReport {
        q,
        t1,
        t2,
        s_t1: r1.action_value,
        s_t2: r2.action_value,
        s_t12: r12.action_value,
        slack: r1.action_value + r2.action_value - r12.action_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, ModelParams};

    fn circle() -> VectorFieldModel {
        builtin("circle_double_well", &ModelParams::default()).unwrap()
    }

    #[test]
    fn constant_path_at_rest_point_costs_nothing() {
        let m = builtin("single_well_rotational", &ModelParams::default()).unwrap();
        let p = DiscretePath::constant(Vec2::ZERO, 5.0, 50).unwrap();
        assert!(action_value(&p, &m).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_differences() {
        let m = circle();
        let nodes: Vec<Vec2> = (0..=20).map(|k| {
            let s = k as f64 / 20.0;
            Vec2::new(1.1 * (6.0 * s).cos() + 0.1 * s, -0.9 * (6.0 * s).sin())
        }).collect();
        let p = DiscretePath::new(0.2, nodes).unwrap();
        let g = grad_action(&p, &m);
        let h = 1e-6;
        for j in [0, 3, 10, 20] {
            for c in 0..2 {
                let mut a = p.clone();
                let mut b = p.clone();
                if c == 0 { a.nodes_mut()[j].x += h; b.nodes_mut()[j].x -= h; } else { a.nodes_mut()[j].y += h; b.nodes_mut()[j].y -= h; }
                let fd = (action_value(&a, &m) - action_value(&b, &m)) / (2.0 * h);
                let an = if c == 0 { g[j].x } else { g[j].y };
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "node {j}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn feasible_path_hits_the_budget() {
        let m = circle();
        for (t, q) in [(10.0, 1.0), (20.0, -1.5), (40.0, 0.0), (12.0, 2.0)] {
            let p = feasible_path(&m, Vec2::new(0.3, 0.2), Vec2::new(-0.5, 0.1), t, q, (t * 16.0) as usize).unwrap();
            assert_eq!(p.segments(), (t * 16.0) as usize);
            let l = path_work(&p, &m) / t;
            assert!((l - q).abs() <= 1e-10, "T={t} q={q} L={l}");
        }
    }

    #[test]
    fn feasible_path_reports_threshold() {
        let m = circle();
        match feasible_path(&m, Vec2::ZERO, Vec2::ZERO, 1.0, 1.0, 64) {
            Err(Error::HorizonTooShort { t0, .. }) => assert!(t0 > 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn excursion_and_flow_paths_are_closed() {
        let m = circle();
        for x in [Vec2::new(1.0, 0.0), Vec2::ZERO] {
            for q in [-2.0, -0.7, 0.0, 1.3, 2.0] {
                let p = excursion_path(&m, x, 25.0, q, 400).unwrap();
                assert!(p.is_closed() && p.start() == x && p.segments() == 400);
            }
            let f = flow_path(&m, x, 12.0, 192).unwrap();
            assert!(f.is_closed() && f.segments() == 192);
        }
    }
}
