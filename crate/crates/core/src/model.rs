//! Diffusion models `c = −½∇V + b` with radial potentials and rotational
//! non-conservative parts.

use crate::error::{Error, Result};
use crate::geom::{Mat2, Region, Vec2};
use crate::path::DiscretePath;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Radial potential `U(s) = P(s) / (1 + (s/S)²)` in the variable `s = |x|²`.
///
/// Without saturation the denominator is dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialProfile {
    poly: Vec<f64>,
    saturation: Option<f64>,
}

impl PotentialProfile {
    pub fn new(poly: Vec<f64>, saturation: Option<f64>) -> Result<Self> {
        if poly.is_empty() || poly.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("potential coefficients must be finite and non-empty".into()));
        }
        if let Some(s) = saturation {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("saturation must be positive, got {s}")));
            }
        }
        Ok(Self { poly, saturation })
    }

    /// `(U, U′, U″)` at `s`.
    #[inline]
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let (n, dn, ddn) = poly3(&self.poly, s);
        match self.saturation {
            None => (n, dn, ddn),
            Some(sat) => {
                let k = 1.0 / (sat * sat);
                let d = 1.0 + k * s * s;
                let dd = 2.0 * k * s;
                let ddd = 2.0 * k;
                let inv = 1.0 / d;
                let u = n * inv;
                let num1 = dn * d - n * dd;
                let du = num1 * inv * inv;
                let ddu = (ddn * d - n * ddd) * inv * inv - 2.0 * dd * num1 * inv * inv * inv;
                (u, du, ddu)
            }
        }
    }
}

/// Radial amplitude `A(r) = P(r)·(1 − ((r − R0)/w)²)⁴` on `|r − R0| < w`, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeProfile {
    poly: Vec<f64>,
    center: f64,
    half_width: f64,
}

impl AmplitudeProfile {
    pub fn new(poly: Vec<f64>, center: f64, half_width: f64) -> Result<Self> {
        if poly.is_empty() || poly.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("amplitude coefficients must be finite and non-empty".into()));
        }
        if !(half_width > 0.0 && half_width < center) {
            return Err(Error::InvalidParameter(format!(
                "bump half-width {half_width} must lie in (0, R0 = {center}) so A is supported away from 0"
            )));
        }
        Ok(Self { poly, center, half_width })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    /// `(A, A′)` at radius `r`.
    #[inline]
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let u = (r - self.center) / self.half_width;
        if u.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let one = 1.0 - u * u;
        let one3 = one * one * one;
        let bump = one3 * one;
        let dbump = -8.0 * u * one3 / self.half_width;
        let (p, dp, _) = poly3(&self.poly, r);
        (p * bump, dp * bump + p * dbump)
    }
}

/// Value and first two derivatives of a polynomial with ascending coefficients.
#[inline]
fn poly3(c: &[f64], x: f64) -> (f64, f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    let mut ddp = 0.0;
    for &a in c.iter().rev() {
        ddp = ddp * x + 2.0 * dp;
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp, ddp)
}

/// Everything the solvers need at one point.
#[derive(Clone, Copy, Debug)]
pub struct FieldEval {
    pub v: f64,
    pub grad_v: Vec2,
    pub hess_v: Mat2,
    pub lap_v: f64,
    pub b: Vec2,
    pub jac_b: Mat2,
    pub div_b: f64,
}

impl FieldEval {
    #[inline]
    pub fn drift(&self) -> Vec2 {
        self.b - self.grad_v * 0.5
    }

    #[inline]
    pub fn jac_drift(&self) -> Mat2 {
        self.jac_b + self.hess_v.scale(-0.5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    CircleDoubleWell,
    SingleWellRotational,
    PureGradient,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::CircleDoubleWell => "circle_double_well",
            ModelKind::SingleWellRotational => "single_well_rotational",
            ModelKind::PureGradient => "pure_gradient",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle_double_well" => Ok(ModelKind::CircleDoubleWell),
            "single_well_rotational" => Ok(ModelKind::SingleWellRotational),
            "pure_gradient" => Ok(ModelKind::PureGradient),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// Parameters accepted by [`builtin`]. Missing entries take the defaults
/// listed on each field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Orbit radius `R0` (1).
    pub r0: Option<f64>,
    /// Rotation amplitude `A(R0)` (1).
    pub a0: Option<f64>,
    /// Height scale `k` of the double-well profile `k·s(s − R0²)²/R0⁴` (0.2).
    pub well_scale: Option<f64>,
    /// Saturation level in units of `R0²`; beyond it the potential grows quadratically (4).
    pub saturation: Option<f64>,
    /// Half-width of the amplitude bump around `R0` (`R0/2`).
    pub bump_half_width: Option<f64>,
    /// Custom potential polynomial in `s = |x|²`, ascending powers.
    pub u_poly: Option<Vec<f64>>,
    /// Custom amplitude polynomial in `r`, multiplied by the bump.
    pub a_poly: Option<Vec<f64>>,
    /// Quadratic confinement `κ` in `V = κ|x|²` for the single-well models (1).
    pub confinement: Option<f64>,
    /// Adds `κ∇V` to `b`; violates orthogonality on purpose (0).
    pub inject_gradient: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct VectorFieldModel {
    name: String,
    kind: ModelKind,
    r0: f64,
    potential: PotentialProfile,
    rotation: Option<AmplitudeProfile>,
    injection: f64,
    b_sup_sq: f64,
    reference_loop: DiscretePath,
    loop_period: f64,
    anchor: Vec2,
    sampling_box: Region,
    lipschitz: f64,
}

const LOOP_SEGMENTS: usize = 512;

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Builds one of the built-in models.
pub fn builtin(name: &str, params: &ModelParams) -> Result<VectorFieldModel> {
    let kind: ModelKind = name.parse()?;
    let r0 = positive("r0", params.r0.unwrap_or(1.0))?;
    let s0 = r0 * r0;
    let injection = params.inject_gradient.unwrap_or(0.0);
    if !injection.is_finite() {
        return Err(Error::InvalidParameter("inject_gradient must be finite".into()));
    }

    let potential = match kind {
        ModelKind::CircleDoubleWell => {
            let sat = positive("saturation", params.saturation.unwrap_or(4.0))? * s0;
            let poly = match &params.u_poly {
                Some(p) => p.clone(),
                None => {
                    let k = positive("well_scale", params.well_scale.unwrap_or(0.2))? / (s0 * s0);
                    // k·s·(s − s0)²
                    vec![0.0, k * s0 * s0, -2.0 * k * s0, k]
                }
            };
            let prof = PotentialProfile::new(poly, Some(sat))?;
            let (_, du, ddu) = prof.eval(s0);
            let (_, du0, _) = prof.eval(0.0);
            if du.abs() > 1e-9 * (1.0 + ddu.abs()) || ddu <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "potential profile must have a strict radial minimum at R0 = {r0} (U′ = {du:e}, U″ = {ddu:e})"
                )));
            }
            if du0 <= 0.0 {
                return Err(Error::InvalidParameter("potential profile must have a minimum at the origin".into()));
            }
            prof
        }
        ModelKind::SingleWellRotational | ModelKind::PureGradient => {
            let kappa = positive("confinement", params.confinement.unwrap_or(1.0))?;
            match &params.u_poly {
                Some(p) => PotentialProfile::new(p.clone(), params.saturation.map(|s| s * s0))?,
                None => PotentialProfile::new(vec![0.0, kappa], None)?,
            }
        }
    };

    let rotation = match kind {
        ModelKind::PureGradient => None,
        _ => {
            let w = positive("bump_half_width", params.bump_half_width.unwrap_or(0.5 * r0))?;
            let poly = match &params.a_poly {
                Some(p) => p.clone(),
                None => vec![params.a0.unwrap_or(1.0)],
            };
            let amp = AmplitudeProfile::new(poly, r0, w)?;
            let (a_r0, _) = amp.eval(r0);
            if !(a_r0 > 0.0) {
                return Err(Error::InvalidParameter(format!("A(R0) must be positive, got {a_r0}")));
            }
            Some(amp)
        }
    };

    VectorFieldModel::assemble(kind, r0, potential, rotation, injection)
}

impl VectorFieldModel {
    fn assemble(
        kind: ModelKind,
        r0: f64,
        potential: PotentialProfile,
        rotation: Option<AmplitudeProfile>,
        injection: f64,
    ) -> Result<Self> {
        let omega = rotation.as_ref().map(|a| a.eval(r0).0).unwrap_or(1.0);
        let period = 2.0 * PI / omega;
        let mut reference_loop = DiscretePath::from_fn(period, LOOP_SEGMENTS, |s| {
            let th = 2.0 * PI * s;
            Vec2::new(r0 * th.cos(), -r0 * th.sin())
        })?;
        let first = reference_loop.start();
        let last = reference_loop.segments();
        reference_loop.nodes_mut()[last] = first;

        let b_sup_sq = if injection != 0.0 {
            f64::INFINITY
        } else {
            match &rotation {
                None => 0.0,
                Some(a) => certify_sup_sq(a),
            }
        };
        let sampling_box = Region::square(3.0 * r0);
        let mut model = VectorFieldModel {
            name: kind.name().to_string(),
            kind,
            r0,
            potential,
            rotation,
            injection,
            b_sup_sq,
            reference_loop,
            loop_period: period,
            anchor: Vec2::ZERO,
            sampling_box,
            lipschitz: 0.0,
        };
        let mut lip: f64 = 0.0;
        for x in sampling_box.lattice_n(61) {
            let e = model.eval(x);
            lip = lip.max(e.jac_drift().spectral_norm());
        }
        model.lipschitz = lip;
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Spatial dimension; always 2.
    pub fn dim(&self) -> usize {
        2
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Certified `B = sup |b|²` (infinite when a gradient is injected).
    pub fn b_sup_sq(&self) -> f64 {
        self.b_sup_sq
    }

    /// Closed clockwise orbit of radius `R0`.
    pub fn reference_loop(&self) -> &DiscretePath {
        &self.reference_loop
    }

    pub fn loop_period(&self) -> f64 {
        self.loop_period
    }

    /// Stable rest point at the origin.
    pub fn anchor(&self) -> Vec2 {
        self.anchor
    }

    pub fn sampling_box(&self) -> Region {
        self.sampling_box
    }

    /// Largest spectral norm of the drift Jacobian on the sampling box.
    pub fn drift_lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Largest admissible explicit time step, `0.1 / Lip(c)`.
    pub fn dt_max(&self) -> f64 {
        0.1 / self.lipschitz.max(1e-12)
    }

    /// Angular speed `ω = A(R0)` of the orbit.
    pub fn orbit_angular_speed(&self) -> f64 {
        self.rotation.as_ref().map(|a| a.eval(self.r0).0).unwrap_or(0.0)
    }

    /// Power dissipated along the orbit, `q̄ = 2A(R0)²R0²`.
    pub fn orbit_power(&self) -> f64 {
        let w = self.orbit_angular_speed();
        2.0 * w * w * self.r0 * self.r0
    }

    pub fn is_rotational(&self) -> bool {
        self.rotation.is_some()
    }

    pub fn injection(&self) -> f64 {
        self.injection
    }

    #[inline]
    pub fn eval(&self, x: Vec2) -> FieldEval {
        let s = x.norm_sq();
        let (u, du, ddu) = self.potential.eval(s);
        let grad_v = x * (2.0 * du);
        let hess_v = Mat2::new(
            2.0 * du + 4.0 * ddu * x.x * x.x,
            4.0 * ddu * x.x * x.y,
            4.0 * ddu * x.x * x.y,
            2.0 * du + 4.0 * ddu * x.y * x.y,
        );
        let lap_v = 4.0 * du + 4.0 * s * ddu;
        let (mut b, mut jac_b, mut div_b) = (Vec2::ZERO, Mat2::ZERO, 0.0);
        if let Some(amp) = &self.rotation {
            let r = s.sqrt();
            if r > 0.0 {
                let (a, da) = amp.eval(r);
                if a != 0.0 || da != 0.0 {
                    b = x.perp_cw() * a;
                    let (ux, uy) = (x.x / r, x.y / r);
                    jac_b = Mat2::new(
                        da * ux * x.y,
                        da * uy * x.y + a,
                        -da * ux * x.x - a,
                        -da * uy * x.x,
                    );
                }
            }
        }
        if self.injection != 0.0 {
            b += grad_v * self.injection;
            jac_b = jac_b + hess_v.scale(self.injection);
            div_b += self.injection * lap_v;
        }
        FieldEval { v: u, grad_v, hess_v, lap_v, b, jac_b, div_b }
    }

    #[inline]
    pub fn potential(&self, x: Vec2) -> f64 {
        self.potential.eval(x.norm_sq()).0
    }

    #[inline]
    pub fn grad_potential(&self, x: Vec2) -> Vec2 {
        x * (2.0 * self.potential.eval(x.norm_sq()).1)
    }

    #[inline]
    pub fn nonconservative(&self, x: Vec2) -> Vec2 {
        let mut b = Vec2::ZERO;
        if let Some(amp) = &self.rotation {
            let (a, _) = amp.eval(x.norm());
            if a != 0.0 {
                b = x.perp_cw() * a;
            }
        }
        if self.injection != 0.0 {
            b += self.grad_potential(x) * self.injection;
        }
        b
    }

    #[inline]
    pub fn div_nonconservative(&self, x: Vec2) -> f64 {
        if self.injection != 0.0 {
            self.injection * self.eval(x).lap_v
        } else {
            0.0
        }
    }

    /// `c(x) = −½∇V(x) + b(x)`.
    #[inline]
    pub fn drift(&self, x: Vec2) -> Vec2 {
        self.nonconservative(x) - self.grad_potential(x) * 0.5
    }

    /// Work `∮⟨b, dx⟩` of a closed path by the midpoint rule.
    pub fn circulation(&self, path: &DiscretePath) -> f64 {
        path.nodes()
            .windows(2)
            .map(|w| self.nonconservative(w[0].midpoint(w[1])).dot(w[1] - w[0]))
            .sum()
    }
}

/// `eval_drift` in function form.
pub fn eval_drift(model: &VectorFieldModel, x: Vec2) -> Vec2 {
    model.drift(x)
}

/// Upper bound for `sup_r A(r)²r²` from a fine radial grid plus the largest
/// increment between neighbouring samples.
fn certify_sup_sq(a: &AmplitudeProfile) -> f64 {
    let (lo, hi) = a.support();
    let n = 20_000;
    let mut best: f64 = 0.0;
    let mut jump: f64 = 0.0;
    let mut prev = 0.0;
    for k in 0..=n {
        let r = lo + (hi - lo) * k as f64 / n as f64;
        let val = {
            let (amp, _) = a.eval(r);
            amp * amp * r * r
        };
        best = best.max(val);
        if k > 0 {
            jump = jump.max((val - prev).abs());
        }
        prev = val;
    }
    best + jump
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub worst: f64,
    pub location: Option<[f64; 2]>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    /// `∮⟨b, dx⟩` around the reference loop.
    pub circulation: f64,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Samples the structural assumptions on a lattice over `region`.
///
/// Violations are reported, only non-finite evaluations abort.
pub fn check_assumptions(
    model: &VectorFieldModel,
    region: Region,
    lattice_step: f64,
    tol_orth: f64,
) -> Result<AssumptionReport> {
    if region.is_empty() {
        return Err(Error::InvalidParameter("assumption box is empty".into()));
    }
    if !(lattice_step > 0.0) {
        return Err(Error::InvalidParameter("lattice step must be positive".into()));
    }
    let pts = region.lattice(lattice_step);
    let h = 1e-4;

    let mut orth = (0.0f64, None);
    let mut bound = (0.0f64, None);
    let mut grad_fd = (0.0f64, None);
    let mut div_fd = (0.0f64, None);
    for &x in &pts {
        let e = model.eval(x);
        if !(e.v.is_finite() && e.grad_v.is_finite() && e.b.is_finite() && e.div_b.is_finite()) {
            return Err(Error::NonFiniteField { x: x.x, y: x.y });
        }
        let o = e.grad_v.dot(e.b).abs();
        if o > orth.0 {
            orth = (o, Some(x));
        }
        let bb = e.b.norm_sq();
        if bb >= bound.0 {
            bound = (bb, Some(x));
        }
        let ex = Vec2::new(h, 0.0);
        let ey = Vec2::new(0.0, h);
        let fd = Vec2::new(
            (model.potential(x + ex) - model.potential(x - ex)) / (2.0 * h),
            (model.potential(x + ey) - model.potential(x - ey)) / (2.0 * h),
        );
        let rel = (fd - e.grad_v).norm() / e.grad_v.norm().max(1.0);
        if rel > grad_fd.0 {
            grad_fd = (rel, Some(x));
        }
        let fdiv = (model.nonconservative(x + ex).x - model.nonconservative(x - ex).x
            + model.nonconservative(x + ey).y
            - model.nonconservative(x - ey).y)
            / (2.0 * h);
        let scale = e.jac_b.spectral_norm().max(1.0);
        let rd = (fdiv - e.div_b).abs() / scale;
        if rd > div_fd.0 {
            div_fd = (rd, Some(x));
        }
    }

    let mut checks = Vec::new();
    let loc = |p: Option<Vec2>| p.map(<[f64; 2]>::from);
    checks.push(AssumptionCheck {
        name: "orthogonality",
        passed: orth.0 <= tol_orth,
        worst: orth.0,
        location: loc(orth.1),
        detail: format!("max |<grad V, b>| = {:.3e} (tolerance {:.1e})", orth.0, tol_orth),
    });
    let bounded = model.b_sup_sq.is_finite() && bound.0 <= model.b_sup_sq;
    checks.push(AssumptionCheck {
        name: "boundedness",
        passed: bounded,
        worst: bound.0,
        location: loc(bound.1),
        detail: format!("max |b|^2 = {:.6} against certified B = {:.6}", bound.0, model.b_sup_sq),
    });

    // Coercivity: the radial profile min_θ <∇V(x), x>/|x| must increase over the
    // outer half of the box and clear 2(1 + √B) at its edge.
    let r_edge = region.hi.x.abs().min(region.hi.y.abs()).min(region.lo.x.abs()).min(region.lo.y.abs());
    let rays = 16;
    let nr = 40;
    let mut profile = Vec::with_capacity(nr + 1);
    for k in 0..=nr {
        let r = r_edge * (0.5 + 0.5 * k as f64 / nr as f64);
        let mut m = f64::INFINITY;
        for j in 0..rays {
            let th = 2.0 * PI * j as f64 / rays as f64;
            let x = Vec2::new(r * th.cos(), r * th.sin());
            m = m.min(model.grad_potential(x).dot(x) / r);
        }
        profile.push((r, m));
    }
    let mut worst_drop = 0.0f64;
    let mut drop_at = None;
    for w in profile.windows(2) {
        let d = w[0].1 - w[1].1;
        if d > worst_drop {
            worst_drop = d;
            drop_at = Some(Vec2::new(w[1].0, 0.0));
        }
    }
    let edge = profile.last().map(|p| p.1).unwrap_or(0.0);
    let need = 2.0 * (1.0 + model.b_sup_sq.sqrt());
    let coercive = worst_drop <= 1e-12 * edge.abs().max(1.0) && edge >= need;
    checks.push(AssumptionCheck {
        name: "coercivity",
        passed: coercive,
        worst: edge,
        location: loc(drop_at),
        detail: format!(
            "radial profile min <grad V, x>/|x| = {edge:.3} at r = {r_edge:.3} (needs >= {need:.3}), largest decrease {worst_drop:.2e}"
        ),
    });
    checks.push(AssumptionCheck {
        name: "gradient_fd",
        passed: grad_fd.0 <= 1e-6,
        worst: grad_fd.0,
        location: loc(grad_fd.1),
        detail: format!("max relative error of grad V against central differences = {:.2e}", grad_fd.0),
    });
    checks.push(AssumptionCheck {
        name: "divergence_fd",
        passed: div_fd.0 <= 1e-6,
        worst: div_fd.0,
        location: loc(div_fd.1),
        detail: format!("max scaled error of div b against central differences = {:.2e}", div_fd.0),
    });

    let circulation = model.circulation(&model.reference_loop);
    let mut best_circ = circulation.abs();
    for scale in [0.5, 0.75, 1.25, 1.5] {
        let r = scale * model.r0;
        let lp = DiscretePath::from_fn(1.0, 256, |s| {
            let th = 2.0 * PI * s;
            Vec2::new(r * th.cos(), -r * th.sin())
        })?;
        best_circ = best_circ.max(model.circulation(&lp).abs());
    }
    checks.push(AssumptionCheck {
        name: "non_conservative",
        passed: best_circ > 1e-10,
        worst: best_circ,
        location: None,
        detail: format!("reference loop circulation = {circulation:.6e}, largest sampled |circulation| = {best_circ:.3e}"),
    });

    Ok(AssumptionReport { checks, circulation })
}
