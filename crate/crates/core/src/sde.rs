//! Euler–Maruyama simulation of `dX = c(X) dt + √ε dβ`, the RK4 zero-noise
//! flow, and hitting times of a centred disc.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::model::VectorFieldModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    Rk4,
}

/// Identifies the random stream a trajectory was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub stream: u64,
}

impl SeedRecord {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        stream_rng(self.master, self.stream)
    }
}

/// Independent stream `stream` of the generator keyed by `master`.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub epsilon: f64,
    pub dt: f64,
    pub states: Vec<Vec2>,
    pub seed: Option<SeedRecord>,
    pub scheme: Scheme,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn last(&self) -> Vec2 {
        self.states[self.states.len() - 1]
    }

    /// States in reverse order; used for antisymmetry checks.
    pub fn reversed(&self) -> Trajectory {
        let mut t = self.clone();
        t.states.reverse();
        t
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(move |k| k as f64 * self.dt)
    }
}

/// Number of steps `T/dt`, which must be an integer.
pub fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("T must be positive, got {t}")));
    }
    let k = (t / dt).round();
    if k < 1.0 || (k * dt - t).abs() > 1e-9 * t {
        return Err(Error::InvalidParameter(format!("T = {t} is not an integer multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

/// Rejects steps above the explicit-scheme bound `0.1/Lip(c)`.
pub fn check_step(model: &VectorFieldModel, dt: f64) -> Result<()> {
    let dt_max = model.dt_max();
    if dt > dt_max * (1.0 + 1e-9) {
        return Err(Error::UnstableStep { dt, dt_max });
    }
    Ok(())
}

fn check_point(x0: Vec2) -> Result<()> {
    if x0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter("initial point must be finite".into()))
    }
}

#[inline]
pub(crate) fn normal_pair<R: Rng>(rng: &mut R) -> Vec2 {
    Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Euler–Maruyama path with `T/dt` steps drawn from `seed`'s stream.
pub fn simulate(
    model: &VectorFieldModel,
    epsilon: f64,
    x0: Vec2,
    t: f64,
    dt: f64,
    seed: SeedRecord,
) -> Result<Trajectory> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {epsilon}")));
    }
    check_point(x0)?;
    let n = step_count(t, dt)?;
    check_step(model, dt)?;
    let mut rng = seed.rng();
    let sq = (epsilon * dt).sqrt();
    let mut states = Vec::with_capacity(n + 1);
    let mut x = x0;
    states.push(x);
    for k in 0..n {
        x = x + model.drift(x) * dt + normal_pair(&mut rng) * sq;
        if !x.is_finite() {
            return Err(Error::IntegratorFailure { step: k + 1 });
        }
        states.push(x);
    }
    Ok(Trajectory { epsilon, dt, states, seed: Some(seed), scheme: Scheme::EulerMaruyama })
}

/// Euler–Maruyama driven by supplied standard normal pairs, one per step.
pub fn simulate_with_normals(
    model: &VectorFieldModel,
    epsilon: f64,
    x0: Vec2,
    dt: f64,
    normals: &[Vec2],
) -> Result<Trajectory> {
    check_point(x0)?;
    check_step(model, dt)?;
    let sq = (epsilon * dt).sqrt();
    let mut states = Vec::with_capacity(normals.len() + 1);
    let mut x = x0;
    states.push(x);
    for (k, g) in normals.iter().enumerate() {
        x = x + model.drift(x) * dt + *g * sq;
        if !x.is_finite() {
            return Err(Error::IntegratorFailure { step: k + 1 });
        }
        states.push(x);
    }
    Ok(Trajectory { epsilon, dt, states, seed: None, scheme: Scheme::EulerMaruyama })
}

#[inline]
pub fn rk4_step(model: &VectorFieldModel, x: Vec2, dt: f64) -> Vec2 {
    let k1 = model.drift(x);
    let k2 = model.drift(x + k1 * (0.5 * dt));
    let k3 = model.drift(x + k2 * (0.5 * dt));
    let k4 = model.drift(x + k3 * dt);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Classical RK4 solution of `ẋ = c(x)`.
pub fn flow(model: &VectorFieldModel, x0: Vec2, t: f64, dt: f64) -> Result<Trajectory> {
    check_point(x0)?;
    let n = step_count(t, dt)?;
    check_step(model, dt)?;
    let mut states = Vec::with_capacity(n + 1);
    let mut x = x0;
    states.push(x);
    for k in 0..n {
        x = rk4_step(model, x, dt);
        if !x.is_finite() {
            return Err(Error::IntegratorFailure { step: k + 1 });
        }
        states.push(x);
    }
    Ok(Trajectory { epsilon: 0.0, dt, states, seed: None, scheme: Scheme::Rk4 })
}

/// First time the flow from `y` enters `|x| ≤ k_radius`, interpolated
/// linearly in `|x|` between steps; `None` if not reached by `t_max`.
pub fn hitting_time(
    model: &VectorFieldModel,
    y: Vec2,
    k_radius: f64,
    dt: f64,
    t_max: f64,
) -> Result<Option<f64>> {
    check_point(y)?;
    if !(k_radius > 0.0) {
        return Err(Error::InvalidParameter("K radius must be positive".into()));
    }
    if !(dt > 0.0 && t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParameter("dt and T_max must be positive".into()));
    }
    check_step(model, dt)?;
    let mut r = y.norm();
    if r <= k_radius {
        return Ok(Some(0.0));
    }
    let mut x = y;
    let mut t = 0.0;
    let mut k = 0usize;
    while t < t_max {
        let nx = rk4_step(model, x, dt);
        k += 1;
        if !nx.is_finite() {
            return Err(Error::IntegratorFailure { step: k });
        }
        let nr = nx.norm();
        if nr <= k_radius {
            return Ok(Some(t + dt * (r - k_radius) / (r - nr)));
        }
        x = nx;
        r = nr;
        t = k as f64 * dt;
    }
    Ok(None)
}

/// Smallest `R` such that `⟨∇V(x), x⟩/(2|x|) − sup|b| ≥ 1` on every sampled
/// circle `|x| = r ≥ R`.
pub fn default_k_radius(model: &VectorFieldModel) -> Result<f64> {
    let sup_b = model.b_sup_sq().sqrt();
    if !sup_b.is_finite() {
        return Err(Error::InvalidParameter("K radius needs a bounded non-conservative field".into()));
    }
    let step = 0.005 * model.r0();
    let n = 20_000;
    let rays = 32;
    let mut last_fail = 0usize;
    for k in 1..=n {
        let r = k as f64 * step;
        let mut m = f64::INFINITY;
        for j in 0..rays {
            let th = 2.0 * PI * j as f64 / rays as f64;
            let x = Vec2::new(r * th.cos(), r * th.sin());
            m = m.min(model.grad_potential(x).dot(x) / (2.0 * r));
        }
        if m - sup_b < 1.0 {
            last_fail = k;
        }
    }
    if last_fail == n {
        return Err(Error::InvalidParameter("potential is not coercive enough for a K radius".into()));
    }
    Ok((last_fail + 1) as f64 * step)
}

/// Smallest eigenvalue of `∇²V` at the model's rest point.
pub fn min_curvature(model: &VectorFieldModel) -> f64 {
    let h = model.eval(model.anchor()).hess_v.m;
    let tr = h[0][0] + h[1][1];
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())
}

/// Heuristic burn-in `50 / min-curvature`.
pub fn default_burn_in(model: &VectorFieldModel) -> f64 {
    50.0 / min_curvature(model).max(1e-3)
}

/// Heuristic spacing between retained stationary samples, `5 / min-curvature`.
pub fn default_spacing(model: &VectorFieldModel) -> f64 {
    5.0 / min_curvature(model).max(1e-3)
}

/// Points taken every `spacing_t` after `burn_in_t` from one long
/// Euler–Maruyama run started at the model's rest point.
pub fn sample_stationary(
    model: &VectorFieldModel,
    epsilon: f64,
    burn_in_t: f64,
    n_samples: usize,
    spacing_t: f64,
    dt: f64,
    seed: SeedRecord,
) -> Result<Vec<Vec2>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("stationary sampling needs epsilon > 0".into()));
    }
    let burn = step_count(burn_in_t, dt)?;
    let gap = step_count(spacing_t, dt)?;
    check_step(model, dt)?;
    let mut rng = seed.rng();
    let sq = (epsilon * dt).sqrt();
    let mut x = model.anchor();
    let mut out = Vec::with_capacity(n_samples);
    let mut k = 0usize;
    let mut advance = |x: &mut Vec2, steps: usize, rng: &mut ChaCha8Rng| -> Result<()> {
        for _ in 0..steps {
            *x = *x + model.drift(*x) * dt + normal_pair(rng) * sq;
            k += 1;
            if !x.is_finite() {
                return Err(Error::IntegratorFailure { step: k });
            }
        }
        Ok(())
    };
    advance(&mut x, burn, &mut rng)?;
    for _ in 0..n_samples {
        advance(&mut x, gap, &mut rng)?;
        out.push(x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, ModelParams};

    fn pg() -> VectorFieldModel {
        builtin("pure_gradient", &ModelParams::default()).unwrap()
    }

    #[test]
    fn step_count_requires_integrality() {
        assert_eq!(step_count(1.0, 0.01).unwrap(), 100);
        assert!(step_count(1.0, 0.03).is_err());
        assert!(step_count(-1.0, 0.1).is_err());
    }

    #[test]
    fn zero_noise_euler_is_geometric() {
        let m = pg();
        let tr = simulate(&m, 0.0, Vec2::new(1.0, 0.0), 1.0, 0.05, SeedRecord::new(1, 0)).unwrap();
        for (k, x) in tr.states.iter().enumerate() {
            let want = 0.95f64.powi(k as i32);
            assert!((x.x - want).abs() < 1e-14 && x.y == 0.0);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = builtin("circle_double_well", &ModelParams::default()).unwrap();
        let a = simulate(&m, 0.5, Vec2::new(1.0, 0.0), 2.0, 0.01, SeedRecord::new(7, 3)).unwrap();
        let b = simulate(&m, 0.5, Vec2::new(1.0, 0.0), 2.0, 0.01, SeedRecord::new(7, 3)).unwrap();
        let c = simulate(&m, 0.5, Vec2::new(1.0, 0.0), 2.0, 0.01, SeedRecord::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn unstable_step_is_refused() {
        let m = pg();
        assert!(matches!(
            simulate(&m, 1.0, Vec2::ZERO, 1.0, 0.5, SeedRecord::new(0, 0)),
            Err(Error::UnstableStep { .. })
        ));
    }

    #[test]
    fn rk4_linear_flow() {
        let m = pg();
        let tr = flow(&m, Vec2::new(1.0, 0.0), 1.0, 0.01).unwrap();
        assert!((tr.last().x - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn hitting_time_inside_and_closed_form() {
        let m = pg();
        assert_eq!(hitting_time(&m, Vec2::new(0.5, 0.0), 1.0, 0.01, 10.0).unwrap(), Some(0.0));
        let s = hitting_time(&m, Vec2::new(std::f64::consts::E, 0.0), 1.0, 0.01, 10.0).unwrap().unwrap();
        assert!((s - 1.0).abs() < 2e-3);
        assert_eq!(hitting_time(&m, Vec2::new(100.0, 0.0), 1.0, 0.01, 0.5).unwrap(), None);
    }

    #[test]
    fn k_radius_clears_the_orbit() {
        let m = builtin("circle_double_well", &ModelParams::default()).unwrap();
        let k = default_k_radius(&m).unwrap();
        assert!(k > m.r0() && k < 3.0 * m.r0(), "{k}");
    }
}
