//! Monte-Carlo statistics of `W_T`: mean, reweighted SCGF, rate ratios and
//! the Bernstein tail bound on the martingale part.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::model::VectorFieldModel;
use crate::sde::{self, normal_pair, SeedRecord};
use crate::transform::{Provenance, ScgfCurve, ScgfPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Stream reserved for the chain that supplies stationary initial points.
pub const STATIONARY_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Point(Vec2),
    /// Initial points from [`sde::sample_stationary`]; `None` picks the
    /// model's heuristic burn-in and spacing.
    Stationary { burn_in_t: Option<f64>, spacing_t: Option<f64> },
}

impl Init {
    pub fn stationary() -> Self {
        Init::Stationary { burn_in_t: None, spacing_t: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub ess: f64,
}

/// Per-trajectory `W_T` (Itô form) and martingale part `M_T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub epsilon: f64,
    pub t: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    pub failed: usize,
    pub burn_in_t: Option<f64>,
    pub spacing_t: Option<f64>,
}

fn run_one(model: &VectorFieldModel, epsilon: f64, x0: Vec2, steps: usize, dt: f64, seed: SeedRecord) -> Option<(f64, f64)> {
    let mut rng = seed.rng();
    let sq = (epsilon * dt).sqrt();
    let (mut work, mut div, mut bsq) = (0.0, 0.0, 0.0);
    let mut x = x0;
    for _ in 0..steps {
        let b = model.nonconservative(x);
        let nx = x + (b - model.grad_potential(x) * 0.5) * dt + normal_pair(&mut rng) * sq;
        if !nx.is_finite() {
            return None;
        }
        work += b.dot(nx - x);
        div += model.div_nonconservative(x);
        bsq += b.norm_sq();
        x = nx;
    }
    let t = steps as f64 * dt;
    Some((2.0 * work / t + epsilon * div * dt / t, work - bsq * dt))
}

/// Runs `n` independent trajectories; stream `i` drives trajectory `i`.
pub fn simulate_ensemble(
    model: &VectorFieldModel,
    epsilon: f64,
    t: f64,
    dt: f64,
    init: &Init,
    n: usize,
    master_seed: u64,
) -> Result<Ensemble> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let steps = sde::step_count(t, dt)?;
    sde::check_step(model, dt)?;
    let (starts, burn, spacing) = match *init {
        Init::Point(x) => {
            if !x.is_finite() {
                return Err(Error::InvalidParameter("initial point must be finite".into()));
            }
            (vec![x; n], None, None)
        }
        Init::Stationary { burn_in_t, spacing_t } => {
            let b = snap(burn_in_t.unwrap_or_else(|| sde::default_burn_in(model)), dt);
            let s = snap(spacing_t.unwrap_or_else(|| sde::default_spacing(model)), dt);
            let pts = sde::sample_stationary(model, epsilon, b, n, s, dt, SeedRecord::new(master_seed, STATIONARY_STREAM))?;
            (pts, Some(b), Some(s))
        }
    };
    let results: Vec<Option<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| run_one(model, epsilon, starts[i], steps, dt, SeedRecord::new(master_seed, i as u64)))
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    if failed * 1000 > n {
        return Err(Error::TooManyFailures { failed, total: n });
    }
    let (w, m) = results.into_iter().flatten().unzip();
    Ok(Ensemble { epsilon, t, dt, master_seed, w, m, failed, burn_in_t: burn, spacing_t: spacing })
}

fn snap(t: f64, dt: f64) -> f64 {
    (t / dt).ceil().max(1.0) * dt
}

pub fn mean_estimate(xs: &[f64]) -> McEstimate {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    McEstimate { value: mean, std_error: (var / n as f64).sqrt(), n_samples: n, ess: n as f64 }
}

/// Sample mean of `W_T` over independent trajectories.
pub fn estimate_mean_w(
    model: &VectorFieldModel,
    epsilon: f64,
    t: f64,
    dt: f64,
    init: &Init,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    Ok(mean_estimate(&simulate_ensemble(model, epsilon, t, dt, init, n_samples, seed)?.w))
}

/// Minimum effective sample size for a reweighted SCGF value to count as reliable.
pub const MIN_ESS: f64 = 100.0;

/// `(1/T) log mean exp(λ T W)` with a max-shifted log-sum-exp, delta-method
/// standard errors and effective sample sizes.
pub fn scgf_from_samples(w: &[f64], t: f64, lambda_grid: &[f64]) -> Result<ScgfCurve> {
    if w.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, have: 0 });
    }
    let n = w.len() as f64;
    let mut pts = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        let shift = w.iter().map(|x| l * t * x).fold(f64::NEG_INFINITY, f64::max);
        let (mut s1, mut s2) = (0.0, 0.0);
        for x in w {
            let y = (l * t * x - shift).exp();
            s1 += y;
            s2 += y * y;
        }
        let mean = s1 / n;
        let value = (shift + mean.ln()) / t;
        let var = ((s2 / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
        let std_error = (var / n).sqrt() / mean / t;
        let ess = s1 * s1 / s2;
        pts.push(ScgfPoint {
            lambda: l,
            value,
            reliable: ess >= MIN_ESS,
            std_error,
            ess,
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut c = ScgfCurve::new(pts, Provenance::Mc)?;
    c.metadata.insert("T".into(), t.to_string());
    c.metadata.insert("n_samples".into(), w.len().to_string());
    Ok(c)
}

/// Empirical SCGF from one ensemble, tilted in post-processing.
#[allow(clippy::too_many_arguments)]
pub fn estimate_scgf(
    model: &VectorFieldModel,
    epsilon: f64,
    t: f64,
    dt: f64,
    init: &Init,
    lambda_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<ScgfCurve> {
    let ens = simulate_ensemble(model, epsilon, t, dt, init, n_samples, seed)?;
    let mut c = scgf_from_samples(&ens.w, t, lambda_grid)?;
    c.metadata.insert("epsilon".into(), epsilon.to_string());
    c.metadata.insert("dt".into(), dt.to_string());
    c.metadata.insert("seed".into(), seed.to_string());
    if let Some(b) = ens.burn_in_t {
        c.metadata.insert("burn_in_T".into(), b.to_string());
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub q: f64,
    pub log_ratio: f64,
    pub std_error: f64,
    pub n_plus: usize,
    pub n_minus: usize,
}

/// Minimum count in each bin of a symmetric pair.
pub const MIN_BIN_COUNT: usize = 25;

/// `log P̂(q) − log P̂(−q)` over `bins` symmetric bin pairs spanning `max|W|`.
pub fn rate_ratio_from_samples(w: &[f64], bins: usize) -> Vec<RatioRow> {
    let n = w.len();
    let span = w.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if bins == 0 || span == 0.0 {
        return Vec::new();
    }
    let width = span / bins as f64;
    let mut plus = vec![0usize; bins];
    let mut minus = vec![0usize; bins];
    for &x in w {
        if x == 0.0 {
            continue;
        }
        let k = ((x.abs() / width) as usize).min(bins - 1);
        if x > 0.0 {
            plus[k] += 1;
        } else {
            minus[k] += 1;
        }
    }
    let nf = n as f64;
    (0..bins)
        .filter(|&k| plus[k] >= MIN_BIN_COUNT && minus[k] >= MIN_BIN_COUNT)
        .map(|k| {
            let (a, b) = (plus[k] as f64, minus[k] as f64);
            let se = ((1.0 - a / nf) / a + (1.0 - b / nf) / b).sqrt();
            RatioRow { q: (k as f64 + 0.5) * width, log_ratio: (a / b).ln(), std_error: se, n_plus: plus[k], n_minus: minus[k] }
        })
        .collect()
}

/// Empirical log-ratio table under stationary initial conditions.
#[allow(clippy::too_many_arguments)]
pub fn empirical_rate_ratio(
    model: &VectorFieldModel,
    epsilon: f64,
    t: f64,
    dt: f64,
    n_samples: usize,
    bins: usize,
    seed: u64,
) -> Result<Vec<RatioRow>> {
    let ens = simulate_ensemble(model, epsilon, t, dt, &Init::stationary(), n_samples, seed)?;
    Ok(rate_ratio_from_samples(&ens.w, bins))
}

/// Weighted least-squares slope of `log_ratio` against `q` through the
/// origin, with its standard error.
pub fn fit_slope(rows: &[RatioRow]) -> Option<(f64, f64)> {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in rows {
        let w = 1.0 / (r.std_error * r.std_error);
        sxy += w * r.q * r.log_ratio;
        sxx += w * r.q * r.q;
    }
    (sxx > 0.0).then(|| (sxy / sxx, 1.0 / sxx.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub ell: f64,
    pub exceed: usize,
    pub n: usize,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub bound: f64,
}

impl TightnessRow {
    pub fn holds(&self) -> bool {
        self.wilson_hi <= self.bound
    }
}

/// `2·exp(−ℓ²T/(2εB))`.
pub fn bernstein_bound(ell: f64, t: f64, epsilon: f64, b_sup_sq: f64) -> f64 {
    2.0 * (-ell * ell * t / (2.0 * epsilon * b_sup_sq)).exp()
}

/// Six points `ℓ_max·{0, 0.2, …, 1}` with `ℓ_max` chosen so the bound at the
/// top equals `floor`.
pub fn default_ell_grid(t: f64, epsilon: f64, b_sup_sq: f64, floor: f64) -> Vec<f64> {
    let ell_max = (2.0 * epsilon * b_sup_sq * (2.0 / floor).ln() / t).sqrt();
    (0..6).map(|k| ell_max * k as f64 / 5.0).collect()
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn tightness_from_samples(m: &[f64], t: f64, epsilon: f64, b_sup_sq: f64, ell_grid: &[f64]) -> Vec<TightnessRow> {
    ell_grid
        .iter()
        .map(|&ell| {
            let exceed = m.iter().filter(|x| x.abs() > ell * t).count();
            let (lo, hi) = wilson_interval(exceed, m.len(), 1.96);
            TightnessRow {
                ell,
                exceed,
                n: m.len(),
                p_hat: exceed as f64 / m.len() as f64,
                wilson_lo: lo,
                wilson_hi: hi,
                bound: bernstein_bound(ell, t, epsilon, b_sup_sq),
            }
        })
        .collect()
}

/// Empirical tail of `|M_T|/T` against the Bernstein bound.
#[allow(clippy::too_many_arguments)]
pub fn tightness_check(
    model: &VectorFieldModel,
    epsilon: f64,
    t: f64,
    dt: f64,
    init: &Init,
    ell_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<TightnessRow>> {
    let b = model.b_sup_sq();
    if !b.is_finite() {
        return Err(Error::InvalidParameter("tightness needs a bounded non-conservative field".into()));
    }
    let ens = simulate_ensemble(model, epsilon, t, dt, init, n_samples, seed)?;
    Ok(tightness_from_samples(&ens.m, t, epsilon, b, ell_grid))
}

/// Reweighted SCGF at several horizons, for watching finite-T stabilisation.
#[allow(clippy::too_many_arguments)]
pub fn scgf_at_horizons(
    model: &VectorFieldModel,
    epsilon: f64,
    horizons: &[f64],
    dt: f64,
    init: &Init,
    lambda_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<ScgfCurve>> {
    horizons
        .iter()
        .map(|&t| estimate_scgf(model, epsilon, t, dt, init, lambda_grid, n_samples, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, ModelParams};

    #[test]
    fn wilson_contains_the_proportion() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(0, 1000, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn scgf_at_zero_is_exactly_zero() {
        let w = [0.3, -1.2, 2.5, 0.7];
        let c = scgf_from_samples(&w, 4.0, &[-0.5, 0.0, 0.5]).unwrap();
        assert_eq!(c.points[1].value, 0.0);
        assert_eq!(c.points[1].ess, 4.0);
    }

    #[test]
    fn scgf_survives_overflow() {
        let w = [400.0, 401.0];
        let c = scgf_from_samples(&w, 10.0, &[1.0]).unwrap();
        assert!(c.points[0].value.is_finite());
        assert!((c.points[0].value - 400.0).abs() < 1.0);
    }

    #[test]
    fn gradient_model_has_zero_statistics() {
        let m = builtin("pure_gradient", &ModelParams::default()).unwrap();
        let e = estimate_mean_w(&m, 0.5, 1.0, 0.01, &Init::Point(Vec2::ZERO), 50, 1).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
        let c = estimate_scgf(&m, 0.5, 1.0, 0.01, &Init::Point(Vec2::ZERO), &[-1.0, 0.0, 1.0], 50, 1).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
        assert!(empirical_rate_ratio(&m, 0.5, 1.0, 0.01, 200, 10, 2).unwrap().is_empty());
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let m = builtin("circle_double_well", &ModelParams::default()).unwrap();
        let a = simulate_ensemble(&m, 0.5, 1.0, 0.01, &Init::Point(Vec2::new(1.0, 0.0)), 64, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool
            .install(|| simulate_ensemble(&m, 0.5, 1.0, 0.01, &Init::Point(Vec2::new(1.0, 0.0)), 64, 9))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ell_grid_hits_the_floor() {
        let g = default_ell_grid(8.0, 0.5, 1.0, 1e-3);
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], 0.0);
        assert!((bernstein_bound(g[5], 8.0, 0.5, 1.0) - 1e-3).abs() < 1e-12);
    }
}
