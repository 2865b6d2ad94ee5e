#![allow(dead_code)]

use gcld::sde::rk4_step;
use gcld::{builtin, DiscretePath, ModelParams, Vec2, VectorFieldModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn circle() -> VectorFieldModel {
    builtin("circle_double_well", &ModelParams::default()).unwrap()
}

pub fn gradient() -> VectorFieldModel {
    builtin("pure_gradient", &ModelParams::default()).unwrap()
}

pub fn single_well() -> VectorFieldModel {
    builtin("single_well_rotational", &ModelParams::default()).unwrap()
}

/// `∫2|b|² e^{−V/ε} / ∫e^{−V/ε}` by the midpoint rule on `[−L, L]²`.
pub fn stationary_power(model: &VectorFieldModel, eps: f64, half: f64, n: usize) -> f64 {
    let h = 2.0 * half / n as f64;
    let mut v_min = f64::INFINITY;
    let mut cells = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = Vec2::new(-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h);
            let v = model.potential(x);
            v_min = v_min.min(v);
            cells.push((v, model.nonconservative(x).norm_sq()));
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (v, b2) in cells {
        let w = (-(v - v_min) / eps).exp();
        num += 2.0 * b2 * w;
        den += w;
    }
    num / den
}

/// `(2/P)∫⟨b, ẋ⟩dt` along the RK4 orbit through `(R0, 0)`, trapezoid in time.
pub fn orbit_power_by_quadrature(model: &VectorFieldModel) -> f64 {
    let omega = model.orbit_angular_speed();
    let period = 2.0 * PI / omega;
    let n = 20_000;
    let dt = period / n as f64;
    let mut x = Vec2::new(model.r0(), 0.0);
    let f = |x: Vec2| model.nonconservative(x).dot(model.drift(x));
    let mut acc = 0.5 * f(x);
    for k in 1..=n {
        x = rk4_step(model, x, dt);
        acc += if k == n { 0.5 * f(x) } else { f(x) };
    }
    2.0 * acc * dt / period
}

/// Top `k` eigenvalues `−κ(n₁ + n₂)` of the generator of `dX = −κX dt + √ε dβ`.
pub fn oscillator_levels(kappa: f64, k: usize) -> Vec<f64> {
    let mut levels: Vec<f64> = (0..10).flat_map(|a| (0..10).map(move |b| -kappa * (a + b) as f64)).collect();
    levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
    levels.truncate(k);
    levels
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Random smooth path from four Fourier modes; `closed` pins the last node to the first.
pub fn random_path(rng: &mut ChaCha8Rng, t: f64, m: usize, closed: bool) -> DiscretePath {
    let modes: Vec<(f64, f64, f64, f64)> =
        (0..4).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let shift = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let mut nodes: Vec<Vec2> = (0..=m)
        .map(|k| {
            let s = 2.0 * PI * k as f64 / m as f64;
            let mut p = shift;
            for (j, &(a, b, c, d)) in modes.iter().enumerate() {
                let f = (j + 1) as f64 * s;
                p = p + Vec2::new(a * f.cos() + b * f.sin(), c * f.cos() + d * f.sin()) * (0.5 / (j + 1) as f64);
            }
            p
        })
        .collect();
    if closed {
        nodes[m] = nodes[0];
    } else {
        nodes[m] = nodes[m] + Vec2::new(0.3, -0.2);
    }
    DiscretePath::new(t / m as f64, nodes).unwrap()
}
