mod common;

use common::*;
use gcld::sde::{self, flow, hitting_time, sample_stationary, simulate, SeedRecord};
use gcld::Vec2;
use std::f64::consts::PI;

#[test]
fn noiseless_euler_on_the_quadratic_well() {
    let dt = 0.01;
    let tr = simulate(&gradient(), 0.0, Vec2::new(1.0, 0.0), 2.0, dt, SeedRecord::new(3, 0)).unwrap();
    for (k, x) in tr.states.iter().enumerate() {
        assert!((x.x - (1.0 - dt).powi(k as i32)).abs() < 1e-14);
        assert_eq!(x.y, 0.0);
    }
}

#[test]
fn same_seed_same_bits() {
    let m = circle();
    let a = simulate(&m, 0.5, Vec2::new(0.2, 0.1), 5.0, 0.01, SeedRecord::new(42, 7)).unwrap();
    let b = simulate(&m, 0.5, Vec2::new(0.2, 0.1), 5.0, 0.01, SeedRecord::new(42, 7)).unwrap();
    assert!(a.states.iter().zip(&b.states).all(|(p, q)| p.x.to_bits() == q.x.to_bits() && p.y.to_bits() == q.y.to_bits()));
    let c = simulate(&m, 0.5, Vec2::new(0.2, 0.1), 5.0, 0.01, SeedRecord::new(42, 8)).unwrap();
    assert_ne!(a.last(), c.last());
}

/// The radial restoring force holds explicit Euler at a first-order offset
/// from the orbit, while RK4 stays on it.
#[test]
fn noiseless_euler_stays_near_the_orbit() {
    let m = circle();
    let period = 2.0 * PI / m.orbit_angular_speed();
    let x0 = Vec2::new(m.r0(), 0.0);
    let drift_at = |steps: usize| {
        let dt = period / steps as f64;
        let em = sde::simulate_with_normals(&m, 0.0, x0, dt, &vec![Vec2::ZERO; steps]).unwrap();
        let rk = flow(&m, x0, period, dt).unwrap();
        let rk_worst = rk.states.iter().map(|x| (x.norm() - m.r0()).abs()).fold(0.0, f64::max);
        assert!(rk_worst < 1e-10);
        em.states.iter().zip(&rk.states).map(|(a, b)| (a.norm() - b.norm()).abs()).fold(0.0, f64::max)
    };
    let (coarse, fine) = (drift_at(4000), drift_at(8000));
    assert!(coarse <= period / 4000.0, "{coarse}");
    assert!((coarse / fine - 2.0).abs() < 0.1, "{coarse} {fine}");
}

#[test]
fn flow_closes_after_one_period() {
    let m = circle();
    let period = 2.0 * PI / m.orbit_angular_speed();
    let tr = flow(&m, Vec2::new(m.r0(), 0.0), period, period / 2000.0).unwrap();
    assert!((tr.last() - Vec2::new(m.r0(), 0.0)).norm() <= 1e-6 * m.r0());
    assert_eq!(tr.epsilon, 0.0);
}

#[test]
fn flow_of_the_quadratic_well_is_exponential() {
    let tr = flow(&gradient(), Vec2::new(1.0, 0.0), 1.0, 0.01).unwrap();
    assert!((tr.last().x - (-1f64).exp()).abs() < 1e-8);
}

#[test]
fn single_well_flow_collapses_to_the_origin() {
    let m = single_well();
    let mut prev = f64::INFINITY;
    for t in [5.0, 10.0, 20.0, 40.0] {
        let r = flow(&m, Vec2::new(2.0, -1.0), t, 0.01).unwrap().last().norm();
        assert!(r < prev);
        prev = r;
    }
    assert!(prev < 1e-12);
}

#[test]
fn hitting_times() {
    let g = gradient();
    assert_eq!(hitting_time(&g, Vec2::new(0.5, 0.0), 1.0, 0.01, 10.0).unwrap(), Some(0.0));
    let s = hitting_time(&g, Vec2::new(1.0f64.exp(), 0.0), 1.0, 0.01, 10.0).unwrap().unwrap();
    assert!((s - 1.0).abs() < 2e-3, "{s}");
    assert_eq!(hitting_time(&g, Vec2::new(100.0, 0.0), 1.0, 0.01, 1.0).unwrap(), None);
}

#[test]
fn hitting_time_per_distance_decreases() {
    let m = circle();
    let k = sde::default_k_radius(&m).unwrap();
    let ratios: Vec<f64> = [10.0, 20.0, 40.0, 80.0]
        .iter()
        .map(|&r| {
            let y = Vec2::new(r * m.r0() / 2f64.sqrt(), r * m.r0() / 2f64.sqrt());
            hitting_time(&m, y, k, 1e-3, 1e3).unwrap().unwrap() / y.norm()
        })
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn stationary_power_matches_the_gibbs_density() {
    let m = circle();
    let eps = 0.5;
    let pts = sample_stationary(&m, eps, sde::default_burn_in(&m), 4000, sde::default_spacing(&m), 0.01, SeedRecord::new(5, 0)).unwrap();
    let vals: Vec<f64> = pts.iter().map(|x| 2.0 * m.nonconservative(*x).norm_sq()).collect();
    let (mean, se) = mean_and_se(&vals);
    let oracle = stationary_power(&m, eps, 4.0, 400);
    assert!((mean - oracle).abs() <= 3.0 * se, "{mean} ± {se} vs {oracle}");
}

#[test]
fn ornstein_uhlenbeck_variance() {
    let m = gradient();
    let pts = sample_stationary(&m, 1.0, 20.0, 4000, 2.0, 0.005, SeedRecord::new(9, 0)).unwrap();
    for axis in 0..2 {
        let sq: Vec<f64> = pts.iter().map(|p| if axis == 0 { p.x * p.x } else { p.y * p.y }).collect();
        let (var, se) = mean_and_se(&sq);
        assert!((var - 0.5).abs() <= 3.0 * se, "{var} ± {se}");
    }
}

#[test]
fn disjoint_seeds_agree() {
    let m = circle();
    let run = |seed| {
        let pts = sample_stationary(&m, 0.5, 50.0, 1500, 5.0, 0.01, SeedRecord::new(seed, 0)).unwrap();
        let v: Vec<f64> = pts.iter().map(|x| x.norm()).collect();
        mean_and_se(&v)
    };
    let (a, sa) = run(100);
    let (b, sb) = run(200);
    assert!((a - b).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "{a} {b}");
}
