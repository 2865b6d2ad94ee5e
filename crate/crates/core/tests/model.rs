mod common;

use common::*;
use gcld::{check_assumptions, eval_drift, Region, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[test]
fn drift_of_the_quadratic_well() {
    let c = eval_drift(&gradient(), Vec2::new(1.0, 0.0));
    assert!((c.x + 1.0).abs() < 1e-14 && c.y.abs() < 1e-14);
    let x = Vec2::new(0.3, -1.7);
    let c = eval_drift(&gradient(), x);
    assert!((c.x + x.x).abs() < 1e-14 && (c.y + x.y).abs() < 1e-14);
}

#[test]
fn drift_on_the_orbit_is_pure_rotation() {
    let m = circle();
    let c = eval_drift(&m, Vec2::new(m.r0(), 0.0));
    assert!(c.x.abs() < 1e-14);
    assert!((c.y + m.orbit_angular_speed() * m.r0()).abs() < 1e-14);
}

#[test]
fn drift_minus_rotation_projects_onto_the_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in [circle(), single_well(), gradient()] {
        for _ in 0..200 {
            let x = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let g = m.grad_potential(x);
            let lhs = g.dot(eval_drift(&m, x) - m.nonconservative(x));
            assert!((lhs + 0.5 * g.norm_sq()).abs() <= 1e-12 * (1.0 + g.norm_sq()));
        }
    }
}

#[test]
fn circle_model_passes_every_assumption() {
    let m = circle();
    let rep = check_assumptions(&m, Region::square(3.0 * m.r0()), 0.05, 1e-10).unwrap();
    assert!(rep.all_passed(), "{:?}", rep.first_failure());
    let expected = 0.5 * orbit_power_by_quadrature(&m) * 2.0 * PI / m.orbit_angular_speed();
    assert!(rep.circulation > 0.0);
    assert!(rel(rep.circulation, expected) < 1e-4, "{} vs {expected}", rep.circulation);
}

#[test]
fn gradient_model_is_conservative() {
    let rep = check_assumptions(&gradient(), Region::square(3.0), 0.1, 1e-10).unwrap();
    let nc = rep.get("non_conservative").unwrap();
    assert!(!nc.passed);
    assert_eq!(rep.circulation, 0.0);
}

#[test]
fn injected_gradient_breaks_orthogonality() {
    let params = gcld::ModelParams { inject_gradient: Some(0.3), ..Default::default() };
    let m = gcld::builtin("circle_double_well", &params).unwrap();
    let rep = check_assumptions(&m, Region::square(3.0), 0.1, 1e-10).unwrap();
    let orth = rep.get("orthogonality").unwrap();
    assert!(!orth.passed);
    let at = orth.location.unwrap();
    assert!(m.grad_potential(Vec2::new(at[0], at[1])).norm() > 0.0);
}

#[test]
fn orbit_power_matches_quadrature() {
    let m = circle();
    assert!((m.orbit_power() - 2.0).abs() < 1e-14);
    assert!(rel(orbit_power_by_quadrature(&m), m.orbit_power()) < 1e-8);
    let params = gcld::ModelParams { r0: Some(1.5), a0: Some(0.7), ..Default::default() };
    let m = gcld::builtin("circle_double_well", &params).unwrap();
    assert!(rel(m.orbit_power(), 2.0 * 0.49 * 2.25) < 1e-14);
    assert!(rel(orbit_power_by_quadrature(&m), m.orbit_power()) < 1e-8);
}

#[test]
fn single_well_has_one_resting_point() {
    let m = single_well();
    assert_eq!(m.nonconservative(Vec2::ZERO).norm(), 0.0);
    assert_eq!(eval_drift(&m, Vec2::ZERO).norm(), 0.0);
    for r in [0.25, 0.5, 1.0, 2.0, 4.0] {
        for k in 0..16 {
            let th = 2.0 * PI * k as f64 / 16.0;
            assert!(eval_drift(&m, Vec2::new(r * th.cos(), r * th.sin())).norm() > 0.0);
        }
    }
}

#[test]
fn unknown_names_and_bad_parameters_fail() {
    assert!(gcld::builtin("lorenz", &Default::default()).is_err());
    let params = gcld::ModelParams { a0: Some(0.0), ..Default::default() };
    assert!(gcld::builtin("circle_double_well", &params).is_err());
    let params = gcld::ModelParams { r0: Some(-1.0), ..Default::default() };
    assert!(gcld::builtin("circle_double_well", &params).is_err());
}
