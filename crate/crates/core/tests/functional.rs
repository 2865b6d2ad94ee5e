mod common;

use common::*;
use gcld::functional::{martingale_part, path_work, power_deterministic, w_ito, w_strat};
use gcld::mc::{simulate_ensemble, Init};
use gcld::sde::{flow, simulate, simulate_with_normals, SeedRecord, Trajectory};
use gcld::{DiscretePath, Vec2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

fn orbit(dt_fraction: usize) -> Trajectory {
    let m = circle();
    let period = 2.0 * PI / m.orbit_angular_speed();
    flow(&m, Vec2::new(m.r0(), 0.0), period, period / dt_fraction as f64).unwrap()
}

#[test]
fn gradient_model_does_no_work() {
    let g = gradient();
    let tr = simulate(&g, 0.7, Vec2::new(0.5, 0.5), 3.0, 0.01, SeedRecord::new(1, 0)).unwrap();
    assert_eq!(w_ito(&tr, &g).unwrap(), 0.0);
    assert_eq!(w_strat(&tr, &g).unwrap(), 0.0);
    assert_eq!(martingale_part(&tr, &g).unwrap(), 0.0);
}

#[test]
fn orbit_work_converges_to_the_orbit_power() {
    let q = circle().orbit_power();
    let m = circle();
    let mut prev_ito = f64::INFINITY;
    let mut prev_strat = f64::INFINITY;
    for n in [500, 1000, 2000] {
        let tr = orbit(n);
        let e_ito = (w_ito(&tr, &m).unwrap() - q).abs();
        let e_strat = (w_strat(&tr, &m).unwrap() - q).abs();
        assert!(e_ito <= 2.0 * tr.dt, "{e_ito}");
        assert!(e_strat <= 2.0 * tr.dt * tr.dt, "{e_strat}");
        assert!(e_ito < prev_ito && e_strat < prev_strat);
        prev_ito = e_ito;
        prev_strat = e_strat;
    }
}

#[test]
fn martingale_vanishes_on_the_noiseless_orbit() {
    let m = circle();
    for n in [500, 1000] {
        let tr = orbit(n);
        assert!(martingale_part(&tr, &m).unwrap().abs() <= tr.dt * tr.duration());
    }
}

#[test]
fn strat_is_antisymmetric_under_reversal() {
    let m = circle();
    let tr = simulate(&m, 0.5, Vec2::new(1.0, 0.0), 4.0, 0.01, SeedRecord::new(2, 0)).unwrap();
    assert_eq!(w_strat(&tr, &m).unwrap(), -w_strat(&tr.reversed(), &m).unwrap());
}

/// Itô and Stratonovich sums share a limit; the bias of their difference is first order in dt.
#[test]
fn ito_and_strat_agree_to_first_order() {
    let m = circle();
    let (eps, t, n_paths) = (0.5, 8.0, 300);
    let fine_steps = 3200;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut diffs = vec![Vec::new(); 3];
    for _ in 0..n_paths {
        let fine: Vec<Vec2> = (0..fine_steps)
            .map(|_| Vec2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let mut normals = fine;
        for (level, out) in diffs.iter_mut().enumerate() {
            if level > 0 {
                normals = normals.chunks(2).map(|c| (c[0] + c[1]) * std::f64::consts::FRAC_1_SQRT_2).collect();
            }
            let dt = t / normals.len() as f64;
            let tr = simulate_with_normals(&m, eps, Vec2::new(1.0, 0.0), dt, &normals).unwrap();
            out.push(w_strat(&tr, &m).unwrap() - w_ito(&tr, &m).unwrap());
        }
    }
    for (level, d) in diffs.iter().enumerate() {
        let dt = t / (fine_steps >> level) as f64;
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let se = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!(mean.abs() <= 2.0 * dt + 3.0 * se, "dt {dt}: {mean} ± {se}");
    }
}

#[test]
fn martingale_has_zero_mean() {
    let ens = simulate_ensemble(&circle(), 0.5, 4.0, 0.01, &Init::Point(Vec2::new(1.0, 0.0)), 10_000, 13).unwrap();
    let n = ens.m.len() as f64;
    let mean = ens.m.iter().sum::<f64>() / n;
    let se = (ens.m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!(mean.abs() <= 3.0 * se, "{mean} ± {se}");
}

#[test]
fn constant_path_dissipates_nothing() {
    let p = DiscretePath::constant(Vec2::new(0.7, 0.2), 3.0, 30).unwrap();
    assert_eq!(power_deterministic(&p, &circle()).unwrap(), 0.0);
}

#[test]
fn reference_loop_power() {
    let m = circle();
    let lp = m.reference_loop();
    let (r, d) = (m.r0(), lp.duration());
    let fine = DiscretePath::from_fn(d, 10 * lp.segments(), |s| {
        let th = 2.0 * PI * s;
        Vec2::new(r * th.cos(), -r * th.sin())
    })
    .unwrap();
    let oracle = path_work(&fine, &m) / lp.duration();
    let got = power_deterministic(lp, &m).unwrap();
    assert!(rel(got, oracle) < 1e-4, "{got} vs {oracle}");
    assert!(rel(got, m.orbit_power() * m.loop_period() / lp.duration()) < 1e-4);
    let slow = lp.with_dt(2.0 * lp.dt()).unwrap();
    assert!(rel(power_deterministic(&slow, &m).unwrap(), 0.5 * got) < 1e-12);
    assert_eq!(power_deterministic(&lp.reversed(), &m).unwrap(), -got);
}
