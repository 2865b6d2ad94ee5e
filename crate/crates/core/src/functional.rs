//! The Gallavotti–Cohen functional `W_T`, its martingale part and the
//! dissipated power `L_T` of deterministic paths.

use crate::error::{Error, Result};
use crate::model::VectorFieldModel;
use crate::path::DiscretePath;
use crate::sde::Trajectory;

fn check(traj: &Trajectory, model: &VectorFieldModel) -> Result<f64> {
    if model.dim() != 2 {
        return Err(Error::InvalidParameter("model dimension does not match trajectory".into()));
    }
    if traj.states.len() < 2 {
        return Err(Error::DegeneratePath("trajectory has no steps".into()));
    }
    Ok(traj.duration())
}

/// `(2/T)Σ⟨b(X_k), ΔX_k⟩ + (ε/T)Σ ∇·b(X_k) dt`.
pub fn w_ito(traj: &Trajectory, model: &VectorFieldModel) -> Result<f64> {
    let t = check(traj, model)?;
    let mut work = 0.0;
    let mut div = 0.0;
    for w in traj.states.windows(2) {
        work += model.nonconservative(w[0]).dot(w[1] - w[0]);
        div += model.div_nonconservative(w[0]);
    }
    Ok(2.0 * work / t + traj.epsilon * div * traj.dt / t)
}

/// `(2/T)Σ⟨b(midpoint), ΔX_k⟩`.
pub fn w_strat(traj: &Trajectory, model: &VectorFieldModel) -> Result<f64> {
    let t = check(traj, model)?;
    Ok(2.0 * midpoint_work(&traj.states, model) / t)
}

/// `Σ[⟨b(X_k), ΔX_k⟩ − |b(X_k)|² dt]`.
pub fn martingale_part(traj: &Trajectory, model: &VectorFieldModel) -> Result<f64> {
    check(traj, model)?;
    let mut m = 0.0;
    for w in traj.states.windows(2) {
        let b = model.nonconservative(w[0]);
        m += b.dot(w[1] - w[0]) - b.norm_sq() * traj.dt;
    }
    Ok(m)
}

/// `L_T(φ) = (2/T)Σ⟨b(m_k), Δφ_k⟩`.
pub fn power_deterministic(path: &DiscretePath, model: &VectorFieldModel) -> Result<f64> {
    let t = path.duration();
    if !(t > 0.0) {
        return Err(Error::DegeneratePath("path has zero duration".into()));
    }
    Ok(2.0 * midpoint_work(path.nodes(), model) / t)
}

/// `2Σ⟨b(m_k), Δφ_k⟩`, i.e. `T·L_T`; independent of the clock.
pub fn path_work(path: &DiscretePath, model: &VectorFieldModel) -> f64 {
    2.0 * midpoint_work(path.nodes(), model)
}

/// Terms are summed in mirrored pairs so that reversing the nodes flips the
/// sign bit-exactly.
fn midpoint_work(nodes: &[crate::geom::Vec2], model: &VectorFieldModel) -> f64 {
    let terms: Vec<f64> = nodes
        .windows(2)
        .map(|w| model.nonconservative(w[0].midpoint(w[1])).dot(w[1] - w[0]))
        .collect();
    let n = terms.len();
    let mut acc = if n % 2 == 1 { terms[n / 2] } else { 0.0 };
    for k in 0..n / 2 {
        acc += terms[k] + terms[n - 1 - k];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::model::{builtin, ModelParams};
    use crate::sde::{flow, simulate, SeedRecord};

    #[test]
    fn gradient_model_has_no_work() {
        let m = builtin("pure_gradient", &ModelParams::default()).unwrap();
        let tr = simulate(&m, 0.5, Vec2::new(1.0, 0.0), 1.0, 0.01, SeedRecord::new(3, 0)).unwrap();
        assert_eq!(w_ito(&tr, &m).unwrap(), 0.0);
        assert_eq!(w_strat(&tr, &m).unwrap(), 0.0);
        assert_eq!(martingale_part(&tr, &m).unwrap(), 0.0);
    }

    #[test]
    fn orbit_work_is_orbit_power() {
        let m = builtin("circle_double_well", &ModelParams::default()).unwrap();
        let period = m.loop_period();
        let dt = period / 2000.0;
        let tr = flow(&m, Vec2::new(1.0, 0.0), period, dt).unwrap();
        assert!((w_strat(&tr, &m).unwrap() - 2.0).abs() < 1e-5);
        assert!((w_ito(&tr, &m).unwrap() - 2.0).abs() < 1e-2);
        assert!(martingale_part(&tr, &m).unwrap().abs() < 1e-2);
    }

    #[test]
    fn strat_flips_under_reversal() {
        let m = builtin("circle_double_well", &ModelParams::default()).unwrap();
        let tr = simulate(&m, 0.5, Vec2::new(1.0, 0.0), 2.0, 0.01, SeedRecord::new(5, 1)).unwrap();
        let a = w_strat(&tr, &m).unwrap();
        let b = w_strat(&tr.reversed(), &m).unwrap();
        assert!((a + b).abs() <= 1e-14 * a.abs().max(1.0));
    }

    #[test]
    fn constant_path_has_no_power() {
        let m = builtin("circle_double_well", &ModelParams::default()).unwrap();
        let p = DiscretePath::constant(Vec2::new(1.0, 0.0), 3.0, 30).unwrap();
        assert_eq!(power_deterministic(&p, &m).unwrap(), 0.0);
    }
}
