//! Python bindings: models, trajectories, SCGF and rate curves.

use gcld::action::{self, Tolerances};
use gcld::functional;
use gcld::mc::{self, Init};
use gcld::sde::{self, SeedRecord};
use gcld::spectral::{self, EigOptions, GridSpec};
use gcld::transform::{self, RateCurve, ScgfCurve};
use gcld::{Region, Vec2, VectorFieldModel};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(gcld, GcldError, PyException, "Raised for invalid parameters and numerical failures.");

fn err(e: gcld::Error) -> PyErr {
    GcldError::new_err(e.to_string())
}

fn v2(p: (f64, f64)) -> Vec2 {
    Vec2::new(p.0, p.1)
}

/// A drift `c = −½∇V + b` from the built-in catalogue.
#[pyclass(name = "Model", module = "gcld", frozen)]
struct PyModel {
    inner: VectorFieldModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (name = "circle_double_well", *, r0 = None, a0 = None, well_scale = None, saturation = None,
        bump_half_width = None, u_poly = None, a_poly = None, confinement = None, inject_gradient = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: &str,
        r0: Option<f64>,
        a0: Option<f64>,
        well_scale: Option<f64>,
        saturation: Option<f64>,
        bump_half_width: Option<f64>,
        u_poly: Option<Vec<f64>>,
        a_poly: Option<Vec<f64>>,
        confinement: Option<f64>,
        inject_gradient: Option<f64>,
    ) -> PyResult<Self> {
        let params = gcld::ModelParams {
            r0,
            a0,
            well_scale,
            saturation,
            bump_half_width,
            u_poly,
            a_poly,
            confinement,
            inject_gradient,
        };
        Ok(PyModel { inner: gcld::builtin(name, &params).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.inner.r0()
    }

    /// Certified bound on `|b|²`.
    #[getter]
    fn b_sup_sq(&self) -> f64 {
        self.inner.b_sup_sq()
    }

    /// Mean power along the reference loop.
    #[getter]
    fn orbit_power(&self) -> f64 {
        self.inner.orbit_power()
    }

    #[getter]
    fn dt_max(&self) -> f64 {
        self.inner.dt_max()
    }

    fn drift(&self, x: f64, y: f64) -> (f64, f64) {
        let c = self.inner.drift(Vec2::new(x, y));
        (c.x, c.y)
    }

    fn potential(&self, x: f64, y: f64) -> f64 {
        self.inner.potential(Vec2::new(x, y))
    }

    fn grad_potential(&self, x: f64, y: f64) -> (f64, f64) {
        let g = self.inner.grad_potential(Vec2::new(x, y));
        (g.x, g.y)
    }

    fn nonconservative(&self, x: f64, y: f64) -> (f64, f64) {
        let b = self.inner.nonconservative(Vec2::new(x, y));
        (b.x, b.y)
    }

    /// Structural checks on a lattice over `[-half_width, half_width]²`;
    /// returns `{name: (passed, worst, detail)}`.
    #[pyo3(signature = (half_width = None, step = None, tol_orth = 1e-10))]
    fn check_assumptions<'py>(
        &self,
        py: Python<'py>,
        half_width: Option<f64>,
        step: Option<f64>,
        tol_orth: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let region = half_width.map_or_else(|| self.inner.sampling_box(), Region::square);
        let step = step.unwrap_or(0.05 * self.inner.r0());
        let rep = gcld::check_assumptions(&self.inner, region, step, tol_orth).map_err(err)?;
        let d = PyDict::new(py);
        for c in &rep.checks {
            d.set_item(c.name, (c.passed, c.worst, c.detail.clone()))?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, r0={}, orbit_power={})", self.inner.name(), self.inner.r0(), self.inner.orbit_power())
    }
}

/// An Euler–Maruyama path.
#[pyclass(name = "Trajectory", module = "gcld", frozen)]
struct PyTrajectory {
    inner: sde::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times().collect()
    }

    fn states(&self) -> Vec<(f64, f64)> {
        self.inner.states.iter().map(|s| (s.x, s.y)).collect()
    }

    fn w_ito(&self, model: &PyModel) -> PyResult<f64> {
        functional::w_ito(&self.inner, &model.inner).map_err(err)
    }

    fn w_strat(&self, model: &PyModel) -> PyResult<f64> {
        functional::w_strat(&self.inner, &model.inner).map_err(err)
    }

    fn martingale_part(&self, model: &PyModel) -> PyResult<f64> {
        functional::martingale_part(&self.inner, &model.inner).map_err(err)
    }

    fn reversed(&self) -> Self {
        PyTrajectory { inner: self.inner.reversed() }
    }

    fn __len__(&self) -> usize {
        self.inner.states.len()
    }
}

/// Sampled `λ ↦ e(λ)`.
#[pyclass(name = "ScgfCurve", module = "gcld", frozen)]
struct PyScgfCurve {
    inner: ScgfCurve,
}

#[pymethods]
impl PyScgfCurve {
    #[new]
    fn new(lambdas: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        Ok(PyScgfCurve { inner: ScgfCurve::from_values(&lambdas, &values).map_err(err)? })
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.lambdas()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values()
    }

    #[getter]
    fn reliable(&self) -> Vec<bool> {
        self.inner.points.iter().map(|p| p.reliable).collect()
    }

    #[getter]
    fn std_errors(&self) -> Vec<f64> {
        self.inner.points.iter().map(|p| p.std_error).collect()
    }

    #[getter]
    fn provenance(&self) -> &'static str {
        self.inner.provenance.as_str()
    }

    fn value_at(&self, lambda: f64) -> Option<f64> {
        self.inner.value_at(lambda)
    }

    /// Worst `|e(λ) − e(−1/ε − λ)|/(1 + |e(λ)|)` over mirrored grid pairs.
    fn symmetry_residual(&self, epsilon: f64) -> Option<f64> {
        spectral::symmetry_residual(&self.inner, epsilon)
    }

    fn legendre(&self, qs: Vec<f64>) -> PyResult<PyRateCurve> {
        Ok(PyRateCurve { inner: transform::legendre(&self.inner, &qs).map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.points.len()
    }
}

/// Sampled `q ↦ rate(q)`.
#[pyclass(name = "RateCurve", module = "gcld", frozen)]
struct PyRateCurve {
    inner: RateCurve,
}

#[pymethods]
impl PyRateCurve {
    #[new]
    fn new(qs: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        Ok(PyRateCurve { inner: RateCurve::from_values(&qs, &values).map_err(err)? })
    }

    #[getter]
    fn qs(&self) -> Vec<f64> {
        self.inner.qs()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values()
    }

    #[getter]
    fn boundary_active(&self) -> Vec<bool> {
        self.inner.points.iter().map(|p| p.boundary_active).collect()
    }

    #[getter]
    fn provenance(&self) -> &'static str {
        self.inner.provenance.as_str()
    }

    fn value_at(&self, q: f64) -> Option<f64> {
        self.inner.value_at(q)
    }

    /// `max |rate(q) − rate(−q) + scale·q|` on a grid symmetric about 0.
    fn ft_residual(&self, scale: f64) -> PyResult<f64> {
        transform::ft_residual(&self.inner, scale).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.points.len()
    }
}

#[pyfunction]
#[pyo3(signature = (model, epsilon, x0, t, dt, seed = 0, stream = 0))]
fn simulate(model: &PyModel, epsilon: f64, x0: (f64, f64), t: f64, dt: f64, seed: u64, stream: u64) -> PyResult<PyTrajectory> {
    let inner = sde::simulate(&model.inner, epsilon, v2(x0), t, dt, SeedRecord::new(seed, stream)).map_err(err)?;
    Ok(PyTrajectory { inner })
}

/// Noiseless RK4 flow.
#[pyfunction]
fn flow(model: &PyModel, x0: (f64, f64), t: f64, dt: f64) -> PyResult<PyTrajectory> {
    Ok(PyTrajectory { inner: sde::flow(&model.inner, v2(x0), t, dt).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (model, y, dt = 1e-3, t_max = 1e4, k_radius = None))]
fn hitting_time(model: &PyModel, y: (f64, f64), dt: f64, t_max: f64, k_radius: Option<f64>) -> PyResult<Option<f64>> {
    let k = match k_radius {
        Some(k) => k,
        None => sde::default_k_radius(&model.inner).map_err(err)?,
    };
    sde::hitting_time(&model.inner, v2(y), k, dt, t_max).map_err(err)
}

fn init(x0: Option<(f64, f64)>) -> Init {
    x0.map_or_else(Init::stationary, |p| Init::Point(v2(p)))
}

/// Per-trajectory `(W_T, M_T)` samples; stationary starts unless `x0` is given.
#[pyfunction]
#[pyo3(signature = (model, epsilon, t, dt, n, seed = 0, x0 = None))]
#[allow(clippy::too_many_arguments)]
fn ensemble(py: Python<'_>, model: &PyModel, epsilon: f64, t: f64, dt: f64, n: usize, seed: u64, x0: Option<(f64, f64)>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let start = init(x0);
    let e = py.detach(|| mc::simulate_ensemble(&model.inner, epsilon, t, dt, &start, n, seed)).map_err(err)?;
    Ok((e.w, e.m))
}

/// Sample mean of `W_T` and its standard error.
#[pyfunction]
#[pyo3(signature = (model, epsilon, t, dt, n, seed = 0, x0 = None))]
#[allow(clippy::too_many_arguments)]
fn mean_w(py: Python<'_>, model: &PyModel, epsilon: f64, t: f64, dt: f64, n: usize, seed: u64, x0: Option<(f64, f64)>) -> PyResult<(f64, f64)> {
    let start = init(x0);
    let e = py.detach(|| mc::estimate_mean_w(&model.inner, epsilon, t, dt, &start, n, seed)).map_err(err)?;
    Ok((e.value, e.std_error))
}

#[pyfunction]
#[pyo3(signature = (model, epsilon, lambdas, t, dt, n, seed = 0, x0 = None))]
#[allow(clippy::too_many_arguments)]
fn scgf_mc(
    py: Python<'_>,
    model: &PyModel,
    epsilon: f64,
    lambdas: Vec<f64>,
    t: f64,
    dt: f64,
    n: usize,
    seed: u64,
    x0: Option<(f64, f64)>,
) -> PyResult<PyScgfCurve> {
    let start = init(x0);
    let inner = py.detach(|| mc::estimate_scgf(&model.inner, epsilon, t, dt, &start, &lambdas, n, seed)).map_err(err)?;
    Ok(PyScgfCurve { inner })
}

/// Principal eigenvalue of the tilted generator on a finite-volume grid;
/// the model default grid when `half_width`/`points` are omitted.
#[pyfunction]
#[pyo3(signature = (model, epsilon, lambdas, half_width = None, points = None))]
fn scgf_spectral(
    py: Python<'_>,
    model: &PyModel,
    epsilon: f64,
    lambdas: Vec<f64>,
    half_width: Option<f64>,
    points: Option<usize>,
) -> PyResult<PyScgfCurve> {
    let default = GridSpec::default_for(&model.inner, epsilon).map_err(err)?;
    let grid = GridSpec::with_points(half_width.unwrap_or(default.half_width), points.unwrap_or(default.points())).map_err(err)?;
    let inner = py
        .detach(|| spectral::scgf_curve_spectral(&model.inner, epsilon, &lambdas, &grid, &EigOptions::default()))
        .map_err(err)?;
    Ok(PyScgfCurve { inner })
}

/// `s(q) = min_T S_T(q)/T` over closed paths through `base`.
#[pyfunction]
#[pyo3(signature = (model, qs, ts, m_per_unit_t = 16.0, base = None))]
fn rate_variational(py: Python<'_>, model: &PyModel, qs: Vec<f64>, ts: Vec<f64>, m_per_unit_t: f64, base: Option<(f64, f64)>) -> PyResult<PyRateCurve> {
    let x = base.map_or_else(|| model.inner.reference_loop().start(), v2);
    let inner = py
        .detach(|| action::s_curve(&model.inner, &qs, &ts, m_per_unit_t, x, &Tolerances::default()))
        .map_err(err)?;
    Ok(PyRateCurve { inner })
}

/// Discrete Freidlin–Wentzell action of a path given as a list of nodes.
#[pyfunction]
fn action_value(model: &PyModel, nodes: Vec<(f64, f64)>, dt: f64) -> PyResult<f64> {
    let path = gcld::DiscretePath::new(dt, nodes.into_iter().map(v2).collect()).map_err(err)?;
    Ok(action::action_value(&path, &model.inner))
}

#[pymodule]
#[pyo3(name = "gcld")]
fn gcld_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GcldError", m.py().get_type::<GcldError>())?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyScgfCurve>()?;
    m.add_class::<PyRateCurve>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(hitting_time, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(mean_w, m)?)?;
    m.add_function(wrap_pyfunction!(scgf_mc, m)?)?;
    m.add_function(wrap_pyfunction!(scgf_spectral, m)?)?;
    m.add_function(wrap_pyfunction!(rate_variational, m)?)?;
    m.add_function(wrap_pyfunction!(action_value, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
