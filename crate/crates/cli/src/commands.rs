//! The computational subcommands.

use crate::config::{InitKind, RunConfig};
use crate::{CliError, RateMethod, ScgfMethod};
use gcld::functional::{martingale_part, w_ito, w_strat};
use gcld::io::{self, Metadata};
use gcld::mc::{self, Init};
use gcld::sde::{self, SeedRecord};
use gcld::spectral::{self, GridSpec};
use gcld::transform::{self, RateCurve, ScgfCurve};
use gcld::{builtin, Vec2, VectorFieldModel};
use serde::Serialize;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

/// Default output directory when neither `--out` nor `out` is given.
pub const OUT_ENV: &str = "GCLD_OUT_DIR";

pub struct Context {
    pub cfg: RunConfig,
    pub model: VectorFieldModel,
    pub out: PathBuf,
    pub command: &'static str,
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!("{name} must be positive, got {v}")))
    }
}

fn increasing(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::config(format!("{name} must be a non-empty, finite, strictly increasing grid")));
    }
    Ok(())
}

impl Context {
    pub fn new(cfg: RunConfig, command: &'static str) -> Result<Self, CliError> {
        let model = builtin(&cfg.model.name, &cfg.model.params).map_err(|e| CliError::config(e.to_string()))?;
        let out = cfg
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("gcld-out"));
        let ctx = Context { cfg, model, out, command };
        ctx.validate()?;
        Ok(ctx)
    }

    /// Checks that must pass before any computation starts.
    fn validate(&self) -> Result<(), CliError> {
        let c = &self.cfg;
        if !(c.sde.epsilon >= 0.0 && c.sde.epsilon.is_finite()) {
            return Err(CliError::config(format!("sde.epsilon must be non-negative, got {}", c.sde.epsilon)));
        }
        let stochastic = matches!(self.command, "verify" | "simulate" | "gc-stats" | "scgf" | "rate" | "transform");
        if stochastic && self.command != "simulate" {
            positive("sde.epsilon", c.sde.epsilon)?;
        }
        if matches!(self.command, "verify" | "simulate" | "gc-stats" | "scgf") {
            positive("sde.t", c.sde.t)?;
            positive("sde.dt", c.sde.dt)?;
            sde::step_count(c.sde.t, c.sde.dt).map_err(|e| CliError::config(e.to_string()))?;
            sde::check_step(&self.model, c.sde.dt).map_err(|e| CliError::config(format!("refusing to run: {e}")))?;
        }
        if !(c.sde.x0[0].is_finite() && c.sde.x0[1].is_finite()) {
            return Err(CliError::config("sde.x0 must be finite"));
        }
        if matches!(self.command, "gc-stats" | "scgf" | "verify") && c.mc.n_samples == 0 {
            return Err(CliError::config("mc.n_samples must be positive"));
        }
        increasing("mc.lambda", &c.mc.lambda.values())?;
        increasing("spectral.lambda", &c.spectral.lambda.values())?;
        increasing("action.q", &c.action.q.values())?;
        increasing("action.t", &c.action.t.values())?;
        increasing("transform.q", &c.transform.q.values())?;
        positive("action.m_per_unit_t", c.action.m_per_unit_t)?;
        positive("hitting.dt", c.hitting.dt)?;
        positive("hitting.t_max", c.hitting.t_max)?;
        if !(c.mc.ell_floor > 0.0 && c.mc.ell_floor < 2.0) {
            return Err(CliError::config("mc.ell_floor must lie in (0, 2)"));
        }
        if matches!(self.command, "scgf" | "rate" | "verify") {
            self.grid()?;
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.sde.epsilon
    }

    pub fn x0(&self) -> Vec2 {
        Vec2::new(self.cfg.sde.x0[0], self.cfg.sde.x0[1])
    }

    pub fn init(&self) -> Init {
        match self.cfg.mc.init {
            InitKind::Point => Init::Point(self.x0()),
            InitKind::Stationary => Init::Stationary { burn_in_t: self.cfg.mc.burn_in_t, spacing_t: self.cfg.mc.spacing_t },
        }
    }

    pub fn base(&self) -> Vec2 {
        match self.cfg.action.base {
            Some([x, y]) => Vec2::new(x, y),
            None => self.model.reference_loop().start(),
        }
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        let s = &self.cfg.spectral;
        let default = GridSpec::default_for(&self.model, self.epsilon()).map_err(|e| CliError::config(e.to_string()))?;
        let l = s.half_width.unwrap_or(default.half_width);
        let m = s.points.unwrap_or(default.points());
        GridSpec::with_points(l, m).map_err(|e| CliError::config(e.to_string()))
    }

    /// Header block shared by every artifact.
    pub fn metadata(&self) -> Metadata {
        let mut m = Metadata::new();
        m.insert("tool".into(), format!("gcld {}", env!("CARGO_PKG_VERSION")));
        m.insert("command".into(), self.command.into());
        m.insert("config_sha256".into(), self.cfg.sha256());
        m.insert("seed".into(), self.cfg.seed.to_string());
        m.insert("config".into(), self.cfg.to_toml());
        m
    }

    fn prepare_out(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::numerical(format!("cannot create {}: {e}", self.out.display())))?;
        let header = format!(
            "# tool: gcld {}\n# config_sha256: {}\n# seed: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.cfg.sha256(),
            self.cfg.seed
        );
        std::fs::write(self.out.join("config.toml"), header + &self.cfg.to_toml())
            .map_err(|e| CliError::numerical(format!("cannot write config.toml: {e}")))
    }

    /// Writes `name` under the output directory and returns `name`.
    pub fn csv(&self, name: &str, write: impl FnOnce(BufWriter<File>, &Metadata) -> gcld::Result<()>) -> Result<String, CliError> {
        self.prepare_out()?;
        let path = self.out.join(name);
        let f = File::create(&path).map_err(|e| CliError::numerical(format!("cannot create {}: {e}", path.display())))?;
        write(BufWriter::new(f), &self.metadata())?;
        Ok(name.to_string())
    }

    pub fn records<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<String, CliError> {
        self.csv(name, |w, meta| io::write_records(w, rows, meta))
    }

    /// Writes `<command>.json` and echoes it on stdout.
    pub fn summary(&self, mut body: Value) -> Result<(), CliError> {
        self.prepare_out()?;
        if let Value::Object(map) = &mut body {
            map.insert("command".into(), json!(self.command));
            map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
            map.insert("seed".into(), json!(self.cfg.seed));
            map.insert("config_sha256".into(), json!(self.cfg.sha256()));
            map.insert("model".into(), json!(self.model.name()));
        }
        let text = serde_json::to_string_pretty(&body).expect("summary serialises");
        let path = self.out.join(format!("{}.json", self.command));
        std::fs::write(&path, &text).map_err(|e| CliError::numerical(format!("cannot write {}: {e}", path.display())))?;
        let _ = writeln!(std::io::stdout(), "{text}");
        Ok(())
    }
}

fn curve_json(c: &ScgfCurve) -> Value {
    json!(c.points.iter().map(|p| json!({"lambda": p.lambda, "e": p.value, "reliable": p.reliable})).collect::<Vec<_>>())
}

fn rate_json(c: &RateCurve) -> Value {
    json!(c.points.iter().map(|p| json!({"q": p.q, "rate": p.value, "boundary_active": p.boundary_active})).collect::<Vec<_>>())
}

/// `ft_residual` when the grid is symmetric, otherwise `null`.
fn ft_or_null(c: &RateCurve, scale: f64) -> Value {
    transform::ft_residual(c, scale).map_or(Value::Null, |r| json!(r))
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.cfg.sde;
    let tr = sde::simulate(&ctx.model, c.epsilon, ctx.x0(), c.t, c.dt, SeedRecord::new(ctx.cfg.seed, 0))?;
    let path = ctx.csv("trajectory.csv", |w, meta| io::write_trajectory_csv(w, &tr, meta))?;
    let last = tr.last();
    ctx.summary(json!({
        "epsilon": c.epsilon,
        "T": c.t,
        "dt": c.dt,
        "steps": tr.steps(),
        "final_state": [last.x, last.y],
        "w_ito": w_ito(&tr, &ctx.model)?,
        "w_strat": w_strat(&tr, &ctx.model)?,
        "martingale_part": martingale_part(&tr, &ctx.model)?,
        "trajectory_csv": path,
    }))
}

#[derive(Serialize)]
struct RatioRecord {
    q: f64,
    log_ratio: f64,
    std_error: f64,
    n_plus: usize,
    n_minus: usize,
    predicted: f64,
}

pub fn gc_stats(ctx: &Context) -> Result<(), CliError> {
    let (c, m) = (&ctx.cfg.sde, &ctx.cfg.mc);
    let ens = mc::simulate_ensemble(&ctx.model, c.epsilon, c.t, c.dt, &ctx.init(), m.n_samples, ctx.cfg.seed)?;
    let ens_path = ctx.csv("ensemble.csv", |w, meta| io::write_ensemble_csv(w, &ens, meta))?;
    let mean = mc::mean_estimate(&ens.w);
    let rows = mc::rate_ratio_from_samples(&ens.w, m.bins);
    let records: Vec<RatioRecord> = rows
        .iter()
        .map(|r| RatioRecord {
            q: r.q,
            log_ratio: r.log_ratio,
            std_error: r.std_error,
            n_plus: r.n_plus,
            n_minus: r.n_minus,
            predicted: r.q * c.t / c.epsilon,
        })
        .collect();
    let ratio_path = ctx.records("ratio.csv", &records)?;
    let b = ctx.model.b_sup_sq();
    let ells = mc::default_ell_grid(c.t, c.epsilon, b, m.ell_floor);
    let tight = mc::tightness_from_samples(&ens.m, c.t, c.epsilon, b, &ells);
    let tight_path = ctx.records("tightness.csv", &tight)?;
    let slope = mc::fit_slope(&rows);
    ctx.summary(json!({
        "epsilon": c.epsilon,
        "T": c.t,
        "dt": c.dt,
        "n_samples": ens.w.len(),
        "failed": ens.failed,
        "burn_in_T": ens.burn_in_t,
        "spacing_T": ens.spacing_t,
        "mean_w": mean.value,
        "mean_w_std_error": mean.std_error,
        "ratio_rows": rows.len(),
        "ratio_slope": slope.map(|s| s.0),
        "ratio_slope_std_error": slope.map(|s| s.1),
        "predicted_slope": c.t / c.epsilon,
        "tightness_holds": tight.iter().all(|r| r.holds()),
        "ensemble_csv": ens_path,
        "ratio_csv": ratio_path,
        "tightness_csv": tight_path,
    }))
}

fn spectral_curve(ctx: &Context) -> Result<ScgfCurve, CliError> {
    let grid = ctx.grid()?;
    let curve = spectral::scgf_curve_spectral(&ctx.model, ctx.epsilon(), &ctx.cfg.spectral.lambda.values(), &grid, &ctx.cfg.spectral.eig)?;
    Ok(curve)
}

pub fn scgf(ctx: &Context, method: ScgfMethod) -> Result<(), CliError> {
    let eps = ctx.epsilon();
    let curve = match method {
        ScgfMethod::Spectral => spectral_curve(ctx)?,
        ScgfMethod::Mc => {
            let c = &ctx.cfg.sde;
            mc::estimate_scgf(&ctx.model, eps, c.t, c.dt, &ctx.init(), &ctx.cfg.mc.lambda.values(), ctx.cfg.mc.n_samples, ctx.cfg.seed)?
        }
    };
    let path = ctx.csv("scgf.csv", |w, meta| io::write_scgf_csv(w, &curve, meta))?;
    ctx.summary(json!({
        "method": curve.provenance.as_str(),
        "epsilon": eps,
        "points": curve_json(&curve),
        "unreliable": curve.points.iter().filter(|p| !p.reliable).count(),
        "symmetry_residual": spectral::symmetry_residual(&curve, eps),
        "convexity_residual": transform::scgf_convexity(&curve),
        "metadata": curve.metadata,
        "scgf_csv": path,
    }))
}

pub fn rate(ctx: &Context, method: RateMethod) -> Result<(), CliError> {
    match method {
        RateMethod::Variational => {
            let a = &ctx.cfg.action;
            let curve = gcld::action::s_curve_with(
                &ctx.model,
                &a.q.values(),
                &a.t.values(),
                a.m_per_unit_t,
                ctx.base(),
                &a.tolerances,
                &a.scan,
            )?;
            let path = ctx.csv("rate.csv", |w, meta| io::write_rate_csv(w, &curve, meta))?;
            let qbar = ctx.model.orbit_power();
            let flat = curve
                .points
                .iter()
                .filter(|p| p.q >= 0.0 && p.q <= qbar * (1.0 + 1e-12))
                .map(|p| p.value)
                .fold(f64::NEG_INFINITY, f64::max);
            ctx.summary(json!({
                "method": "variational",
                "q_bar": qbar,
                "points": rate_json(&curve),
                "ft_residual": ft_or_null(&curve, 1.0),
                "convexity_residual": transform::rate_convexity(&curve),
                "max_rate_on_flat_segment": if flat.is_finite() { json!(flat) } else { Value::Null },
                "metadata": curve.metadata,
                "rate_csv": path,
            }))
        }
        RateMethod::Legendre => {
            let eps = ctx.epsilon();
            let scgf = spectral_curve(ctx)?;
            let scgf_path = ctx.csv("scgf.csv", |w, meta| io::write_scgf_csv(w, &scgf, meta))?;
            let curve = transform::legendre(&scgf, &ctx.cfg.transform.q.values())?;
            let path = ctx.csv("rate.csv", |w, meta| io::write_rate_csv(w, &curve, meta))?;
            let scale = ctx.cfg.transform.scale.unwrap_or(1.0 / eps);
            ctx.summary(json!({
                "method": "legendre",
                "epsilon": eps,
                "scale": scale,
                "points": rate_json(&curve),
                "ft_residual": ft_or_null(&curve, scale),
                "scgf_csv": scgf_path,
                "rate_csv": path,
            }))
        }
    }
}

pub fn transform(ctx: &Context) -> Result<(), CliError> {
    let input = ctx.cfg.transform.input.as_ref().ok_or_else(|| CliError::config("transform needs transform.input"))?;
    let f = File::open(input).map_err(|e| CliError::config(format!("cannot open {}: {e}", input.display())))?;
    let scgf = io::read_scgf_csv(f).map_err(|e| CliError::config(format!("{}: {e}", input.display())))?;
    let eps = scgf.metadata.get("epsilon").and_then(|s| s.parse::<f64>().ok()).unwrap_or(ctx.epsilon());
    let scale = ctx.cfg.transform.scale.unwrap_or(1.0 / eps);
    let curve = transform::legendre(&scgf, &ctx.cfg.transform.q.values())?;
    let path = ctx.csv("rate.csv", |w, meta| io::write_rate_csv(w, &curve, meta))?;
    ctx.summary(json!({
        "input": input,
        "source": scgf.provenance.as_str(),
        "epsilon": eps,
        "scale": scale,
        "points": rate_json(&curve),
        "ft_residual": ft_or_null(&curve, scale),
        "convexity_residual": transform::rate_convexity(&curve),
        "rate_csv": path,
    }))
}

#[derive(Serialize)]
struct HittingRecord {
    distance: f64,
    sigma: f64,
    sigma_per_distance: f64,
}

pub fn hitting(ctx: &Context) -> Result<(), CliError> {
    let h = &ctx.cfg.hitting;
    let k = match h.k_radius {
        Some(k) => k,
        None => sde::default_k_radius(&ctx.model)?,
    };
    let mut rows = Vec::with_capacity(h.radii.len());
    for &r in &h.radii {
        let d = r * ctx.model.r0();
        let sigma = sde::hitting_time(&ctx.model, Vec2::new(d, 0.0), k, h.dt, h.t_max)?.unwrap_or(f64::INFINITY);
        rows.push(HittingRecord { distance: d, sigma, sigma_per_distance: sigma / d });
    }
    let path = ctx.records("hitting.csv", &rows)?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.sigma_per_distance).collect();
    ctx.summary(json!({
        "k_radius": k,
        "distances": rows.iter().map(|r| r.distance).collect::<Vec<_>>(),
        "sigma": rows.iter().map(|r| if r.sigma.is_finite() { json!(r.sigma) } else { Value::Null }).collect::<Vec<_>>(),
        "strictly_decreasing": ratios.iter().all(|r| r.is_finite()) && ratios.windows(2).all(|w| w[1] < w[0]),
        "hitting_csv": path,
    }))
}
