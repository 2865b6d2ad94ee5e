use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn gcld(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcld"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("GCLD_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn summary(out: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL_GRID: [&str; 4] = ["--override", "spectral.half_width=5.0", "--override", "spectral.points=101"];

#[test]
fn verify_passes_on_the_default_model() {
    let out = scratch("verify_default");
    let o = gcld(&out, &["verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out, "verify");
    assert_eq!(s["passed"], true);
    assert!(s["checks"].as_array().unwrap().len() >= 10);
    assert!(out.join("config.toml").exists());
}

#[test]
fn verify_names_the_broken_assumption() {
    let out = scratch("verify_injected");
    let o = gcld(&out, &["--override", "model.params.inject_gradient=0.1", "verify"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("assumption.orthogonality"));
    let s = summary(&out, "verify");
    assert_eq!(s["passed"], false);
    assert_eq!(s["failed"][0], "assumption.orthogonality");
}

#[test]
fn configuration_errors_exit_with_two() {
    let out = scratch("config_errors");
    assert_eq!(code(&gcld(&out, &["--override", "sde.dt=0.5", "simulate"])), 2);
    assert_eq!(code(&gcld(&out, &["--override", "sde.epsilom=1", "simulate"])), 2);
    assert_eq!(code(&gcld(&out, &["--override", "model.name=nonexistent", "simulate"])), 2);
    assert_eq!(code(&gcld(&out, &["--workers", "0", "simulate"])), 2);
    assert_eq!(code(&gcld(&out, &["transform"])), 2);
    assert_eq!(code(&gcld(&out, &["--override", "action.q=[1.0, 0.0]", "rate"])), 2);
    let bad = out.join("bad.toml");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(&bad, "[sde]\nepsilon = \"one\"\n").unwrap();
    assert_eq!(code(&gcld(&out, &["--config", bad.to_str().unwrap(), "simulate"])), 2);
}

#[test]
fn replay_is_byte_identical() {
    let (a, b) = (scratch("replay_a"), scratch("replay_b"));
    let args = ["--seed", "11", "--override", "mc.n_samples=2000", "--override", "sde.t=2.0", "gc-stats"];
    for out in [&a, &b] {
        let o = gcld(out, &args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["ensemble.csv", "ratio.csv", "tightness.csv", "config.toml", "gc-stats.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let o = gcld(&a, &["--seed", "12", "--override", "mc.n_samples=2000", "--override", "sde.t=2.0", "gc-stats"]);
    assert_eq!(code(&o), 0);
    assert_ne!(std::fs::read(a.join("ensemble.csv")).unwrap(), std::fs::read(b.join("ensemble.csv")).unwrap());
}

#[test]
fn replay_from_the_written_config() {
    let (a, b) = (scratch("from_config_a"), scratch("from_config_b"));
    assert_eq!(code(&gcld(&a, &["--seed", "5", "simulate"])), 0);
    let cfg = a.join("config.toml");
    assert_eq!(code(&gcld(&b, &["--config", cfg.to_str().unwrap(), "simulate"])), 0);
    assert_eq!(std::fs::read(a.join("trajectory.csv")).unwrap(), std::fs::read(b.join("trajectory.csv")).unwrap());
    assert_eq!(summary(&a, "simulate")["config_sha256"], summary(&b, "simulate")["config_sha256"]);
}

#[test]
fn output_directory_from_environment() {
    let out = scratch("env_out");
    let o = Command::new(env!("CARGO_BIN_EXE_gcld")).arg("hitting").env("GCLD_OUT_DIR", &out).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(summary(&out, "hitting")["strictly_decreasing"], true);
    assert!(out.join("hitting.csv").exists());
}

#[test]
fn spectral_scgf_then_transform() {
    let out = scratch("scgf_transform");
    let mut args: Vec<&str> = SMALL_GRID.to_vec();
    args.extend(["--override", "spectral.lambda={start=-1.5, stop=0.5, num=21}", "scgf"]);
    let o = gcld(&out, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out, "scgf");
    assert!(s["symmetry_residual"].as_f64().unwrap() <= 1e-6);
    let stdout: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout, s);

    let input = format!("transform.input={:?}", out.join("scgf.csv").to_str().unwrap());
    let o = gcld(&out, &["--override", &input, "transform"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = summary(&out, "transform");
    assert_eq!(t["source"], "spectral");
    assert!(t["ft_residual"].as_f64().unwrap() <= 1e-4, "{}", t["ft_residual"]);
}

#[test]
fn mc_scgf_reports_standard_errors() {
    let out = scratch("scgf_mc");
    let o = gcld(&out, &["--override", "mc.n_samples=4000", "--override", "sde.t=2.0", "scgf", "--method", "mc"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out, "scgf");
    assert_eq!(s["method"], "mc");
    let e0 = s["points"].as_array().unwrap().iter().find(|p| p["lambda"].as_f64().unwrap().abs() < 1e-12).unwrap();
    assert!(e0["e"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn variational_rate_has_the_flat_piece() {
    let out = scratch("rate_variational");
    let o = gcld(
        &out,
        &[
            "--override",
            "action.q=[-1.0, 0.0, 1.0]",
            "--override",
            "action.t=[12.566370614359172, 25.132741228718345]",
            "--override",
            "action.scan.halving=false",
            "rate",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out, "rate");
    assert_eq!(s["q_bar"], 2.0);
    let rates: Vec<f64> = s["points"].as_array().unwrap().iter().map(|p| p["rate"].as_f64().unwrap()).collect();
    assert!(rates[1] < 2e-2 && rates[2] < 2e-2, "{rates:?}");
    assert!(s["ft_residual"].as_f64().unwrap() <= 2e-2, "{}", s["ft_residual"]);
}

#[test]
fn legendre_rate_satisfies_the_fluctuation_relation() {
    let out = scratch("rate_legendre");
    let mut args: Vec<&str> = SMALL_GRID.to_vec();
    args.extend(["--override", "spectral.lambda={start=-1.5, stop=0.5, num=21}", "rate", "--method", "legendre"]);
    let o = gcld(&out, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out, "rate");
    assert!(s["ft_residual"].as_f64().unwrap() <= 1e-4);
    assert!(out.join("scgf.csv").exists() && out.join("rate.csv").exists());
}

#[test]
fn simulate_writes_trajectory_and_functionals() {
    let out = scratch("simulate");
    let o = gcld(&out, &["--override", "sde.epsilon=0", "--override", "sde.t=1.0", "simulate"]);
    assert_eq!(code(&o), 0);
    let s = summary(&out, "simulate");
    // Noiseless start on the orbit: the work is the orbit power.
    assert!((s["w_ito"].as_f64().unwrap() - 2.0).abs() < 5e-2);
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "t,x,y"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 102);
}
