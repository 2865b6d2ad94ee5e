//! Run configuration: a TOML file with one table per module, command-line
//! overrides on dotted keys, and a content hash for provenance.

use gcld::action::{ScanOptions, Tolerances};
use gcld::spectral::EigOptions;
use gcld::ModelParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Either an explicit list or `num` evenly spaced points from `start` to `stop`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, num: usize },
}

impl Grid {
    pub fn range(start: f64, stop: f64, num: usize) -> Self {
        Grid::Range { start, stop, num }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, num } => match num {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Not serialised, so the hash and the artifacts do not depend on it.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub model: ModelSection,
    pub sde: SdeSection,
    pub mc: McSection,
    pub spectral: SpectralSection,
    pub action: ActionSection,
    pub transform: TransformSection,
    pub hitting: HittingSection,
    pub verify: VerifySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: None,
            model: ModelSection::default(),
            sde: SdeSection::default(),
            mc: McSection::default(),
            spectral: SpectralSection::default(),
            action: ActionSection::default(),
            transform: TransformSection::default(),
            hitting: HittingSection::default(),
            verify: VerifySection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub name: String,
    pub params: ModelParams,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { name: "circle_double_well".into(), params: ModelParams::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSection {
    pub epsilon: f64,
    pub t: f64,
    pub dt: f64,
    pub x0: [f64; 2],
}

impl Default for SdeSection {
    fn default() -> Self {
        SdeSection { epsilon: 1.0, t: 8.0, dt: 0.01, x0: [1.0, 0.0] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Stationary,
    Point,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_samples: usize,
    /// `point` starts every trajectory at `sde.x0`.
    pub init: InitKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing_t: Option<f64>,
    pub lambda: Grid,
    pub bins: usize,
    /// Bernstein bound at the largest ℓ of the tightness grid.
    pub ell_floor: f64,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n_samples: 10_000,
            init: InitKind::Stationary,
            burn_in_t: None,
            spacing_t: None,
            lambda: Grid::range(-0.5, 0.5, 11),
            bins: 40,
            ell_floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    /// Box half-width; the model default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    /// Points per axis; the model default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    pub lambda: Grid,
    pub eig: EigOptions,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection { half_width: None, points: None, lambda: Grid::range(-1.5, 0.5, 9), eig: EigOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionSection {
    pub q: Grid,
    pub t: Grid,
    pub m_per_unit_t: f64,
    /// Base point of the closed problems; the loop basepoint when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<[f64; 2]>,
    pub tolerances: Tolerances,
    pub scan: ScanOptions,
}

impl Default for ActionSection {
    fn default() -> Self {
        ActionSection {
            q: Grid::range(-2.0, 2.0, 21),
            t: Grid::List(vec![8.0 * PI, 16.0 * PI, 32.0 * PI]),
            m_per_unit_t: 16.0,
            base: None,
            tolerances: Tolerances::default(),
            scan: ScanOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformSection {
    /// SCGF CSV consumed by the `transform` command.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub q: Grid,
    /// Fluctuation-relation slope; `1/ε` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl Default for TransformSection {
    fn default() -> Self {
        TransformSection { input: None, q: Grid::range(-1.0, 1.0, 21), scale: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HittingSection {
    /// Starting distances in units of `R0`.
    pub radii: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_radius: Option<f64>,
    pub dt: f64,
    pub t_max: f64,
}

impl Default for HittingSection {
    fn default() -> Self {
        HittingSection { radii: vec![10.0, 20.0, 40.0, 80.0], k_radius: None, dt: 1e-3, t_max: 1e4 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub lambda: f64,
    pub random_paths: usize,
    pub tightness_samples: usize,
    pub tightness_t: f64,
    pub subadditivity_t: f64,
    pub ground_state_spacing: f64,
    pub ground_state_half_width: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            lambda: 0.3,
            random_paths: 100,
            tightness_samples: 20_000,
            tightness_t: 4.0,
            subadditivity_t: 5.0,
            ground_state_spacing: 0.1,
            ground_state_half_width: 5.0,
        }
    }
}

/// Reads `path` (or starts from the defaults), applies `KEY=VALUE`
/// overrides and deserialises strictly.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, String> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            text.parse::<toml::Table>().map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    toml::Value::Table(table).try_into::<RunConfig>().map_err(|e| format!("invalid config: {e}"))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), String> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| format!("override `{spec}` is not KEY=VALUE"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(format!("override `{spec}` has an empty key"));
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.trim().into())),
        Err(_) => toml::Value::String(raw.trim().into()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| format!("override `{key}`: `{part}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Hex SHA-256 of the serialised config.
    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back.to_toml(), c.to_toml());
        assert_eq!(c.sha256().len(), 64);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = load(None, &["sde.epsilon=0.5".into(), "model.params.a0 = 2".into(), "spectral.lambda=[-1.0, 0.0]".into()]).unwrap();
        assert_eq!(c.sde.epsilon, 0.5);
        assert_eq!(c.model.params.a0, Some(2.0));
        assert_eq!(c.spectral.lambda.values(), vec![-1.0, 0.0]);
        let c = load(None, &["model.name=pure_gradient".into()]).unwrap();
        assert_eq!(c.model.name, "pure_gradient");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(load(None, &["sde.epsilom=0.5".into()]).is_err());
        assert!(load(None, &["model.params.radius=2".into()]).is_err());
        assert!(load(None, &["nonsense".into()]).is_err());
    }

    #[test]
    fn ranges_expand() {
        assert_eq!(Grid::range(0.0, 1.0, 3).values(), vec![0.0, 0.5, 1.0]);
        let c = load(None, &["action.q={start=-1.0, stop=1.0, num=5}".into()]).unwrap();
        assert_eq!(c.action.q.values().len(), 5);
    }
}
