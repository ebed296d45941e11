//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sburgers_core::ergodics::Observable;
use sburgers_core::integrator::{SimConfig, DEFAULT_DT, DEFAULT_DT_SAVE};
use sburgers_core::noise::{DirectionMap, GaussianSpec, JumpSpec, MarkLaw};
use sburgers_core::rng::{stream, INITIAL_CONDITION_STREAM};
use sburgers_core::spectral::{SpectralField, DEFAULT_MODES};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub gaussian: GaussianBlock,
    /// Absent means a purely Brownian forcing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<JumpBlock>,
    #[serde(default)]
    pub experiment: ExperimentBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt_save")]
    pub dt_save: f64,
    #[serde(default = "yes")]
    pub nonlinearity: bool,
    #[serde(default)]
    pub initial: InitialSpec,
}

fn default_modes() -> usize {
    DEFAULT_MODES
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_horizon() -> f64 {
    1.0
}
fn default_dt_save() -> f64 {
    DEFAULT_DT_SAVE
}
fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            n_modes: DEFAULT_MODES,
            dt: DEFAULT_DT,
            horizon: 1.0,
            dt_save: DEFAULT_DT_SAVE,
            nonlinearity: true,
            initial: InitialSpec::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTerm {
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    #[default]
    Zero,
    /// Finite combination `Σ value·e_k`.
    Modes { terms: Vec<ModeTerm> },
    /// `a_k = scale · g_k / k` with independent standard normals `g_k`.
    Random { scale: f64 },
}

impl InitialSpec {
    pub fn build(&self, n_modes: usize, seed: u64) -> Result<SpectralField, CliError> {
        match self {
            InitialSpec::Zero => Ok(SpectralField::zeros(n_modes)),
            InitialSpec::Modes { terms } => {
                let mut a = vec![0.0; n_modes];
                for t in terms {
                    if t.k == 0 || t.k > n_modes {
                        return Err(CliError::Config(format!(
                            "model.initial.terms: mode {} outside 1..={n_modes}",
                            t.k
                        )));
                    }
                    a[t.k - 1] += t.value;
                }
                SpectralField::new(a).map_err(|e| CliError::Config(format!("model.initial: {e}")))
            }
            InitialSpec::Random { scale } => {
                let mut rng = stream(seed, INITIAL_CONDITION_STREAM);
                let a = (1..=n_modes)
                    .map(|k| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        scale * g / k as f64
                    })
                    .collect();
                SpectralField::new(a).map_err(|e| CliError::Config(format!("model.initial: {e}")))
            }
        }
    }
}

/// `β_k` given explicitly (padded with zeros) or as `b0 · k^{−q}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub b0: f64,
    #[serde(default = "one")]
    pub q: f64,
}

impl Default for GaussianBlock {
    fn default() -> Self {
        Self { betas: None, b0: 1.0, q: 1.0 }
    }
}

impl GaussianBlock {
    pub fn build(&self, n_modes: usize) -> Result<GaussianSpec, CliError> {
        let spec = match &self.betas {
            Some(b) => {
                if b.len() > n_modes {
                    return Err(CliError::Config(format!(
                        "gaussian.betas: {} entries for {n_modes} modes",
                        b.len()
                    )));
                }
                let mut betas = b.clone();
                betas.resize(n_modes, 0.0);
                GaussianSpec::new(betas)
            }
            None => GaussianSpec::power_decay(n_modes, self.b0, self.q),
        };
        spec.map_err(|e| CliError::Config(format!("gaussian: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionBlock {
    /// `G ≡ amplitude · e_1`.
    FirstMode { amplitude: f64 },
    /// `G ≡ Σ coeffs[k−1] e_k`.
    Constant { coeffs: Vec<f64> },
    /// `G(x) = amplitude · tanh(‖x‖)/‖x‖ · x`.
    Saturated { amplitude: f64 },
}

impl Default for DirectionBlock {
    fn default() -> Self {
        DirectionBlock::FirstMode { amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpBlock {
    #[serde(default = "one")]
    pub intensity: f64,
    #[serde(default)]
    pub mark: MarkLaw,
    #[serde(default)]
    pub direction: DirectionBlock,
    /// Declared `sup ‖G‖`, checked against the direction map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_g: Option<f64>,
}

impl JumpBlock {
    pub fn build(&self, n_modes: usize) -> Result<JumpSpec, CliError> {
        let direction = match &self.direction {
            DirectionBlock::FirstMode { amplitude } => DirectionMap::first_mode(n_modes, *amplitude),
            DirectionBlock::Constant { coeffs } => {
                if coeffs.len() != n_modes {
                    return Err(CliError::Config(format!(
                        "jumps.direction.coeffs: {} entries for {n_modes} modes",
                        coeffs.len()
                    )));
                }
                let field = SpectralField::new(coeffs.clone())
                    .map_err(|e| CliError::Config(format!("jumps.direction.coeffs: {e}")))?;
                DirectionMap::Constant { field }
            }
            DirectionBlock::Saturated { amplitude } => DirectionMap::Saturated { amplitude: *amplitude },
        };
        if let Some(sup) = self.sup_g {
            if direction.sup_norm() > sup * (1.0 + 1e-12) {
                return Err(CliError::Config(format!(
                    "jumps.sup_g: direction map reaches {} > {sup}",
                    direction.sup_norm()
                )));
            }
        }
        JumpSpec::new(self.intensity, self.mark, direction).map_err(|e| CliError::Config(format!("jumps: {e}")))
    }
}

/// Estimator parameters; each estimator reads the fields it needs and falls
/// back to its own defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<Observable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_scale: Option<f64>,
    /// Reference value `μ̂(φ)`; estimated from a long run when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    /// Second initial condition for the mixing-rate proxy (default `e_1`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other_initial: Option<InitialSpec>,
    /// Number of states checked by `verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_states: Option<usize>,
    /// Paths used by the supermartingale check in `verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_traj: Option<usize>,
    /// Replaces `c₁` (negative controls).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1_override: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut stripped = self.clone();
        stripped.output_dir = None;
        let value = serde_json::to_value(&stripped).expect("configuration serialises");
        let mut canonical = String::new();
        write_canonical(&value, &mut canonical);
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let n = self.model.n_modes;
        let cfg = SimConfig {
            n_modes: n,
            dt: self.model.dt,
            horizon: self.model.horizon,
            dt_save: self.model.dt_save,
            gaussian: self.gaussian.build(n)?,
            jumps: self.jumps.as_ref().map(|j| j.build(n)).transpose()?,
            nonlinearity: self.model.nonlinearity,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        Ok(cfg)
    }

    pub fn initial_state(&self) -> Result<SpectralField, CliError> {
        self.model.initial.build(self.model.n_modes, self.seed)
    }
}

/// JSON with object keys sorted at every level.
fn write_canonical(v: &serde_json::Value, out: &mut String) {
    match v {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serialises"));
                out.push(':');
                write_canonical(&map[k.as_str()], out);
            }
            out.push('}');
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 7
output_dir = "out"

[model]
n_modes = 8
dt = 0.001
horizon = 0.5
dt_save = 0.01
nonlinearity = true
initial = { kind = "modes", terms = [{ k = 1, value = 0.5 }, { k = 3, value = -0.25 }] }

[gaussian]
b0 = 1.0
q = 1.0

[jumps]
intensity = 1.0
mark = { law = "exponential", rate = 2.0 }
direction = { map = "first_mode", amplitude = 1.0 }
sup_g = 1.0

[experiment]
estimator = "sigma2"
n_traj = 4
observable = { kind = "mode", k = 1 }
lambdas = [0.25, 0.5]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml(FULL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.n_modes, 8);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let x0 = cfg.initial_state().unwrap();
        assert_eq!(x0.coeff(3), -0.25);
        let sim = cfg.sim_config().unwrap();
        assert!(sim.jumps.is_some());
    }

    #[test]
    fn hash_ignores_field_order_and_output_dir() {
        let a = RunConfig::from_toml("seed = 1\n[model]\nn_modes = 4\nhorizon = 2.0\n").unwrap();
        let b = RunConfig::from_toml("[model]\nhorizon = 2.0\nn_modes = 4\n").unwrap();
        let b = RunConfig { seed: 1, output_dir: Some("elsewhere".into()), ..b };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 2, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn errors_carry_field_paths() {
        let e = RunConfig::from_toml("[model]\nn_modes = \"many\"\n").unwrap_err();
        assert!(e.to_string().contains("model.n_modes"), "{e}");
        let e = RunConfig::from_toml("[jumps]\nmark = { law = \"exponential\", rate = 2.0, extra = 1 }\n").unwrap_err();
        assert!(e.to_string().contains("jumps.mark"), "{e}");
        let e = RunConfig::from_toml("[experiment]\nunknown = 1\n").unwrap_err();
        assert!(e.to_string().contains("unknown"), "{e}");
    }

    #[test]
    fn missing_jump_block_means_brownian_forcing() {
        let cfg = RunConfig::from_toml("[model]\nn_modes = 4\n").unwrap();
        let sim = cfg.sim_config().unwrap();
        assert!(sim.jumps.is_none());
        assert_eq!(sim.gaussian.betas(), &[1.0, 0.5, 1.0 / 3.0, 0.25]);
    }

    #[test]
    fn semantic_validation() {
        let cfg = RunConfig::from_toml("[model]\nn_modes = 2\n[gaussian]\nbetas = [1.0, 2.0, 3.0]\n").unwrap();
        assert!(cfg.sim_config().is_err());
        let cfg = RunConfig::from_toml("[model]\nn_modes = 2\ninitial = { kind = \"modes\", terms = [{ k = 5, value = 1.0 }] }\n")
            .unwrap();
        assert!(cfg.initial_state().is_err());
        let cfg = RunConfig::from_toml("[model]\nn_modes = 2\n[jumps]\ndirection = { map = \"first_mode\", amplitude = 2.0 }\nsup_g = 1.0\n")
            .unwrap();
        assert!(cfg.sim_config().is_err());
    }

    #[test]
    fn random_initial_state_is_seeded() {
        let cfg = RunConfig::from_toml("seed = 3\n[model]\nn_modes = 5\ninitial = { kind = \"random\", scale = 1.0 }\n").unwrap();
        assert_eq!(cfg.initial_state().unwrap(), cfg.initial_state().unwrap());
        let other = RunConfig { seed: 4, ..cfg.clone() };
        assert_ne!(cfg.initial_state().unwrap(), other.initial_state().unwrap());
    }
}
