//! Experiment configuration: a single human-editable TOML file with defaults
//! for every key and rejection of unknown keys.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: String,
    pub grid: GridConfig,
    pub params: ParamConfig,
    pub sweep: SweepConfig,
    pub solver: SolverSection,
    pub ode: OdeConfig,
    pub shoot: ShootConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: "out".into(),
            grid: GridConfig::default(),
            params: ParamConfig::default(),
            sweep: SweepConfig::default(),
            solver: SolverSection::default(),
            ode: OdeConfig::default(),
            shoot: ShootConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub r_inner: f64,
    pub r_max: f64,
    pub n_inner: usize,
    pub n_outer: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            r_inner: 10.0,
            r_max: 256.0,
            n_inner: 4096,
            n_outer: 4096,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamConfig {
    /// truncation M of the orthogonality vectors
    pub m_trunc: f64,
    pub delta: f64,
    pub k_bootstrap: f64,
    pub b_star: f64,
}

impl Default for ParamConfig {
    fn default() -> Self {
        Self {
            m_trunc: 50.0,
            delta: 0.02,
            k_bootstrap: 60.0,
            b_star: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub b_values: Vec<f64>,
    pub eta0: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            b_values: vec![0.02, 0.01, 0.005],
            eta0: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub ds: f64,
    pub picard_iters: usize,
    pub picard_tol: f64,
    pub decomposition_every: usize,
    pub record_every: usize,
    /// truncation used by the rate projection (2 M < B1(b0) must hold)
    pub m_trunc_dynamics: f64,
    pub b0: f64,
    pub b_end: f64,
    pub s_max: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            ds: 0.01,
            picard_iters: 3,
            picard_tol: 1e-10,
            decomposition_every: 20,
            record_every: 5,
            m_trunc_dynamics: 15.0,
            b0: 0.01,
            b_end: 0.008,
            s_max: 1e4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeConfig {
    pub b0: f64,
    pub s_span: f64,
    pub samples: usize,
    /// "asymptotic" (2/|log b|) or "fitted" (quadrature ratio constant)
    pub cb_model: String,
    pub window_hi: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            b0: 0.01,
            s_span: 1e46,
            samples: 900,
            cb_model: "asymptotic".into(),
            window_hi: 1e44,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShootConfig {
    pub b0: f64,
    pub budget: usize,
    pub use_pde: bool,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            b0: 0.01,
            budget: 10,
            use_pde: false,
        }
    }
}

pub fn load_config(path: Option<&std::path::Path>) -> anyhow::Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let cfg: ExperimentConfig = toml::from_str(&text)?;
            Ok(cfg)
        }
    }
}
