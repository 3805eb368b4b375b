//! TOML run and study configuration.

use std::path::{Path, PathBuf};

use rbcopula::copulas::CopulaFamily;
use rbcopula::diagnostics::default_grid;
use rbcopula::evidence::BridgeConfig;
use rbcopula::mcmc::ChainConfig;
use rbcopula::model::{MarginFamily, ModelSpec, PriorConfig, RandomEffectsMode, Variant};
use rbcopula::simstudy::Scenario;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_y1")]
    pub y1: String,
    #[serde(default = "default_y2")]
    pub y2: String,
    /// Responses are percentages and get divided by 100.
    #[serde(default)]
    pub percent_scale: bool,
}

fn default_y1() -> String {
    "y1".into()
}
fn default_y2() -> String {
    "y2".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Shortcut for both margins and the copula.
    pub variant: Option<Variant>,
    pub margin1: MarginFamily,
    pub margin2: MarginFamily,
    pub copula: CopulaFamily,
    /// Covariate columns per margin; an intercept is always added.
    pub x1: Vec<String>,
    pub x2: Vec<String>,
    /// Grouping column for random intercepts.
    pub group: Option<String>,
    pub priors: PriorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: None,
            margin1: MarginFamily::RectBeta,
            margin2: MarginFamily::RectBeta,
            copula: CopulaFamily::Gaussian,
            x1: Vec::new(),
            x2: Vec::new(),
            group: None,
            priors: PriorConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        let (margins, copula) = match self.variant {
            Some(v) => ([v.margin(); 2], v.copula()),
            None => ([self.margin1, self.margin2], self.copula),
        };
        let mut spec = ModelSpec::new(margins, copula, self.x1.len() + 1, self.x2.len() + 1, self.group.is_some());
        spec.priors = self.priors;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Posterior draws used for residuals and PIT pairs (evenly spaced).
    pub s: usize,
    /// Envelope replicates.
    pub b: usize,
    pub grid: Vec<f64>,
    pub re_mode: RandomEffectsMode,
    /// Null residual sets for the dispersion test.
    pub n_null: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { s: 1000, b: 500, grid: default_grid(), re_mode: RandomEffectsMode::Supplied, n_null: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub chains: ChainConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub evidence: BridgeConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// `path` relative to the directory of `file`.
fn relative_to(file: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        file.parent().unwrap_or(Path::new(".")).join(path)
    }
}

impl RunConfig {
    /// Loads a config; relative data and output paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = read_toml(path)?;
        cfg.data.path = relative_to(path, &cfg.data.path);
        cfg.output_dir = cfg.output_dir.map(|o| relative_to(path, &o));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.diagnostics;
        if d.grid.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
            return Err(CliError::Validation("diagnostics.grid values must lie in (0,1)".into()));
        }
        if d.s < rbcopula::diagnostics::MIN_RESIDUAL_DRAWS {
            return Err(CliError::Validation(format!(
                "diagnostics.s = {} is below {}",
                d.s,
                rbcopula::diagnostics::MIN_RESIDUAL_DRAWS
            )));
        }
        if d.b == 0 || d.n_null == 0 {
            return Err(CliError::Validation("diagnostics.b and diagnostics.n_null must be positive".into()));
        }
        self.chains.validate().map_err(|e| CliError::Validation(format!("[chains] {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub phi1: f64,
    pub phi2: f64,
    pub tau: f64,
    pub n: usize,
}

/// Cartesian product of margin settings, dependence levels and sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    pub phi: Vec<[f64; 2]>,
    pub tau: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: u64,
    pub n_replicates: usize,
    pub variant: Variant,
    pub chains: ChainConfig,
    pub grid: Option<ScenarioGrid>,
    pub scenario: Vec<ScenarioEntry>,
    pub output_dir: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let sc = Scenario::default();
        Self {
            seed: 1,
            n_replicates: sc.n_replicates,
            variant: sc.variant,
            chains: sc.chains,
            grid: None,
            scenario: Vec::new(),
            output_dir: None,
        }
    }
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: StudyConfig = read_toml(path)?;
        cfg.output_dir = cfg.output_dir.map(|o| relative_to(path, &o));
        Ok(cfg)
    }

    /// Explicit scenarios first, then the grid in `phi`, `tau`, `n` order.
    pub fn scenarios(&self) -> Result<Vec<Scenario>, CliError> {
        let mut entries = self.scenario.clone();
        if let Some(g) = &self.grid {
            for p in &g.phi {
                for &tau in &g.tau {
                    for &n in &g.n {
                        entries.push(ScenarioEntry { phi1: p[0], phi2: p[1], tau, n });
                    }
                }
            }
        }
        if entries.is_empty() {
            return Err(CliError::Validation("study config lists no scenarios".into()));
        }
        entries
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                let sc = Scenario {
                    n_replicates: self.n_replicates,
                    variant: self.variant,
                    chains: self.chains.clone(),
                    seed: self.seed,
                    ..Scenario::new(e.phi1, e.phi2, e.tau, e.n)
                };
                sc.validate().map_err(|err| CliError::Validation(format!("scenario {}: {err}", i + 1)))?;
                Ok(sc)
            })
            .collect()
    }
}
