use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::models::{MarketModel, ModelParams, StateDistribution};

fn default_step() -> f64 {
    crate::ode::DEFAULT_STEP
}

fn default_sample_every() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    crate::ode::DEFAULT_TOL
}

fn default_restarts() -> usize {
    32
}

fn default_seed() -> u64 {
    1
}

fn default_grid() -> usize {
    crate::miranda::DEFAULT_GRID
}

fn default_eps() -> f64 {
    1e-16
}

fn default_ode_step() -> f64 {
    1e-2
}

fn default_lln_n() -> usize {
    5000
}

fn default_lln_seeds() -> usize {
    20
}

fn default_lln_t_end() -> f64 {
    200.0
}

fn default_sweep() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 1.75]
}

fn default_prefix() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    pub t_end: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            restarts: default_restarts(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub t_end: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: f64,
    /// Also integrate the mean-field equations on the same grid and report
    /// the sup-distance.
    #[serde(default)]
    pub compare: bool,
    #[serde(default = "default_ode_step")]
    pub ode_step: f64,
}

/// Box-subdivision settings: target volume and face grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirandaConfig {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

impl Default for MirandaConfig {
    fn default() -> Self {
        Self {
            eps: default_eps(),
            grid: default_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Run the finite-population check (slow).
    #[serde(default)]
    pub lln: bool,
    #[serde(default = "default_lln_n")]
    pub lln_n: usize,
    #[serde(default = "default_lln_seeds")]
    pub lln_seeds: usize,
    #[serde(default = "default_lln_t_end")]
    pub lln_t_end: f64,
    /// Supplies at which the non-existence family is swept.
    #[serde(default = "default_sweep")]
    pub sweep: Vec<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            lln: false,
            lln_n: default_lln_n(),
            lln_seeds: default_lln_seeds(),
            lln_t_end: default_lln_t_end(),
            sweep: default_sweep(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

/// One run: parameters, optional initial state, and one block per command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrate: Option<IntegrateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady: Option<SteadyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miranda: Option<MirandaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// Command-line overrides applied on top of a file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub eps: Option<f64>,
    pub grid: Option<usize>,
    pub prefix: Option<String>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            if let Some(s) = self.simulate.as_mut() {
                s.seed = seed;
            }
            self.steady.get_or_insert_with(SteadyConfig::default).seed = seed;
        }
        if let Some(tol) = o.tol {
            self.steady.get_or_insert_with(SteadyConfig::default).tol = tol;
            self.verify.get_or_insert_with(VerifyConfig::default).tol = tol;
        }
        if let Some(eps) = o.eps {
            self.miranda.get_or_insert_with(MirandaConfig::default).eps = eps;
        }
        if let Some(grid) = o.grid {
            self.miranda.get_or_insert_with(MirandaConfig::default).grid = grid;
        }
        if let Some(prefix) = &o.prefix {
            self.output = Some(OutputConfig {
                prefix: prefix.clone(),
            });
        }
    }

    pub fn prefix(&self) -> &str {
        self.output.as_ref().map_or("out", |o| o.prefix.as_str())
    }

    /// The `[initial]` block, or [`default_initial`] when absent.
    pub fn initial_state(&self) -> StateDistribution {
        match &self.initial {
            Some(init) => StateDistribution::new(self.params.class(), init.values.clone()),
            None => default_initial(&self.params),
        }
    }
}

/// A feasible starting point: every conserved group split evenly between
/// high and low types. For the heterogeneous market, mass sits on 0- and
/// 1-tick holders when `s <= 1` and on 1- and 2-tick holders otherwise.
pub fn default_initial(params: &ModelParams) -> StateDistribution {
    let values = match params {
        ModelParams::NonSegmented(p) => {
            let free = 1.0 - p.total_mass();
            let mut v = vec![0.5 * free, 0.5 * free];
            for &m in &p.m {
                v.extend([0.5 * m, 0.5 * m]);
            }
            v
        }
        ModelParams::PartiallySegmented(p) => {
            let free = 1.0 - p.total_mass();
            let k = p.k() as f64;
            let mut v = vec![0.5 * free / k; p.k()];
            v.push(0.5 * free);
            for &m in &p.m {
                v.extend([0.5 * m, 0.5 * m]);
            }
            v
        }
        ModelParams::Heterogeneous(p) => {
            let s = p.s;
            if s <= 1.0 {
                let (zero, one) = (0.5 * (1.0 - s), 0.5 * s);
                vec![zero, one, 0.0, zero, one, 0.0]
            } else {
                let (one, two) = (0.5 * (2.0 - s), 0.5 * (s - 1.0));
                vec![0.0, one, two, 0.0, one, two]
            }
        }
    };
    StateDistribution::new(params.class(), values)
}
