//! Sweep description file.
//!
//! ```toml
//! [geometry]
//! num_elements = 24
//! partition = [6, 6, 6, 6]
//!
//! [sources]
//! doas_deg = [0.0, 15.0]
//!
//! [grid]
//! start_deg = -60.0
//! stop_deg = 60.0
//! step_deg = 0.5
//!
//! [estimator]
//! mu = 1.0
//! c = 2.0
//!
//! [music]
//! smoothing_length = 4
//!
//! [sweep]
//! snr_db = [0, 5, 10, 15, 20, 25, 30]
//! n_trials = 250
//! methods = ["Proposed1", "Proposed2", "SparsityOnly", "MUSIC"]
//! base_seed = 1
//! ```
//!
//! `[solver]` accepts any field of [`SolverOptions`]; omitted fields keep
//! their defaults.

use serde::{Deserialize, Serialize};

use crate::array_model::{
    uniform_grid, GeometryConfig, NoiseConfig, PhasesConfig, Scenario, ScenarioConfig, SourcesConfig,
};
use crate::baselines::MusicOptions;
use crate::error::{Error, Result};
use crate::pipeline::{EstimatorParams, Method};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_grid_start")]
    pub start_deg: f64,
    #[serde(default = "default_grid_stop")]
    pub stop_deg: f64,
    #[serde(default = "default_grid_step")]
    pub step_deg: f64,
}

fn default_grid_start() -> f64 {
    -60.0
}

fn default_grid_stop() -> f64 {
    60.0
}

fn default_grid_step() -> f64 {
    0.5
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            start_deg: default_grid_start(),
            stop_deg: default_grid_stop(),
            step_deg: default_grid_step(),
        }
    }
}

impl GridConfig {
    pub fn angles(&self) -> Result<Vec<f64>> {
        uniform_grid(self.start_deg, self.stop_deg, self.step_deg).map_err(|e| match e {
            Error::Config { reason, .. } => Error::config("grid", reason),
            other => other,
        })
    }
}

/// Convex-program weights; the noise variance comes from each SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_budget_floor")]
    pub budget_floor: f64,
}

fn default_mu() -> f64 {
    EstimatorParams::default().mu
}

fn default_c() -> f64 {
    EstimatorParams::default().c
}

fn default_budget_floor() -> f64 {
    EstimatorParams::default().budget_floor
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            mu: default_mu(),
            c: default_c(),
            budget_floor: default_budget_floor(),
        }
    }
}

impl EstimatorConfig {
    pub fn params(&self, sigma2: f64) -> EstimatorParams {
        EstimatorParams {
            mu: self.mu,
            c: self.c,
            sigma2,
            budget_floor: self.budget_floor,
        }
    }
}

/// MUSIC settings; the assumed source count is the scenario's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MusicConfig {
    #[serde(default = "default_smoothing_length")]
    pub smoothing_length: usize,
    #[serde(default = "default_true")]
    pub forward_backward: bool,
}

fn default_smoothing_length() -> usize {
    MusicOptions::new(1).smoothing_length
}

fn default_true() -> bool {
    true
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self {
            smoothing_length: default_smoothing_length(),
            forward_backward: true,
        }
    }
}

impl MusicConfig {
    pub fn options(&self, q: usize) -> MusicOptions {
        MusicOptions {
            q,
            smoothing_length: self.smoothing_length,
            forward_backward: self.forward_backward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub snr_db: Vec<f64>,
    pub n_trials: usize,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub base_seed: u64,
    /// Keep every spectrum in the trial records.
    #[serde(default)]
    pub keep_spectra: bool,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// Everything needed to reproduce a Monte Carlo sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub geometry: GeometryConfig,
    pub sources: SourcesConfig,
    #[serde(default)]
    pub phases: PhasesConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub music: MusicConfig,
    pub sweep: SweepSettings,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("sweep config is always serialisable")
    }

    /// Scenario template at the given SNR.
    pub fn scenario(&self, snr_db: f64) -> Result<Scenario> {
        ScenarioConfig {
            geometry: self.geometry.clone(),
            sources: self.sources.clone(),
            noise: NoiseConfig { snr_db },
            phases: self.phases.clone(),
        }
        .to_scenario()
    }

    pub fn num_sources(&self) -> usize {
        self.sources.doas_deg.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        if s.snr_db.is_empty() {
            return Err(Error::config("sweep.snr_db", "at least one SNR point is required"));
        }
        if s.snr_db.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::config("sweep.snr_db", "SNR values must be numbers or +inf"));
        }
        if s.n_trials == 0 {
            return Err(Error::config("sweep.n_trials", "must be at least 1"));
        }
        if s.methods.is_empty() {
            return Err(Error::config("sweep.methods", "at least one method is required"));
        }
        for (i, m) in s.methods.iter().enumerate() {
            if s.methods[..i].contains(m) {
                return Err(Error::config("sweep.methods", format!("{m} listed twice")));
            }
        }
        self.scenario(s.snr_db[0])?;
        self.grid.angles()?;
        self.estimator.params(0.0).validate()?;
        self.solver.validate()?;
        if s.methods.contains(&Method::Music) {
            let sizes = &self.geometry.partition;
            let m = sizes.iter().copied().min().unwrap_or(0);
            self.music.options(self.num_sources()).validate(m)?;
        }
        Ok(())
    }
}
