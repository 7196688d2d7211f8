//! Structured-text (TOML) description of a synthetic scenario.
//!
//! ```toml
//! [geometry]
//! num_elements = 24
//! spacing_wavelengths = 0.5
//! partition = [6, 6, 6, 6]
//!
//! [sources]
//! doas_deg = [0.0, 15.0]
//! powers = [1.0, 1.0]      # optional, defaults to unit power
//!
//! [noise]
//! snr_db = 20.0            # inf for noiseless
//!
//! [phases]
//! mode = "random"          # or "fixed" together with values_rad
//! ```

use serde::{Deserialize, Serialize};

use super::{make_ula, PhaseMode, Scenario};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub num_elements: usize,
    #[serde(default = "half_wavelength")]
    pub spacing_wavelengths: f64,
    pub partition: Vec<usize>,
}

fn half_wavelength() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesConfig {
    pub doas_deg: Vec<f64>,
    #[serde(default)]
    pub powers: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasesConfig {
    #[serde(default = "random_mode")]
    pub mode: String,
    #[serde(default)]
    pub values_rad: Vec<f64>,
}

fn random_mode() -> String {
    "random".to_string()
}

impl Default for PhasesConfig {
    fn default() -> Self {
        Self {
            mode: random_mode(),
            values_rad: Vec::new(),
        }
    }
}

/// Geometry, sources, noise and phase blocks of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub geometry: GeometryConfig,
    pub sources: SourcesConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub phases: PhasesConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let g = &self.geometry;
        if g.num_elements == 0 {
            return Err(Error::config("geometry.num_elements", "must be at least 1"));
        }
        let geometry = make_ula(g.num_elements, g.spacing_wavelengths, &g.partition).map_err(
            |e| match e {
                Error::Config { field, reason } => Error::config(format!("geometry.{field}"), reason),
                other => other,
            },
        )?;
        let phase_mode = match self.phases.mode.as_str() {
            "random" => PhaseMode::RandomUniform,
            "fixed" => PhaseMode::Fixed(self.phases.values_rad.clone()),
            other => {
                return Err(Error::config(
                    "phases.mode",
                    format!("unknown mode `{other}` (expected `random` or `fixed`)"),
                ))
            }
        };
        let q = self.sources.doas_deg.len();
        let scenario = Scenario {
            geometry,
            source_doas: self.sources.doas_deg.clone(),
            source_powers: self.sources.powers.clone().unwrap_or_else(|| vec![1.0; q]),
            snr_db: self.noise.snr_db,
            phase_mode,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
