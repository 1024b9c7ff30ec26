//! Simulation configuration file (TOML).
//!
//! ```toml
//! [station]
//! n_blocks = 3
//! modules_per_block = 3
//! posts_per_block = 2
//! module_rating_w = 60000.0
//! sample_period_s = 7.2
//! horizon_s = 86400.0
//! ambient_temp_c = 20.0
//! rng_seed = 42
//!
//! [sessions]
//! peak_power_mean_kw = 150.0
//! peak_power_std_kw = 20.0
//! # ... remaining means/stds, plus 24 hourly Poisson rates
//! hourly_arrival_rates = [0.5, 0.5, ...]
//!
//! [efficiency]
//! k0_w = 300.0
//! k1 = 0.01
//! k2_per_w = 2.5e-7
//!
//! [thermal]
//! r_eq_mean = 0.001
//! r_hs_mean = 0.0015
//! tau_mean_s = 120.0
//! rel_std = 0.05
//! ```
//!
//! Every table and key is optional; missing entries take the defaults above.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::station::{EfficiencyMap, SessionDistributions, StationConfig};
use crate::thermal::ThermalPriors;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub station: StationConfig,
    pub sessions: SessionDistributions,
    pub efficiency: EfficiencyMap,
    pub thermal: ThermalPriors,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.station.validate()?;
        self.sessions.validate()?;
        self.efficiency.validate(self.station.module_rating_w)?;
        self.thermal.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
