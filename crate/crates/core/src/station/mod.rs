//! Stochastic operation of a modular charging station.
//!
//! The station is a set of blocks; each block has `modules_per_block`
//! dc-dc charging modules feeding `posts_per_block` posts through a matrix
//! contactor. Module `m` belongs to block `m / modules_per_block`, post `p`
//! to block `p / posts_per_block`.

mod allocation;
mod loads;
mod session;

pub use allocation::{allocate_modules, block_loss, optimal_module_count, AllocationResult, EfficiencyMap};
pub use loads::build_post_loads;
pub use session::{
    assign_posts, charging_power, integrate_session, sample_sessions, EvSession,
    SessionDistributions,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationConfig {
    pub n_blocks: usize,
    pub modules_per_block: usize,
    pub posts_per_block: usize,
    /// Rated output of one charging module, W.
    pub module_rating_w: f64,
    pub sample_period_s: f64,
    pub horizon_s: f64,
    pub ambient_temp_c: f64,
    pub rng_seed: u64,
}

impl Default for StationConfig {
    fn default() -> Self {
        Self {
            n_blocks: 3,
            modules_per_block: 3,
            posts_per_block: 2,
            module_rating_w: 60_000.0,
            sample_period_s: 7.2,
            horizon_s: 86_400.0,
            ambient_temp_c: 20.0,
            rng_seed: 42,
        }
    }
}

impl StationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.modules_per_block == 0 || self.posts_per_block == 0 {
            return Err(Error::Config("block, module and post counts must be >= 1".into()));
        }
        if !(self.module_rating_w > 0.0 && self.module_rating_w.is_finite()) {
            return Err(Error::Config("module_rating_w must be positive".into()));
        }
        if !(self.sample_period_s > 0.0 && self.sample_period_s.is_finite()) {
            return Err(Error::Config("sample_period_s must be positive".into()));
        }
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(Error::Config("horizon_s must be positive".into()));
        }
        let steps = (self.horizon_s / self.sample_period_s).round();
        if steps < 1.0 || (steps * self.sample_period_s - self.horizon_s).abs() > 1e-9 * self.horizon_s {
            return Err(Error::Config(format!(
                "horizon_s ({}) is not an integer multiple of sample_period_s ({})",
                self.horizon_s, self.sample_period_s
            )));
        }
        if !self.ambient_temp_c.is_finite() {
            return Err(Error::Config("ambient_temp_c must be finite".into()));
        }
        Ok(())
    }

    /// Number of samples in the horizon.
    pub fn n_steps(&self) -> usize {
        (self.horizon_s / self.sample_period_s).round() as usize
    }

    pub fn n_modules(&self) -> usize {
        self.n_blocks * self.modules_per_block
    }

    pub fn n_posts(&self) -> usize {
        self.n_blocks * self.posts_per_block
    }

    pub fn block_of_post(&self, post: usize) -> usize {
        post / self.posts_per_block
    }

    pub fn block_of_module(&self, module: usize) -> usize {
        module / self.modules_per_block
    }

    pub fn time_of_step(&self, step: usize) -> f64 {
        step as f64 * self.sample_period_s
    }
}
