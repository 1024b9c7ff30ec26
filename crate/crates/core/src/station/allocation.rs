//! Efficiency-driven assignment of charging modules to block load.

use serde::{Deserialize, Serialize};

use super::StationConfig;
use crate::error::{Error, Result};

/// Quadratic module loss model, `loss(p) = k0 + k1·p + k2·p²` for an enabled
/// module delivering `p` watts; a disabled module dissipates nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyMap {
    /// Fixed loss while enabled, W.
    pub k0_w: f64,
    pub k1: f64,
    /// Quadratic coefficient, 1/W.
    pub k2_per_w: f64,
}

impl Default for EfficiencyMap {
    fn default() -> Self {
        Self { k0_w: 300.0, k1: 0.01, k2_per_w: 2.5e-7 }
    }
}

impl EfficiencyMap {
    pub fn loss(&self, power_w: f64) -> f64 {
        if power_w <= 0.0 {
            0.0
        } else {
            self.k0_w + self.k1 * power_w + self.k2_per_w * power_w * power_w
        }
    }

    /// Output over input power for an enabled module.
    pub fn efficiency(&self, power_w: f64) -> f64 {
        power_w / (power_w + self.loss(power_w))
    }

    /// Checks the loss is non-negative on `(0, rating]`.
    pub fn validate(&self, rating_w: f64) -> Result<()> {
        let coeffs = [self.k0_w, self.k1, self.k2_per_w];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("efficiency coefficients must be finite".into()));
        }
        let mut probes = vec![0.0, rating_w];
        if self.k2_per_w > 0.0 {
            let vertex = -self.k1 / (2.0 * self.k2_per_w);
            if vertex > 0.0 && vertex < rating_w {
                probes.push(vertex);
            }
        }
        let raw = |p: f64| self.k0_w + self.k1 * p + self.k2_per_w * p * p;
        if probes.into_iter().any(|p| raw(p) < 0.0) {
            return Err(Error::Config("efficiency map yields negative loss".into()));
        }
        Ok(())
    }
}

/// Total loss when `load_w` is split equally across `n` enabled modules.
pub fn block_loss(load_w: f64, n: usize, map: &EfficiencyMap) -> f64 {
    n as f64 * map.loss(load_w / n as f64)
}

/// Number of modules that serves `load_w` with the least total loss among
/// all counts whose combined rating covers the load. Ties go to fewer
/// modules; `None` for an idle block.
pub fn optimal_module_count(
    load_w: f64,
    max_modules: usize,
    rating_w: f64,
    map: &EfficiencyMap,
) -> Option<usize> {
    if load_w <= 0.0 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for n in 1..=max_modules {
        if (n as f64) * rating_w < load_w {
            continue;
        }
        let loss = block_loss(load_w, n, map);
        if best.is_none_or(|(_, best_loss)| loss < best_loss) {
            best = Some((n, loss));
        }
    }
    best.map(|(n, _)| n)
}

/// Per-module assigned power and loss plus per-post unserved power.
/// All series are indexed `[unit][step]` in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub assigned_power: Vec<Vec<f64>>,
    pub module_loss: Vec<Vec<f64>>,
    pub unserved_power: Vec<Vec<f64>>,
}

/// Serves each block's load with the loss-minimizing number of modules,
/// always enabling the lowest-index modules first and splitting power
/// equally. Load beyond the block's total rating is recorded as unserved,
/// apportioned to posts by their share of the request.
pub fn allocate_modules(
    post_loads: &[Vec<f64>],
    config: &StationConfig,
    map: &EfficiencyMap,
) -> Result<AllocationResult> {
    config.validate()?;
    map.validate(config.module_rating_w)?;
    let n_steps = config.n_steps();
    if post_loads.len() != config.n_posts() {
        return Err(Error::Dimension { expected: config.n_posts(), actual: post_loads.len() });
    }
    if let Some(bad) = post_loads.iter().find(|p| p.len() != n_steps) {
        return Err(Error::Dimension { expected: n_steps, actual: bad.len() });
    }
    if post_loads.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput("post loads must be finite and >= 0".into()));
    }

    let mpb = config.modules_per_block;
    let ppb = config.posts_per_block;
    let block_capacity = mpb as f64 * config.module_rating_w;
    let mut assigned_power = vec![vec![0.0; n_steps]; config.n_modules()];
    let mut module_loss = vec![vec![0.0; n_steps]; config.n_modules()];
    let mut unserved_power = vec![vec![0.0; n_steps]; config.n_posts()];

    for block in 0..config.n_blocks {
        let posts = block * ppb..(block + 1) * ppb;
        for step in 0..n_steps {
            let requested: f64 = post_loads[posts.clone()].iter().map(|p| p[step]).sum();
            let served = requested.min(block_capacity);
            let shortfall = requested - served;
            if shortfall > 0.0 {
                for post in posts.clone() {
                    unserved_power[post][step] = shortfall * post_loads[post][step] / requested;
                }
            }
            let Some(n) = optimal_module_count(served, mpb, config.module_rating_w, map) else {
                continue;
            };
            let share = served / n as f64;
            for module in block * mpb..block * mpb + n {
                assigned_power[module][step] = share;
                module_loss[module][step] = map.loss(share);
            }
        }
    }
    Ok(AllocationResult { assigned_power, module_loss, unserved_power })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_block() -> StationConfig {
        StationConfig { n_blocks: 1, horizon_s: 7.2 * 4.0, ..Default::default() }
    }

    fn brute_force(load: f64, map: &EfficiencyMap) -> usize {
        // enumerate all feasible counts, keep the cheapest
        let totals: Vec<(usize, f64)> = (1..=3usize)
            .filter(|&n| n as f64 * 60_000.0 >= load)
            .map(|n| (n, n as f64 * (map.k0_w + map.k1 * load / n as f64 + map.k2_per_w * (load / n as f64).powi(2))))
            .collect();
        let min = totals.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        totals.iter().find(|t| t.1 == min).unwrap().0
    }

    #[test]
    fn default_map_efficiency_is_plausible() {
        let map = EfficiencyMap::default();
        assert!((map.efficiency(30_000.0) - 0.9732).abs() < 1e-3);
        assert!((map.efficiency(60_000.0) - 0.9709).abs() < 1e-3);
        assert_eq!(map.loss(0.0), 0.0);
        map.validate(60_000.0).unwrap();
        let bad = EfficiencyMap { k0_w: -10.0, k1: 0.0, k2_per_w: 0.0 };
        assert!(bad.validate(60_000.0).is_err());
    }

    #[test]
    fn idle_block_has_no_active_modules() {
        let cfg = one_block();
        let loads = vec![vec![0.0; 4]; 2];
        let out = allocate_modules(&loads, &cfg, &EfficiencyMap::default()).unwrap();
        assert!(out.assigned_power.iter().flatten().all(|&p| p == 0.0));
        assert!(out.module_loss.iter().flatten().all(|&p| p == 0.0));
    }

    #[test]
    fn light_load_uses_only_first_module() {
        let map = EfficiencyMap::default();
        assert_eq!(brute_force(40_000.0, &map), 1);
        let cfg = one_block();
        let loads = vec![vec![40_000.0; 4], vec![0.0; 4]];
        let out = allocate_modules(&loads, &cfg, &map).unwrap();
        assert_eq!(out.assigned_power[0][0], 40_000.0);
        assert_eq!(out.assigned_power[1][0], 0.0);
        assert_eq!(out.module_loss[0][0], 300.0 + 400.0 + 400.0);
    }

    #[test]
    fn module_counts_match_enumeration() {
        // with k0 = 300 W the second module pays for itself above ~49 kW and
        // the third above ~85 kW
        let map = EfficiencyMap::default();
        for (load, expected) in [(40_000.0, 1), (50_000.0, 2), (80_000.0, 2), (100_000.0, 3), (170_000.0, 3)] {
            assert_eq!(brute_force(load, &map), expected, "load {load}");
            assert_eq!(optimal_module_count(load, 3, 60_000.0, &map), Some(expected), "load {load}");
        }
    }

    #[test]
    fn rating_cap_forces_second_module() {
        // high fixed loss makes one module preferable whenever it is feasible
        let map = EfficiencyMap { k0_w: 5_000.0, ..Default::default() };
        assert_eq!(optimal_module_count(59_000.0, 3, 60_000.0, &map), Some(1));
        assert_eq!(optimal_module_count(100_000.0, 3, 60_000.0, &map), Some(2));
        let cfg = one_block();
        let loads = vec![vec![70_000.0; 4], vec![30_000.0; 4]];
        let out = allocate_modules(&loads, &cfg, &map).unwrap();
        assert_eq!(out.assigned_power[0][2], 50_000.0);
        assert_eq!(out.assigned_power[1][2], 50_000.0);
        assert_eq!(out.assigned_power[2][2], 0.0);
    }

    #[test]
    fn overload_is_recorded_as_unserved() {
        let cfg = one_block();
        let loads = vec![vec![150_000.0; 4], vec![90_000.0; 4]];
        let out = allocate_modules(&loads, &cfg, &EfficiencyMap::default()).unwrap();
        for m in 0..3 {
            assert_eq!(out.assigned_power[m][0], 60_000.0);
        }
        let unserved = out.unserved_power[0][0] + out.unserved_power[1][0];
        assert!((unserved - 60_000.0).abs() < 1e-9);
        assert!((out.unserved_power[0][0] - 37_500.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_wrong_shapes() {
        let cfg = one_block();
        let map = EfficiencyMap::default();
        assert!(allocate_modules(&[vec![0.0; 4]], &cfg, &map).is_err());
        assert!(allocate_modules(&[vec![0.0; 4], vec![0.0; 3]], &cfg, &map).is_err());
        assert!(allocate_modules(&[vec![-1.0; 4], vec![0.0; 4]], &cfg, &map).is_err());
    }
}
