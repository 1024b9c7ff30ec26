//! Lumped RC thermal model of a charging module.
//!
//! The module loss is injected through `r_eq` into a heat-sink node with
//! capacitance `c_hs`, which drains to ambient through `r_hs`:
//!
//! ```text
//! c_hs · dT/dt = p_loss − (T − t_amb) / r_hs
//! ```
//!
//! The recorded temperature adds the drop across `r_eq` to the node
//! temperature so that both resistances shape the observed signal.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Device-to-heat-sink resistance, K/W.
    pub r_eq: f64,
    /// Heat-sink-to-ambient resistance, K/W.
    pub r_hs: f64,
    /// Heat-sink capacitance, J/K.
    pub c_hs: f64,
    pub t_amb: f64,
}

impl ThermalParams {
    pub fn tau(&self) -> f64 {
        self.r_hs * self.c_hs
    }

    pub fn is_valid(&self) -> bool {
        self.r_eq > 0.0
            && self.r_hs > 0.0
            && self.c_hs > 0.0
            && self.tau() > 0.0
            && self.t_amb.is_finite()
            && self.r_eq.is_finite()
            && self.r_hs.is_finite()
            && self.c_hs.is_finite()
    }

    /// Same module with its heat-sink resistance scaled, capacitance kept.
    pub fn with_r_hs_scaled(&self, scale: f64) -> Self {
        Self { r_hs: self.r_hs * scale, ..*self }
    }
}

/// Population statistics for per-module parameter draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalPriors {
    pub r_eq_mean: f64,
    pub r_hs_mean: f64,
    pub tau_mean_s: f64,
    /// Standard deviation of every parameter as a fraction of its mean.
    pub rel_std: f64,
}

impl Default for ThermalPriors {
    fn default() -> Self {
        Self { r_eq_mean: 1e-3, r_hs_mean: 1.5e-3, tau_mean_s: 120.0, rel_std: 0.05 }
    }
}

impl ThermalPriors {
    pub fn validate(&self) -> Result<()> {
        let means = [self.r_eq_mean, self.r_hs_mean, self.tau_mean_s];
        if means.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Config("thermal parameter means must be positive".into()));
        }
        if !(self.rel_std.is_finite() && self.rel_std >= 0.0) {
            return Err(Error::Config("thermal rel_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Draw from N(mean, rel_std·mean), redrawn until above half the mean.
fn truncated_draw<R: Rng + ?Sized>(rng: &mut R, mean: f64, rel_std: f64) -> f64 {
    let dist = Normal::new(mean, rel_std * mean).expect("validated priors");
    loop {
        let x = dist.sample(rng);
        if x > 0.5 * mean {
            return x;
        }
    }
}

/// Samples one module's parameters: `r_eq`, `r_hs` and the time constant are
/// drawn independently; `c_hs` follows as `tau / r_hs`.
pub fn sample_params<R: Rng + ?Sized>(
    rng: &mut R,
    priors: &ThermalPriors,
    t_amb: f64,
) -> Result<ThermalParams> {
    priors.validate()?;
    let r_eq = truncated_draw(rng, priors.r_eq_mean, priors.rel_std);
    let r_hs = truncated_draw(rng, priors.r_hs_mean, priors.rel_std);
    let tau = truncated_draw(rng, priors.tau_mean_s, priors.rel_std);
    Ok(ThermalParams { r_eq, r_hs, c_hs: tau / r_hs, t_amb })
}

/// Heat-sink node temperature, °C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalState {
    pub t_node: f64,
}

impl ThermalState {
    pub fn ambient(params: &ThermalParams) -> Self {
        Self { t_node: params.t_amb }
    }
}

/// Advances the node over `dt` seconds with `p_loss` held constant, using the
/// exact solution of the first-order ODE.
pub fn step(state: ThermalState, p_loss: f64, dt: f64, params: &ThermalParams) -> Result<ThermalState> {
    if !(state.t_node.is_finite() && p_loss.is_finite() && dt.is_finite()) {
        return Err(Error::InvalidInput("non-finite thermal step input".into()));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let decay = (-dt / params.tau()).exp();
    Ok(ThermalState { t_node: advance(state.t_node, p_loss, decay, params) })
}

#[inline]
fn advance(t_node: f64, p_loss: f64, decay: f64, params: &ThermalParams) -> f64 {
    params.t_amb + (t_node - params.t_amb) * decay + params.r_hs * p_loss * (1.0 - decay)
}

/// Recorded temperature: node temperature plus the drop across `r_eq`.
pub fn measured_temperature(state: ThermalState, p_loss: f64, params: &ThermalParams) -> f64 {
    state.t_node + params.r_eq * p_loss
}

/// Recorded temperature series for a loss series sampled every `dt`
/// seconds, starting from ambient. Sample `k` reflects the node after loss
/// `k` has acted over one period, plus the `r_eq` drop at loss `k`.
pub fn simulate_module(loss_series: &[f64], params: &ThermalParams, dt: f64) -> Result<Vec<f64>> {
    if !params.is_valid() {
        return Err(Error::InvalidInput(format!("invalid thermal parameters {params:?}")));
    }
    let mut state = ThermalState::ambient(params);
    loss_series
        .iter()
        .map(|&p| {
            state = step(state, p, dt, params)?;
            Ok(measured_temperature(state, p, params))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_rng, Stream};

    fn mean_params() -> ThermalParams {
        ThermalParams { r_eq: 1e-3, r_hs: 1.5e-3, c_hs: 80_000.0, t_amb: 20.0 }
    }

    #[test]
    fn zero_spread_returns_means() {
        let priors = ThermalPriors { rel_std: 0.0, ..Default::default() };
        let p = sample_params(&mut seeded_rng(0, Stream::ThermalParams), &priors, 20.0).unwrap();
        assert_eq!(p.r_eq, 1e-3);
        assert_eq!(p.r_hs, 1.5e-3);
        assert!((p.c_hs - 80_000.0).abs() < 1e-9);
        assert_eq!(p.t_amb, 20.0);
    }

    #[test]
    fn sample_mean_converges() {
        let mut rng = seeded_rng(11, Stream::ThermalParams);
        let priors = ThermalPriors::default();
        let draws: Vec<_> = (0..10_000).map(|_| sample_params(&mut rng, &priors, 20.0).unwrap()).collect();
        let mean = draws.iter().map(|p| p.r_hs).sum::<f64>() / draws.len() as f64;
        assert!((mean / 1.5e-3 - 1.0).abs() < 0.01, "mean {mean}");
        assert!(draws.iter().all(ThermalParams::is_valid));
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = mean_params();
        let s = step(ThermalState::ambient(&p), 0.0, 7.2, &p).unwrap();
        assert_eq!(s.t_node, 20.0);
    }

    #[test]
    fn long_step_reaches_steady_state() {
        let p = mean_params();
        let s = step(ThermalState::ambient(&p), 2000.0, 1e6, &p).unwrap();
        assert!((s.t_node - 23.0).abs() < 1e-12);
    }

    #[test]
    fn one_sample_step_value() {
        let p = mean_params();
        let s = step(ThermalState { t_node: 20.0 }, 2000.0, 7.2, &p).unwrap();
        assert!((s.t_node - 20.174_706_399_247_253).abs() < 1e-9, "{}", s.t_node);
    }

    #[test]
    fn step_rejects_bad_input() {
        let p = mean_params();
        assert!(step(ThermalState { t_node: f64::NAN }, 0.0, 7.2, &p).is_err());
        assert!(step(ThermalState { t_node: 20.0 }, f64::INFINITY, 7.2, &p).is_err());
        assert!(step(ThermalState { t_node: 20.0 }, 0.0, 0.0, &p).is_err());
    }

    #[test]
    fn measured_adds_r_eq_drop() {
        let p = mean_params();
        assert_eq!(measured_temperature(ThermalState { t_node: 23.0 }, 0.0, &p), 23.0);
        assert!((measured_temperature(ThermalState { t_node: 23.0 }, 2000.0, &p) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn idle_module_stays_at_ambient() {
        let temps = simulate_module(&[0.0; 50], &mean_params(), 7.2).unwrap();
        assert_eq!(temps.len(), 50);
        assert!(temps.iter().all(|&t| t == 20.0));
    }

    #[test]
    fn held_step_settles_to_steady_state() {
        let p = mean_params();
        // 5 tau = 600 s ≈ 84 samples
        let temps = simulate_module(&[2000.0; 84], &p, 7.2).unwrap();
        let steady = 20.0 + (1.5e-3 + 1e-3) * 2000.0;
        assert!((temps[83] - steady).abs() / (steady - 20.0) < 0.01);
    }

    #[test]
    fn r_hs_scale_scales_node_rise() {
        let p = mean_params();
        let hot = p.with_r_hs_scaled(1.2);
        let base = step(ThermalState::ambient(&p), 1000.0, 1e7, &p).unwrap().t_node - 20.0;
        let scaled = step(ThermalState::ambient(&hot), 1000.0, 1e7, &hot).unwrap().t_node - 20.0;
        assert!((scaled / base - 1.2).abs() < 1e-12);
        assert_eq!(hot.c_hs, p.c_hs);
    }
}
