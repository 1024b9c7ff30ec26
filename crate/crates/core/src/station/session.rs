//! EV charging sessions: sampling, CC/CV charging curve, and SoC integration.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::StationConfig;
use crate::error::{Error, Result};

const SECONDS_PER_HOUR: f64 = 3600.0;
const MAX_REJECTIONS: usize = 100;

/// Bounds applied to sampled peak power, kW.
pub const PEAK_POWER_BOUNDS_KW: (f64, f64) = (10.0, 300.0);
/// Bounds applied to sampled battery capacity, kWh.
pub const CAPACITY_BOUNDS_KWH: (f64, f64) = (20.0, 200.0);

/// One vehicle's two-stage charging curve plus its arrival metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    /// Seconds since midnight.
    pub arrival_time_s: f64,
    pub post_id: usize,
    pub battery_capacity_kwh: f64,
    pub soc_init: f64,
    /// SoC at which the constant-power stage ends.
    pub soc_cc_end: f64,
    pub soc_final: f64,
    pub peak_power_kw: f64,
    pub decay_factor: f64,
}

impl EvSession {
    pub fn is_valid(&self) -> bool {
        0.0 <= self.soc_init
            && self.soc_init < self.soc_cc_end
            && self.soc_cc_end <= self.soc_final
            && self.soc_final <= 1.0
            && self.peak_power_kw > 0.0
            && self.battery_capacity_kwh > 0.0
            && self.decay_factor > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionDistributions {
    pub peak_power_mean_kw: f64,
    pub peak_power_std_kw: f64,
    pub capacity_mean_kwh: f64,
    pub capacity_std_kwh: f64,
    pub soc_init_mean: f64,
    pub soc_init_std: f64,
    pub soc_cc_end_mean: f64,
    pub soc_cc_end_std: f64,
    pub soc_final_mean: f64,
    pub soc_final_std: f64,
    pub decay_factor_mean: f64,
    pub decay_factor_std: f64,
    /// Poisson arrival rate for each hour of the day, sessions/hour.
    pub hourly_arrival_rates: Vec<f64>,
}

impl Default for SessionDistributions {
    fn default() -> Self {
        Self {
            peak_power_mean_kw: 150.0,
            peak_power_std_kw: 20.0,
            capacity_mean_kwh: 90.0,
            capacity_std_kwh: 10.0,
            soc_init_mean: 0.3,
            soc_init_std: 0.05,
            soc_cc_end_mean: 0.8,
            soc_cc_end_std: 0.03,
            soc_final_mean: 0.95,
            soc_final_std: 0.02,
            decay_factor_mean: 2.0,
            decay_factor_std: 0.2,
            hourly_arrival_rates: default_hourly_rates(),
        }
    }
}

fn default_hourly_rates() -> Vec<f64> {
    (0..24)
        .map(|h| match h {
            0..=5 => 0.5,
            8..=19 => 3.0,
            _ => 1.0,
        })
        .collect()
}

impl SessionDistributions {
    pub fn validate(&self) -> Result<()> {
        let stds = [
            self.peak_power_std_kw,
            self.capacity_std_kwh,
            self.soc_init_std,
            self.soc_cc_end_std,
            self.soc_final_std,
            self.decay_factor_std,
        ];
        if stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("standard deviations must be finite and >= 0".into()));
        }
        let means = [
            self.peak_power_mean_kw,
            self.capacity_mean_kwh,
            self.soc_init_mean,
            self.soc_cc_end_mean,
            self.soc_final_mean,
            self.decay_factor_mean,
        ];
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("distribution means must be finite".into()));
        }
        if self.hourly_arrival_rates.len() != 24 {
            return Err(Error::Config(format!(
                "hourly_arrival_rates needs 24 entries, got {}",
                self.hourly_arrival_rates.len()
            )));
        }
        if self.hourly_arrival_rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config("arrival rates must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, arrival_time_s: f64) -> EvSession {
        let normal = |mean: f64, std: f64| Normal::new(mean, std).expect("validated std");
        let peak = normal(self.peak_power_mean_kw, self.peak_power_std_kw);
        let capacity = normal(self.capacity_mean_kwh, self.capacity_std_kwh);
        let soc_init = normal(self.soc_init_mean, self.soc_init_std);
        let soc_cc_end = normal(self.soc_cc_end_mean, self.soc_cc_end_std);
        let soc_final = normal(self.soc_final_mean, self.soc_final_std);
        let decay = normal(self.decay_factor_mean, self.decay_factor_std);

        let mut candidate = EvSession {
            arrival_time_s,
            post_id: 0,
            battery_capacity_kwh: 0.0,
            soc_init: 0.0,
            soc_cc_end: 0.0,
            soc_final: 0.0,
            peak_power_kw: 0.0,
            decay_factor: 0.0,
        };
        for _ in 0..=MAX_REJECTIONS {
            candidate.peak_power_kw = peak.sample(rng);
            candidate.battery_capacity_kwh = capacity.sample(rng);
            candidate.soc_init = soc_init.sample(rng);
            candidate.soc_cc_end = soc_cc_end.sample(rng);
            candidate.soc_final = soc_final.sample(rng);
            candidate.decay_factor = decay.sample(rng);
            if candidate.is_valid() && within_bounds(&candidate) {
                return candidate;
            }
        }
        clamp_session(&mut candidate);
        candidate
    }
}

fn within_bounds(s: &EvSession) -> bool {
    (PEAK_POWER_BOUNDS_KW.0..=PEAK_POWER_BOUNDS_KW.1).contains(&s.peak_power_kw)
        && (CAPACITY_BOUNDS_KWH.0..=CAPACITY_BOUNDS_KWH.1).contains(&s.battery_capacity_kwh)
}

fn clamp_session(s: &mut EvSession) {
    log::debug!("session at t={:.0}s clamped after {MAX_REJECTIONS} rejections", s.arrival_time_s);
    s.peak_power_kw = s.peak_power_kw.clamp(PEAK_POWER_BOUNDS_KW.0, PEAK_POWER_BOUNDS_KW.1);
    s.battery_capacity_kwh =
        s.battery_capacity_kwh.clamp(CAPACITY_BOUNDS_KWH.0, CAPACITY_BOUNDS_KWH.1);
    s.soc_init = s.soc_init.clamp(0.0, 0.98);
    s.soc_cc_end = s.soc_cc_end.clamp(s.soc_init + 0.01, 1.0);
    s.soc_final = s.soc_final.clamp(s.soc_cc_end, 1.0);
    s.decay_factor = s.decay_factor.max(1e-3);
}

/// Requested power (kW) at a given SoC: constant `peak_power_kw` up to
/// `soc_cc_end`, then an exponential taper reaching
/// `peak · exp(-decay_factor)` at `soc_final`.
pub fn charging_power(session: &EvSession, soc: f64) -> Result<f64> {
    if !(soc >= session.soc_init && soc <= session.soc_final) {
        return Err(Error::InvalidInput(format!(
            "soc {soc} outside [{}, {}]",
            session.soc_init, session.soc_final
        )));
    }
    if soc < session.soc_cc_end || session.soc_final <= session.soc_cc_end {
        return Ok(session.peak_power_kw);
    }
    let progress = (soc - session.soc_cc_end) / (session.soc_final - session.soc_cc_end);
    Ok(session.peak_power_kw * (-session.decay_factor * progress).exp())
}

/// Marches SoC forward with explicit Euler on energy and returns the
/// requested power (kW) for each sample, stopping at `soc_final` or after
/// `max_steps` samples.
pub fn integrate_session(session: &EvSession, sample_period_s: f64, max_steps: usize) -> Vec<f64> {
    let dt_h = sample_period_s / SECONDS_PER_HOUR;
    let mut soc = session.soc_init;
    let mut series = Vec::new();
    while soc < session.soc_final && series.len() < max_steps {
        let power = charging_power(session, soc).expect("soc kept inside the session range");
        series.push(power);
        soc += power * dt_h / session.battery_capacity_kwh;
    }
    series
}

/// First simulation step at or after `time_s`.
pub(crate) fn start_step(time_s: f64, sample_period_s: f64) -> usize {
    (time_s / sample_period_s).ceil() as usize
}

/// Samples the day's arrivals and admits them first-come first-served.
///
/// Arrival counts per hour are Poisson with the configured hourly rate and
/// arrival instants are uniform within the hour. An arriving vehicle takes
/// the lowest-index free post; when every post is busy it is dropped. The
/// returned sessions are sorted by arrival time and carry their post id.
pub fn sample_sessions<R: Rng + ?Sized>(
    dists: &SessionDistributions,
    config: &StationConfig,
    rng: &mut R,
) -> Result<Vec<EvSession>> {
    dists.validate()?;
    config.validate()?;

    let mut arrivals = Vec::new();
    let n_hours = (config.horizon_s / SECONDS_PER_HOUR).ceil() as usize;
    for hour in 0..n_hours {
        let rate = dists.hourly_arrival_rates[hour % 24];
        if rate <= 0.0 {
            continue;
        }
        let count = Poisson::new(rate).expect("positive rate").sample(rng) as usize;
        let start = hour as f64 * SECONDS_PER_HOUR;
        let end = ((hour + 1) as f64 * SECONDS_PER_HOUR).min(config.horizon_s);
        for _ in 0..count {
            arrivals.push(rng.random_range(start..end));
        }
    }
    arrivals.sort_by(f64::total_cmp);

    let candidates = arrivals.into_iter().map(|t| dists.draw(rng, t)).collect();
    Ok(assign_posts(candidates, config))
}

/// First-come first-served admission of sessions sorted by arrival time.
///
/// Each vehicle takes the lowest-index post that is free at its start step;
/// vehicles finding every post busy are dropped. Occupancy lasts for the
/// length of the session's integrated charging series.
pub fn assign_posts(candidates: Vec<EvSession>, config: &StationConfig) -> Vec<EvSession> {
    let n_steps = config.n_steps();
    let mut busy_until = vec![0usize; config.n_posts()];
    let mut sessions = Vec::with_capacity(candidates.len());
    for mut session in candidates {
        let start = start_step(session.arrival_time_s, config.sample_period_s);
        if start >= n_steps {
            continue;
        }
        let Some(post) = busy_until.iter().position(|&until| until <= start) else {
            log::debug!("all posts busy at t={:.0}s, session dropped", session.arrival_time_s);
            continue;
        };
        let duration = integrate_session(&session, config.sample_period_s, n_steps - start).len();
        busy_until[post] = start + duration;
        session.post_id = post;
        sessions.push(session);
    }
    sessions
}
