use super::session::{integrate_session, start_step, EvSession};
use super::StationConfig;
use crate::error::{Error, Result};

/// Requested power per post and step, W.
///
/// Each session contributes its integrated charging series to its assigned
/// post from its start step onwards. Sessions overlapping on the same post
/// are rejected: a post serves one vehicle at a time.
pub fn build_post_loads(sessions: &[EvSession], config: &StationConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let n_steps = config.n_steps();
    let mut loads = vec![vec![0.0; n_steps]; config.n_posts()];
    let mut busy_until = vec![0usize; config.n_posts()];
    for session in sessions {
        if session.post_id >= config.n_posts() {
            return Err(Error::InvalidInput(format!(
                "session post {} out of range (station has {} posts)",
                session.post_id,
                config.n_posts()
            )));
        }
        let start = start_step(session.arrival_time_s, config.sample_period_s);
        if start >= n_steps {
            continue;
        }
        if start < busy_until[session.post_id] {
            return Err(Error::InvalidInput(format!(
                "post {} already occupied at step {start}",
                session.post_id
            )));
        }
        let series = integrate_session(session, config.sample_period_s, n_steps - start);
        busy_until[session.post_id] = start + series.len();
        for (slot, kw) in loads[session.post_id][start..].iter_mut().zip(&series) {
            *slot = kw * 1000.0;
        }
    }
    Ok(loads)
}
