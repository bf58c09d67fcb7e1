//! User state, daily traffic profile, movement and sector attachment.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mobility is active for hours-of-day in `[start, end)`.
pub const WORKING_HOURS: (usize, usize) = (8, 18);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub x: f64,
    pub y: f64,
    /// Radians, clockwise from north (+y).
    pub heading: f64,
    pub amplitude: f64,
    /// Hours.
    pub phase: f64,
    pub base_load: f64,
    pub cell: usize,
}

/// `max(0, b + A·sin(2π(t + φ)/24) + ε)` with `ε ~ N(0, σ²)`.
///
/// The hour is reduced modulo 24 before entering the sinusoid so that the
/// noiseless profile repeats bit for bit.
///
/// One normal draw is consumed per call whatever `sigma` is, so the stream
/// position does not depend on the noise level.
pub fn user_traffic<R: Rng + ?Sized>(t: f64, u: &UserState, sigma: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let seasonal = u.amplitude * (TAU * (t.rem_euclid(24.0) + u.phase) / 24.0).sin();
    (u.base_load + seasonal + sigma * z).max(0.0)
}

pub fn is_working_hour(t: usize) -> bool {
    let h = t % 24;
    (WORKING_HOURS.0..WORKING_HOURS.1).contains(&h)
}

/// Moves `u` for `dt` hours starting at absolute hour `t`.
///
/// Outside working hours the user stays put. At the first working hour of
/// each day the user draws a fresh heading. Crossing a boundary of the
/// `[0, extent]²` square reflects both the position and the heading.
pub fn step_mobility<R: Rng + ?Sized>(
    u: &UserState,
    t: usize,
    dt: f64,
    speed: f64,
    extent: f64,
    rng: &mut R,
) -> UserState {
    let mut next = u.clone();
    if !is_working_hour(t) {
        return next;
    }
    if t % 24 == WORKING_HOURS.0 {
        next.heading = rng.gen::<f64>() * TAU;
    }
    let step = speed * dt;
    let mut x = next.x + step * next.heading.sin();
    let mut y = next.y + step * next.heading.cos();
    let mut heading = next.heading;
    if x < 0.0 {
        x = -x;
        heading = -heading;
    } else if x > extent {
        x = 2.0 * extent - x;
        heading = -heading;
    }
    if y < 0.0 {
        y = -y;
        heading = PI - heading;
    } else if y > extent {
        y = 2.0 * extent - y;
        heading = PI - heading;
    }
    next.x = x.clamp(0.0, extent);
    next.y = y.clamp(0.0, extent);
    next.heading = heading.rem_euclid(TAU);
    next
}

/// Sector index in `0..3` for a bearing (degrees clockwise from north) from
/// the base station to the user. Sector `k` covers `[120k, 120k + 120)`.
pub fn sector_of(dx: f64, dy: f64) -> usize {
    let bearing = dx.atan2(dy).to_degrees().rem_euclid(360.0);
    ((bearing / 120.0).floor() as usize).min(2)
}

/// Cell (`3·bs + sector`) serving a user: nearest base station, ties to the
/// lowest index, then the sector whose wedge contains the user's bearing.
pub fn handover(x: f64, y: f64, base_stations: &[(f64, f64)]) -> Result<usize> {
    if base_stations.is_empty() {
        return Err(Error::Config("handover needs at least one base station".into()));
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &(bx, by)) in base_stations.iter().enumerate() {
        let d = (x - bx).powi(2) + (y - by).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    let (bx, by) = base_stations[best];
    Ok(3 * best + sector_of(x - bx, y - by))
}
