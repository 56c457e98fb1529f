//! Physical constants and unit conversions.

/// Speed of light used for every wavelength computation (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Upper bound on the per-user gap between the ergodic rate and the
/// expectation-inside surrogate, in bits/s/Hz (`gamma / ln 2`).
pub const LOG_JENSEN_GAP_BOUND: f64 = EULER_GAMMA / std::f64::consts::LN_2;

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Path loss `1e-3 * d^-2` for a user at distance `d` metres.
pub fn path_loss(distance_m: f64) -> f64 {
    1e-3 / (distance_m * distance_m)
}
