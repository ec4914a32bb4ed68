//! Conversions between the ordinary-frequency values quoted in lab notes
//! (Hz, MHz) and the angular frequencies used internally.

use std::f64::consts::TAU;

/// 2π × `hz`.
#[inline]
pub fn hz(hz: f64) -> f64 {
    TAU * hz
}

/// 2π × `mhz` × 10⁶.
#[inline]
pub fn mhz(mhz: f64) -> f64 {
    TAU * mhz * 1e6
}

/// 2π × `ghz` × 10⁹.
#[inline]
pub fn ghz(ghz: f64) -> f64 {
    TAU * ghz * 1e9
}

/// Angular frequency back to Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Angular frequency back to MHz.
#[inline]
pub fn to_mhz(omega: f64) -> f64 {
    omega / TAU / 1e6
}

pub const NS: f64 = 1e-9;
pub const US: f64 = 1e-6;
