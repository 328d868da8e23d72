//! Physical constants (CODATA 2018 exact or recommended values, SI units).

use core::f64::consts::PI;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Elementary charge, C.
pub const Q_E: f64 = 1.602_176_634e-19;
/// Speed of light in vacuum, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

/// 2π, the factor between ordinary (Hz) and angular (rad/s) frequency.
pub const TWO_PI: f64 = 2.0 * PI;

/// Converts an ordinary frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TWO_PI * f
}

/// Converts an angular frequency in rad/s to an ordinary frequency in Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TWO_PI
}
