//! Physics engine for a mechanical mode read out by two laser beams sharing
//! one optical cavity: a strong signal beam whose radiation-pressure shot
//! noise drives the motion, and a weak red-detuned meter beam that cools and
//! reads it out.
//!
//! The crate is `no_std` + `alloc`. It covers
//! - parameter sets and closed-form derived quantities ([`params`]),
//! - analytic displacement and photocurrent spectra ([`response`]),
//! - the signal/meter photocurrent cross spectrum ([`crosscorr`]),
//! - damping, occupation, multimode stability ([`dynamics`]),
//! - the state-space form of the linearized equations ([`linear`]),
//! - synthetic time-domain records ([`montecarlo`]),
//! - fitting and calibration ([`analysis`], [`fit`]).
//!
//! Units are SI with angular frequencies in rad/s; [`consts::hz`] converts
//! from ordinary frequency.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod consts;
pub mod crosscorr;
pub mod dynamics;
pub mod fit;
pub mod linalg;
pub mod linear;
pub mod montecarlo;
pub mod params;
pub mod response;

pub use num_complex::Complex64;
pub use params::{Beam, Cavity, DeviceConfig, Detection, Environment, MechanicalMode};
pub use response::{ComplexSpectrum, RealSpectrum, Sidedness};
