//! Analytic frequency-domain response: susceptibilities, the effective
//! mechanical denominator, the four-term displacement spectrum and its
//! transduction into the meter photocurrent.
//!
//! Fourier convention: f(ω) = ∫ e^{iωt} f(t) dt. Public power spectra are
//! one-sided, S(ω) = S⁽²⁾(ω) + S⁽²⁾(−ω), in units per Hz so that
//! ∫₀^∞ S(ω) dω/2π is the variance.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // unused when a dependent enables std float methods
use num_traits::Float;

use crate::params::{Beam, Cavity, DeviceConfig, MechanicalMode};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Whether a spectrum holds one-sided (folded onto ω > 0) or two-sided values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sidedness {
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResponseError {
    #[error("frequency grid must be non-empty and strictly increasing")]
    GridNotIncreasing,
    #[error("one-sided spectra need a grid of strictly positive frequencies")]
    GridNotPositive,
    #[error("grid and values differ in length ({grid} vs {values})")]
    LengthMismatch { grid: usize, values: usize },
    #[error("no transduction: the meter beam carries no photons")]
    NoTransduction,
    #[error("signal detuning {detuning} rad/s is outside |Δ| < κ/100 = {limit} rad/s where the shot/classical ratio holds")]
    DetuningOutOfRange { detuning: f64, limit: f64 },
}

/// A frequency grid with complex values and an explicit sidedness tag.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    grid: Vec<f64>,
    values: Vec<Complex64>,
    sidedness: Sidedness,
}

impl ComplexSpectrum {
    pub fn new(grid: Vec<f64>, values: Vec<Complex64>, sidedness: Sidedness) -> Result<Self, ResponseError> {
        check_grid(&grid, sidedness)?;
        if grid.len() != values.len() {
            return Err(ResponseError::LengthMismatch { grid: grid.len(), values: values.len() });
        }
        Ok(Self { grid, values, sidedness })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn sidedness(&self) -> Sidedness {
        self.sidedness
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// |S|² at every grid point.
    pub fn abs2(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Phase in degrees at every grid point.
    pub fn phase_deg(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.arg().to_degrees()).collect()
    }

    /// Linear interpolation of the complex value at `omega`, clamped to the grid ends.
    pub fn interpolate(&self, omega: f64) -> Complex64 {
        let g = &self.grid;
        if omega <= g[0] {
            return self.values[0];
        }
        if omega >= g[g.len() - 1] {
            return self.values[g.len() - 1];
        }
        let k = g.partition_point(|&x| x <= omega);
        let t = (omega - g[k - 1]) / (g[k] - g[k - 1]);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }
}

/// A real spectrum on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSpectrum {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub sidedness: Sidedness,
}

pub(crate) fn check_grid(grid: &[f64], sidedness: Sidedness) -> Result<(), ResponseError> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
        return Err(ResponseError::GridNotIncreasing);
    }
    if sidedness == Sidedness::OneSided && grid[0] <= 0.0 {
        return Err(ResponseError::GridNotPositive);
    }
    Ok(())
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + step * k as f64).collect()
}

/// The default analysis grid: ω_m ± 20Γ_m with 4001 points.
pub fn default_grid(config: &DeviceConfig) -> Vec<f64> {
    let gm = crate::dynamics::total_damping(config).abs().max(config.mechanics.gamma_0);
    let wm = config.mechanics.omega_m;
    linear_grid(wm - 20.0 * gm, wm + 20.0 * gm, 4001)
}

/// Mechanical susceptibility χ_m(ω) = (Γ_0/2 − i(ω − ω_m))⁻¹.
pub fn chi_m(omega: f64, mechanics: &MechanicalMode) -> Complex64 {
    Complex64::new(mechanics.gamma_0 / 2.0, -(omega - mechanics.omega_m)).inv()
}

/// Cavity susceptibility χ_c(ω) = (κ/2 − i(ω − Δ))⁻¹ for a beam with detuning Δ.
///
/// With this sign a beam with Δ > 0 (laser red of the cavity) damps the
/// mechanics, matching f(ω) = ∫ e^{iωt} f(t) dt.
pub fn chi_c(omega: f64, cavity: &Cavity, beam: &Beam) -> Complex64 {
    chi_c_raw(omega, cavity.kappa, beam.detuning)
}

#[inline]
pub(crate) fn chi_c_raw(omega: f64, kappa: f64, detuning: f64) -> Complex64 {
    Complex64::new(kappa / 2.0, -(omega - detuning)).inv()
}

/// Π(ω) = χ_c(ω) − χ_c*(−ω), the cavity's intensity-to-quadrature transfer.
pub fn pi_c(omega: f64, cavity: &Cavity, beam: &Beam) -> Complex64 {
    pi_raw(omega, cavity.kappa, beam.detuning)
}

#[inline]
pub(crate) fn pi_raw(omega: f64, kappa: f64, detuning: f64) -> Complex64 {
    chi_c_raw(omega, kappa, detuning) - chi_c_raw(-omega, kappa, detuning).conj()
}

/// 𝒩(ω) = (χ_m(ω)χ_m*(−ω))⁻¹ − 2iω_m Σ_beams N g² Π(ω).
pub fn effective_denominator(omega: f64, config: &DeviceConfig) -> Complex64 {
    let m = &config.mechanics;
    let bare = (chi_m(omega, m) * chi_m(-omega, m).conj()).inv();
    bare - 2.0 * I * m.omega_m * optical_self_energy(omega, config)
}

fn beam_self_energy(omega: f64, cavity: &Cavity, beam: &Beam) -> Complex64 {
    let g2 = beam.coupling_g * beam.coupling_g;
    pi_c(omega, cavity, beam) * (beam.photon_number * g2)
}

fn optical_self_energy(omega: f64, config: &DeviceConfig) -> Complex64 {
    beam_self_energy(omega, &config.cavity, &config.signal)
        + beam_self_energy(omega, &config.cavity, &config.meter)
}

/// The four two-sided displacement-spectrum terms at one frequency (m²/Hz):
/// thermal, signal shot noise, meter shot noise (backaction and zero point), classical.
pub fn displacement_terms_two_sided(omega: f64, config: &DeviceConfig) -> [f64; 4] {
    let m = &config.mechanics;
    let cav = &config.cavity;
    let (s, mt) = (&config.signal, &config.meter);
    let n_th = config.n_th();
    let scale = config.z_zp().powi(2) / effective_denominator(omega, config).norm_sqr();
    let wm2 = m.omega_m * m.omega_m;

    let thermal = m.gamma_0
        * ((n_th + 1.0) / chi_m(omega, m).norm_sqr() + n_th / chi_m(-omega, m).norm_sqr());
    let drive = |b: &Beam| 4.0 * wm2 * cav.kappa * b.photon_number * b.coupling_g.powi(2)
        * chi_c(-omega, cav, b).norm_sqr();
    let classical = 4.0 * wm2 * cav.kappa_l * s.photon_number * s.coupling_g.powi(2)
        * (chi_c(omega, cav, s) + chi_c(-omega, cav, s).conj()).norm_sqr()
        * s.classical_noise_b;
    [thermal * scale, drive(s) * scale, drive(mt) * scale, classical * scale]
}

/// One-sided displacement spectrum split into its physical terms.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumDecomposition {
    pub grid: Vec<f64>,
    pub thermal: Vec<f64>,
    pub rpsn_signal: Vec<f64>,
    pub meter_backaction_zp: Vec<f64>,
    pub classical: Vec<f64>,
    pub total: Vec<f64>,
}

/// The four one-sided terms at a single frequency.
pub fn displacement_terms(omega: f64, config: &DeviceConfig) -> [f64; 4] {
    let a = displacement_terms_two_sided(omega, config);
    let b = displacement_terms_two_sided(-omega, config);
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

/// One-sided total displacement PSD at one frequency (m²/Hz).
pub fn displacement_psd(omega: f64, config: &DeviceConfig) -> f64 {
    displacement_terms(omega, config).iter().sum()
}

/// Evaluates the displacement spectrum term by term on a positive grid.
pub fn displacement_spectrum(grid: &[f64], config: &DeviceConfig) -> Result<SpectrumDecomposition, ResponseError> {
    check_grid(grid, Sidedness::OneSided)?;
    let n = grid.len();
    let mut out = SpectrumDecomposition {
        grid: grid.to_vec(),
        thermal: Vec::with_capacity(n),
        rpsn_signal: Vec::with_capacity(n),
        meter_backaction_zp: Vec::with_capacity(n),
        classical: Vec::with_capacity(n),
        total: Vec::with_capacity(n),
    };
    for &w in grid {
        let t = displacement_terms(w, config);
        out.thermal.push(t[0]);
        out.rpsn_signal.push(t[1]);
        out.meter_backaction_zp.push(t[2]);
        out.classical.push(t[3]);
        out.total.push(t[0] + t[1] + t[2] + t[3]);
    }
    Ok(out)
}

/// Meter photocurrent spectrum in relative-intensity units, with its parts.
#[derive(Clone, Debug, PartialEq)]
pub struct MeterPhotocurrent {
    pub grid: Vec<f64>,
    /// G²|Π_M|²·S_z, the motion transduced onto the meter intensity.
    pub transduced: Vec<f64>,
    /// 2/(ε_M κ_R N_M), one-sided.
    pub shot_floor: f64,
    /// Dark-current PSD divided by Ī_M².
    pub dark_floor: f64,
    pub total: Vec<f64>,
}

/// One-sided shot-noise floor of a detected beam in relative-intensity units.
pub fn shot_floor(beam: &Beam, cavity: &Cavity, efficiency: f64) -> f64 {
    2.0 / (efficiency * beam.output_flux(cavity))
}

/// S_IM/Ī_M² = G²|Π_M(ω)|² S_z(ω) + shot floor + dark floor.
pub fn meter_photocurrent_spectrum(grid: &[f64], config: &DeviceConfig) -> Result<MeterPhotocurrent, ResponseError> {
    let meter = &config.meter;
    if !(meter.photon_number > 0.0) {
        return Err(ResponseError::NoTransduction);
    }
    let sz = displacement_spectrum(grid, config)?;
    let gain = |w: f64| (meter.coupling_g / config.z_zp()).powi(2) * pi_c(w, &config.cavity, meter).norm_sqr();
    let transduced: Vec<f64> = grid.iter().zip(&sz.total).map(|(&w, &s)| gain(w) * s).collect();
    let det = &config.detect_meter;
    let shot = if det.efficiency > 0.0 { shot_floor(meter, &config.cavity, det.efficiency) } else { 0.0 };
    let mean = det.mean_current(meter, &config.cavity);
    let dark = if mean > 0.0 { det.dark_current_psd / (mean * mean) } else { 0.0 };
    let total = transduced.iter().map(|t| t + shot + dark).collect();
    Ok(MeterPhotocurrent { grid: grid.to_vec(), transduced, shot_floor: shot, dark_floor: dark, total })
}

/// Inverts the meter transduction: S_z(ω) = (S_IM/Ī_M² − floors)/(G²|Π_M(ω)|²).
pub fn displacement_from_meter(omega: f64, relative_psd_minus_floors: f64, config: &DeviceConfig) -> f64 {
    let meter = &config.meter;
    let g = meter.coupling_g / config.z_zp();
    relative_psd_minus_floors / (g * g * pi_c(omega, &config.cavity, meter).norm_sqr())
}

/// Relative intensity levels of shot noise and classical noise on the signal beam's output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputNoiseRatio {
    /// Aˢⁿ = (κ_R N)⁻¹.
    pub a_sn: f64,
    /// Aᶜⁿ = κ_L|χ_c(ω) + χ_c*(−ω)|²B/N.
    pub a_cn: f64,
}

impl OutputNoiseRatio {
    /// S_z^sn/S_z^cn = κκ_R|χ_c(−ω)|²Aˢⁿ/Aᶜⁿ at the frequency these levels were computed for.
    pub fn force_ratio(&self, omega: f64, config: &DeviceConfig) -> f64 {
        let cav = &config.cavity;
        cav.kappa * cav.kappa_r * chi_c(-omega, cav, &config.signal).norm_sqr() * self.a_sn / self.a_cn
    }
}

/// Shot and classical relative intensity levels of the signal beam at the output port.
///
/// Valid only for a signal beam close to cavity resonance.
pub fn shot_classical_output_ratio(omega: f64, config: &DeviceConfig) -> Result<OutputNoiseRatio, ResponseError> {
    let cav = &config.cavity;
    let s = &config.signal;
    let limit = cav.kappa / 100.0;
    if s.detuning.abs() >= limit {
        return Err(ResponseError::DetuningOutOfRange { detuning: s.detuning, limit });
    }
    let a_sn = 1.0 / (cav.kappa_r * s.photon_number);
    let a_cn = cav.kappa_l * (chi_c(omega, cav, s) + chi_c(-omega, cav, s).conj()).norm_sqr()
        * s.classical_noise_b
        / s.photon_number;
    Ok(OutputNoiseRatio { a_sn, a_cn })
}

/// Integrates a one-sided spectrum over all positive frequencies, ∫₀^∞ S dω/2π.
///
/// The integration grid is dense (spacing Γ/40) within ±400Γ of `center`
/// and logarithmic in both wings, reaching 10⁻⁴·center below and 100·center above.
pub fn integrate_one_sided(f: impl Fn(f64) -> f64, center: f64, width: f64) -> f64 {
    let lo_core = (center - 400.0 * width).max(center * 0.5);
    let hi_core = center + 400.0 * width;
    let core_n = (((hi_core - lo_core) / (width / 40.0)) as usize).clamp(2000, 400_000) | 1;
    let mut total = simpson(&f, lo_core, hi_core, core_n);
    // log wings: substitute ω = e^u, dω = ω du
    let g = |u: f64| {
        let w = u.exp();
        f(w) * w
    };
    total += simpson(&g, (center * 1e-4).ln(), lo_core.ln(), 4001);
    total += simpson(&g, hi_core.ln(), (center * 100.0).ln(), 4001);
    total / crate::consts::TWO_PI
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, n_points: usize) -> f64 {
    let n = if n_points % 2 == 0 { n_points + 1 } else { n_points };
    let h = (b - a) / (n - 1) as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n - 1 {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * k as f64);
    }
    acc * h / 3.0
}
