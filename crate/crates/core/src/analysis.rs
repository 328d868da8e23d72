//! Parameter estimation from spectra: windowed Lorentzian fits, the
//! signal-power sweep decomposition, damping correction and the two
//! calibrations of the single-photon coupling.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependent enables std float methods
use num_traits::Float;

use crate::consts::{HBAR, K_B};
use crate::dynamics::{optical_damping, peak_location, total_damping};
use crate::fit::{fit_lorentzian, polyfit, FitError, LorentzianFit, PolyFit};
use crate::params::{Beam, Cavity, DeviceConfig, MechanicalMode};
use crate::response::{chi_c, displacement_terms, pi_c, shot_classical_output_ratio, RealSpectrum, ResponseError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error("fit window holds {got} points; at least {needed} are needed")]
    WindowTooSmall { needed: usize, got: usize },
    #[error("input slices differ in length")]
    LengthMismatch,
    #[error("need at least {needed} distinct signal photon numbers, got {got}")]
    TooFewPowers { needed: usize, got: usize },
    #[error("measured damping {gamma_m} rad/s does not exceed the intrinsic damping {gamma_0} rad/s")]
    NoOpticalDamping { gamma_m: f64, gamma_0: f64 },
    #[error("the meter beam does not damp the mode at this detuning")]
    NoCooling,
    #[error("`{0}` must be positive and finite")]
    NonPositive(&'static str),
    #[error("share must lie in (0, 1], got {0}")]
    BadShare(f64),
}

fn positive(name: &'static str, v: f64) -> Result<f64, AnalysisError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(AnalysisError::NonPositive(name))
    }
}

/// Fits a Lorentzian to the part of `spectrum` within ±`half_width` of `center`.
pub fn lorentzian_fit(
    spectrum: &RealSpectrum,
    center: f64,
    half_width: f64,
    sigma: Option<&[f64]>,
) -> Result<LorentzianFit, AnalysisError> {
    if spectrum.grid.len() != spectrum.values.len() || sigma.is_some_and(|s| s.len() != spectrum.grid.len()) {
        return Err(AnalysisError::LengthMismatch);
    }
    let keep: Vec<usize> =
        (0..spectrum.grid.len()).filter(|&k| (spectrum.grid[k] - center).abs() <= half_width).collect();
    if keep.len() < 20 {
        return Err(AnalysisError::WindowTooSmall { needed: 20, got: keep.len() });
    }
    let x: Vec<f64> = keep.iter().map(|&k| spectrum.grid[k]).collect();
    let y: Vec<f64> = keep.iter().map(|&k| spectrum.values[k]).collect();
    let s: Option<Vec<f64>> = sigma.map(|s| keep.iter().map(|&k| s[k]).collect());
    let fit = fit_lorentzian(&x, &y, s.as_deref())?;
    if !(fit.fwhm > 0.0) {
        return Err(FitError::NegativeWidth(fit.fwhm).into());
    }
    Ok(fit)
}

/// Peaks rescaled to the damping they would have at zero signal power.
#[derive(Clone, Debug, PartialEq)]
pub struct DampingCorrection {
    /// peak·(Γ_m(N_S)/Γ_m(0))², which removes the signal beam's change of the
    /// mechanical response while keeping the force spectrum it sees.
    pub corrected: Vec<f64>,
    /// Γ_m(0) from a straight-line fit of Γ_m against N_S.
    pub gamma_at_zero: f64,
    /// dΓ_m/dN_S and its 1σ error.
    pub slope: f64,
    pub slope_sigma: f64,
    /// Set when a quadratic term in Γ_m(N_S) is significant (> 3σ) and changes
    /// Γ_m by more than 1% across the sweep; the straight-line extrapolation is then suspect.
    pub nonlinear_trend: bool,
}

pub fn correct_damping(n_s: &[f64], peaks: &[f64], gammas: &[f64]) -> Result<DampingCorrection, AnalysisError> {
    if n_s.len() != peaks.len() || n_s.len() != gammas.len() {
        return Err(AnalysisError::LengthMismatch);
    }
    let line = polyfit(n_s, gammas, 1, None)?;
    let gamma_at_zero = line.coeffs[0];
    positive("gamma_at_zero", gamma_at_zero)?;
    let nonlinear_trend = match polyfit(n_s, gammas, 2, None) {
        Ok(q) => {
            let n_max = n_s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let c2 = q.coeffs[2];
            let s2 = q.sigmas()[2];
            c2.abs() > 3.0 * s2 && (c2 * n_max * n_max).abs() > 0.01 * gamma_at_zero
        }
        Err(_) => false,
    };
    let corrected = peaks.iter().zip(gammas).map(|(p, g)| p * (g / gamma_at_zero).powi(2)).collect();
    Ok(DampingCorrection {
        corrected,
        gamma_at_zero,
        slope: line.coeffs[1],
        slope_sigma: line.sigmas()[1],
        nonlinear_trend,
    })
}

/// Constant + linear + quadratic decomposition of peak height against N_S.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSweep {
    pub fit: PolyFit,
    pub constant: f64,
    pub linear: f64,
    pub quadratic: f64,
    pub n_max: f64,
    /// linear·N/(linear·N + quadratic·N²) at the largest N_S: the shot-noise share of the increase.
    pub rpsn_share_of_increase: f64,
    /// linear·N over the fitted total at the largest N_S.
    pub rpsn_share_of_total: f64,
    pub classical_share_of_total: f64,
    pub thermal_share_of_total: f64,
}

/// Fits peak = c₀ + c₁N_S + c₂N_S² and attributes the peak at the largest N_S.
///
/// Peaks should already be corrected for the signal beam's damping
/// ([`correct_damping`]).
pub fn power_sweep_decomposition(
    n_s: &[f64],
    peaks: &[f64],
    sigma: Option<&[f64]>,
) -> Result<PowerSweep, AnalysisError> {
    if n_s.len() != peaks.len() {
        return Err(AnalysisError::LengthMismatch);
    }
    let mut distinct = n_s.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(AnalysisError::TooFewPowers { needed: 4, got: distinct.len() });
    }
    let fit = polyfit(n_s, peaks, 2, sigma)?;
    let (c0, c1, c2) = (fit.coeffs[0], fit.coeffs[1], fit.coeffs[2]);
    let n = distinct[distinct.len() - 1];
    let (lin, quad) = (c1 * n, c2 * n * n);
    let total = c0 + lin + quad;
    Ok(PowerSweep {
        constant: c0,
        linear: c1,
        quadratic: c2,
        n_max: n,
        rpsn_share_of_increase: lin / (lin + quad),
        rpsn_share_of_total: lin / total,
        classical_share_of_total: quad / total,
        thermal_share_of_total: c0 / total,
        fit,
    })
}

/// One point of a modelled signal-power sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub n_s: f64,
    /// Displacement spectrum at its peak (m²/Hz, one-sided).
    pub peak: f64,
    /// The peak location (rad/s).
    pub peak_omega: f64,
    pub thermal: f64,
    pub rpsn: f64,
    pub meter: f64,
    pub classical: f64,
    pub gamma_m: f64,
}

/// Peak displacement spectra for a list of signal photon numbers.
///
/// The configuration's classical noise level is taken to hold at its own
/// N_S and scaled in proportion to N_S elsewhere, modelling a laser with a
/// fixed relative intensity noise.
pub fn model_power_sweep(config: &DeviceConfig, n_values: &[f64]) -> Vec<SweepPoint> {
    let n_ref = config.signal.photon_number;
    let b_ref = config.signal.classical_noise_b;
    n_values
        .iter()
        .map(|&n| {
            let mut c = *config;
            c.signal.photon_number = n;
            c.signal.classical_noise_b = if n_ref > 0.0 { b_ref * n / n_ref } else { b_ref };
            let gm = total_damping(&c);
            let wm = c.mechanics.omega_m;
            let span = 20.0 * gm.abs().max(c.mechanics.gamma_0);
            let w = peak_location(&|w| displacement_terms(w, &c).iter().sum(), wm - span, wm + span).unwrap_or(wm);
            let t = displacement_terms(w, &c);
            SweepPoint {
                n_s: n,
                peak: t.iter().sum(),
                peak_omega: w,
                thermal: t[0],
                rpsn: t[1],
                meter: t[2],
                classical: t[3],
                gamma_m: gm,
            }
        })
        .collect()
}

/// Inverts Γ_M = g²N_Mκ(|χ_c(ω_m)|² − |χ_c(−ω_m)|²) for g, with Γ_M = Γ_m − Γ_0.
pub fn calibrate_g_from_damping(
    gamma_m: f64,
    meter_photons: f64,
    cavity: &Cavity,
    meter_detuning: f64,
    mechanics: &MechanicalMode,
) -> Result<f64, AnalysisError> {
    positive("meter_photons", meter_photons)?;
    if !(gamma_m > mechanics.gamma_0) {
        return Err(AnalysisError::NoOpticalDamping { gamma_m, gamma_0: mechanics.gamma_0 });
    }
    let probe = Beam { detuning: meter_detuning, photon_number: 1.0, coupling_g: 1.0, classical_noise_b: 0.0, wavelength: 1.0 };
    let w = mechanics.omega_m;
    let per_g2 = meter_photons * cavity.kappa * (chi_c(w, cavity, &probe).norm_sqr() - chi_c(-w, cavity, &probe).norm_sqr());
    if !(per_g2 > 0.0) {
        return Err(AnalysisError::NoCooling);
    }
    Ok(((gamma_m - mechanics.gamma_0) / per_g2).sqrt())
}

/// Uses the thermal peak of the meter photocurrent as a displacement reference:
/// g² = S_rel·Γ_m²ħω_m/(8|Π_M(ω_m)|²k_B T Γ_0).
///
/// `relative_peak` is the one-sided meter spectrum at its peak, divided by
/// Ī_M² and with the white floors removed, taken at N_S = 0. The mode is
/// implicitly at T_eff = T·Γ_0/Γ_m. The formula ignores the optical spring
/// and the meter's own backaction, so it reads high as the meter cooling
/// grows (about 3% at g/2π = 20 Hz for the first device).
pub fn calibrate_g_from_thermal(
    relative_peak: f64,
    gamma_m: f64,
    bath_temperature: f64,
    config: &DeviceConfig,
) -> Result<f64, AnalysisError> {
    positive("relative_peak", relative_peak)?;
    positive("gamma_m", gamma_m)?;
    positive("bath_temperature", bath_temperature)?;
    let m = &config.mechanics;
    let pi = pi_c(m.omega_m, &config.cavity, &config.meter).norm_sqr();
    positive("|Π_M(ω_m)|²", pi)?;
    let g2 = relative_peak * gamma_m * gamma_m * HBAR * m.omega_m / (8.0 * pi * K_B * bath_temperature * m.gamma_0);
    Ok(g2.sqrt())
}

/// Classical noise level B at which the signal's shot noise supplies `share`
/// of the light-driven (shot + classical) displacement spectrum at ω_m.
pub fn classical_noise_for_drive_share(config: &DeviceConfig, share: f64) -> Result<f64, AnalysisError> {
    if !(share > 0.0 && share <= 1.0) {
        return Err(AnalysisError::BadShare(share));
    }
    let mut unit = *config;
    unit.signal.classical_noise_b = 1.0;
    let t = displacement_terms(config.mechanics.omega_m, &unit);
    positive("classical response", t[3])?;
    Ok((1.0 - share) / share * t[1] / t[3])
}

/// Classical noise level B at which the detected signal photocurrent shows
/// classical noise `ratio` times its shot noise (ratio = ε·Aᶜⁿ/Aˢⁿ at ω_m).
///
/// Needs a signal beam close to resonance.
pub fn classical_noise_for_detected_ratio(config: &DeviceConfig, ratio: f64) -> Result<f64, AnalysisError> {
    positive("ratio", ratio)?;
    let eps = positive("signal efficiency", config.detect_signal.efficiency)?;
    let mut unit = *config;
    unit.signal.classical_noise_b = 1.0;
    let levels = shot_classical_output_ratio(config.mechanics.omega_m, &unit)?;
    Ok(ratio * levels.a_sn / eps / levels.a_cn)
}

/// Signal-beam optical damping, exposed for sweep bookkeeping.
pub fn signal_damping(config: &DeviceConfig) -> f64 {
    optical_damping(&config.signal, &config.cavity, &config.mechanics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::{hz, to_hz};
    use crate::fit::lorentzian;
    use crate::response::{linear_grid, meter_photocurrent_spectrum, Sidedness};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn exact_lorentzian_is_recovered() {
        let grid = linear_grid(-50.0, 50.0, 401);
        let values = grid.iter().map(|&x| lorentzian(x, 1.5, 7.0, 3.0, 0.2)).collect();
        let s = RealSpectrum { grid, values, sidedness: Sidedness::TwoSided };
        let f = lorentzian_fit(&s, 0.0, 40.0, None).unwrap();
        for (got, want) in [(f.center, 1.5), (f.fwhm, 7.0), (f.peak, 3.0), (f.offset, 0.2)] {
            assert!(rel(got, want) < 1e-8, "{got} vs {want}");
        }
        assert!(matches!(lorentzian_fit(&s, 0.0, 2.0, None), Err(AnalysisError::WindowTooSmall { .. })));
    }

    #[test]
    fn thermal_linewidth_of_device1() {
        let c = DeviceConfig::device1().with_signal_photons(0.0);
        let gm = total_damping(&c);
        let wm = c.mechanics.omega_m;
        let grid = linear_grid(wm - 10.0 * gm, wm + 10.0 * gm, 2001);
        let values = grid.iter().map(|&w| displacement_terms(w, &c).iter().sum()).collect();
        let s = RealSpectrum { grid, values, sidedness: Sidedness::OneSided };
        let fit = lorentzian_fit(&s, wm, 5.0 * gm, None).unwrap();
        assert!(rel(to_hz(fit.fwhm), 1.43e3) < 0.01, "{}", to_hz(fit.fwhm));
    }

    #[test]
    fn constant_damping_is_identity() {
        let n = [0.0, 1e8, 2e8, 3e8];
        let p = [1.0, 2.0, 3.0, 4.5];
        let out = correct_damping(&n, &p, &[5.0; 4]).unwrap();
        assert_eq!(out.corrected, p.to_vec());
        assert!(!out.nonlinear_trend);
    }

    #[test]
    fn injected_damping_slope_is_recovered() {
        let n: Vec<f64> = (0..8).map(|k| k as f64 * 5e7).collect();
        let slope = -2.5e-6;
        // deterministic ±0.1 rad/s jitter
        let g: Vec<f64> = n.iter().enumerate().map(|(k, x)| 9000.0 + slope * x + if k % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let out = correct_damping(&n, &[1.0; 8], &g).unwrap();
        assert!((out.slope - slope).abs() < 2.0 * out.slope_sigma, "{} ± {}", out.slope, out.slope_sigma);
        assert!((out.gamma_at_zero - 9000.0).abs() < 0.2);
    }

    #[test]
    fn signal_detuning_narrows_line_and_extrapolates_back() {
        let c = DeviceConfig::device1();
        let n: Vec<f64> = (0..=6).map(|k| k as f64 * 6e7).collect();
        let sweep = model_power_sweep(&c, &n);
        let g: Vec<f64> = sweep.iter().map(|p| p.gamma_m).collect();
        let out = correct_damping(&n, &sweep.iter().map(|p| p.peak).collect::<Vec<_>>(), &g).unwrap();
        assert!(rel(to_hz(out.gamma_at_zero), 1.43e3) < 0.02);
        let drop = 1.0 - g[6] / g[0];
        assert!(drop > 0.05 && drop < 0.25, "{drop}");
    }

    #[test]
    fn sweep_without_classical_noise_has_no_quadratic_share() {
        let c = DeviceConfig::device1();
        let n: Vec<f64> = (0..=8).map(|k| k as f64 * 4.5e7).collect();
        let sweep = model_power_sweep(&c, &n);
        let g: Vec<f64> = sweep.iter().map(|p| p.gamma_m).collect();
        let corr = correct_damping(&n, &sweep.iter().map(|p| p.peak).collect::<Vec<_>>(), &g).unwrap();
        let d = power_sweep_decomposition(&n, &corr.corrected, None).unwrap();
        assert!(d.classical_share_of_total.abs() < 0.02, "{}", d.classical_share_of_total);
        assert!(power_sweep_decomposition(&n[..3], &corr.corrected[..3], None).is_err());
    }

    #[test]
    fn decomposition_attributes_known_polynomial() {
        let n: Vec<f64> = (0..6).map(|k| k as f64).collect();
        let y: Vec<f64> = n.iter().map(|x| 2.0 + 3.0 * x + 0.5 * x * x).collect();
        let d = power_sweep_decomposition(&n, &y, None).unwrap();
        assert!(rel(d.rpsn_share_of_increase, 15.0 / (15.0 + 12.5)) < 1e-9);
        assert!(rel(d.rpsn_share_of_total, 15.0 / 29.5) < 1e-9);
    }

    #[test]
    fn drive_share_on_resonance_has_closed_form() {
        let mut c = DeviceConfig::device1();
        c.signal.detuning = 0.0;
        let b = classical_noise_for_drive_share(&c, 0.75).unwrap();
        let expect = c.cavity.kappa / (12.0 * c.cavity.kappa_l);
        assert!(rel(b, expect) < 1e-9);
        c.signal.classical_noise_b = b;
        let t = displacement_terms(c.mechanics.omega_m, &c);
        assert!(rel(t[1] / (t[1] + t[3]), 0.75) < 1e-9);
        assert!(classical_noise_for_drive_share(&c, 0.0).is_err());
    }

    #[test]
    fn detected_ratio_round_trips() {
        let mut c = DeviceConfig::device1();
        c.signal.detuning = 0.0;
        let b = classical_noise_for_detected_ratio(&c, 0.5).unwrap();
        c.signal.classical_noise_b = b;
        let l = shot_classical_output_ratio(c.mechanics.omega_m, &c).unwrap();
        assert!(rel(c.detect_signal.efficiency * l.a_cn / l.a_sn, 0.5) < 1e-12);
    }

    #[test]
    fn damping_calibration_of_device1() {
        let c = DeviceConfig::device1();
        let g = calibrate_g_from_damping(hz(1.43e3), c.meter.photon_number, &c.cavity, c.meter.detuning, &c.mechanics)
            .unwrap();
        assert!(rel(to_hz(g), 16.4) < 0.05, "{}", to_hz(g));
        assert!(calibrate_g_from_damping(c.mechanics.gamma_0, 7e6, &c.cavity, c.meter.detuning, &c.mechanics).is_err());
        assert!(matches!(
            calibrate_g_from_damping(hz(1e3), 7e6, &c.cavity, -c.meter.detuning, &c.mechanics),
            Err(AnalysisError::NoCooling)
        ));
    }

    proptest! {
        #[test]
        fn damping_calibration_inverts_optical_damping(g_hz in 5.0f64..40.0, nm in 1e6f64..2e7) {
            let mut c = DeviceConfig::device1().with_signal_photons(0.0).with_meter_photons(nm);
            c.set_common_coupling(hz(g_hz));
            let gm = total_damping(&c);
            let g = calibrate_g_from_damping(gm, nm, &c.cavity, c.meter.detuning, &c.mechanics).unwrap();
            prop_assert!(rel(g, hz(g_hz)) < 1e-10);
        }
    }

    #[test]
    fn thermal_calibration_recovers_coupling() {
        for g_hz in [14.8, 16.1, 16.4] {
            let mut c = DeviceConfig::device1().with_signal_photons(0.0);
            c.set_common_coupling(hz(g_hz));
            let gm = total_damping(&c);
            let wm = c.mechanics.omega_m;
            let w = peak_location(&|w| displacement_terms(w, &c).iter().sum(), wm - 10.0 * gm, wm + 10.0 * gm).unwrap();
            let spec = meter_photocurrent_spectrum(&[w], &c).unwrap();
            let g = calibrate_g_from_thermal(spec.transduced[0], gm, c.env.temperature, &c).unwrap();
            assert!(rel(g, hz(g_hz)) < 0.02, "{g_hz}: {}", to_hz(g));
        }
    }

    #[test]
    fn doubling_temperature_halves_g_squared_for_fixed_spectrum() {
        let c = DeviceConfig::device1();
        let a = calibrate_g_from_thermal(1e-10, hz(1.4e3), 4.9, &c).unwrap();
        let b = calibrate_g_from_thermal(1e-10, hz(1.4e3), 9.8, &c).unwrap();
        assert!(rel(a * a, 2.0 * b * b) < 1e-12);
        assert!(calibrate_g_from_thermal(0.0, hz(1.4e3), 4.9, &c).is_err());
    }
}
