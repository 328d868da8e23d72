//! Cross-correlation between the signal and meter photocurrents.
//!
//! Spectra here are normalized by the two mean currents, Ī_S Ī_M, which
//! makes them independent of detector efficiency and dark current: those
//! only add noise that is uncorrelated between the two detectors.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // unused when a dependent enables std float methods
use num_traits::Float;

use crate::fit::nelder_mead;
use crate::params::DeviceConfig;
use crate::response::{
    check_grid, chi_c, displacement_terms_two_sided, effective_denominator, pi_c, ComplexSpectrum, ResponseError,
    Sidedness,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Number of terms in the full cross-spectrum expression.
pub const N_TERMS: usize = 13;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrossError {
    #[error(transparent)]
    Grid(#[from] ResponseError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(crate::params::Violation),
    #[error("both beams need a non-zero photon number to form a cross spectrum")]
    MissingBeam,
    #[error("the resonant form needs Δ_S = 0 (got {0} rad/s); use cross_spectrum_full for a detuned signal beam")]
    DetunedSignal(f64),
    #[error("normalized correlation needs positive auto spectra (got {s_is}, {s_im})")]
    ZeroDenominator { s_is: f64, s_im: f64 },
    #[error("spectrum must cover ±{needed} rad/s around ω_m for a detuning fit")]
    NarrowSpectrum { needed: f64 },
    #[error("measured spectrum has {measured} points but the grid has {grid}")]
    LengthMismatch { grid: usize, measured: usize },
    #[error("detuning fit did not converge after {iterations} iterations (best Δ = {best_detuning} rad/s)")]
    NoConvergence { iterations: usize, best_detuning: f64 },
}

/// Selects which of the thirteen terms enter a sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TermMask(pub [bool; N_TERMS]);

impl TermMask {
    pub const ALL: TermMask = TermMask([true; N_TERMS]);

    /// The displacement term and the six meter-input correlation terms, which
    /// vanish together when the signal beam sits on resonance.
    pub fn first_seven() -> Self {
        let mut m = [false; N_TERMS];
        m[..7].iter_mut().for_each(|v| *v = true);
        TermMask(m)
    }

    pub fn only(index: usize) -> Self {
        let mut m = [false; N_TERMS];
        m[index] = true;
        TermMask(m)
    }
}

impl Default for TermMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// Evaluation options for the full cross spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CrossOptions {
    pub mask: TermMask,
    /// Constant phase added to every value, for comparison with data taken
    /// through electronics with a known phase lag (degrees).
    pub phase_offset_deg: f64,
}

fn check_beams(config: &DeviceConfig) -> Result<(), CrossError> {
    if let Some(&v) = config.validate().first() {
        return Err(CrossError::InvalidConfig(v));
    }
    if !(config.signal.photon_number > 0.0 && config.meter.photon_number > 0.0) {
        return Err(CrossError::MissingBeam);
    }
    Ok(())
}

/// The thirteen two-sided terms of S_ISM(ω)/(Ī_S Ī_M) at one frequency.
///
/// Term 0 is the transduced displacement; 1–6 correlate the displacement with
/// the meter's input ports; 7–12 correlate the signal's input ports (and its
/// classical noise) with the displacement.
pub fn cross_terms_two_sided(omega: f64, config: &DeviceConfig) -> [Complex64; N_TERMS] {
    let m = &config.mechanics;
    let cav = &config.cavity;
    let (s, mt) = (&config.signal, &config.meter);
    let zzp = config.z_zp();
    let wm = m.omega_m;
    let (kl, kr, ki) = (cav.kappa_l, cav.kappa_r, cav.kappa_int);
    let (ns, nm) = (s.photon_number, mt.photon_number);
    let (a1, a2) = (ns.sqrt(), nm.sqrt());
    let (g1, g2) = (s.coupling_g, mt.coupling_g);
    let (big_g1, big_g2) = (g1 / zzp, g2 / zzp);

    let den = effective_denominator(omega, config);
    let den_neg = effective_denominator(-omega, config);
    let c1 = |w: f64| chi_c(w, cav, s);
    let c2 = |w: f64| chi_c(w, cav, mt);
    let pi1_neg = pi_c(-omega, cav, s);
    let pi2 = pi_c(omega, cav, mt);

    let sym_zz = 0.5
        * (displacement_terms_two_sided(omega, config).iter().sum::<f64>()
            + displacement_terms_two_sided(-omega, config).iter().sum::<f64>());

    let z_xi2 = |k: f64| -wm * k.sqrt() * g2 * zzp * a2 * c2(omega).conj() / den_neg;
    let z_xi2_dag = |k: f64| -wm * k.sqrt() * g2 * zzp * a2 * c2(-omega) / den_neg;
    let xi1_z = |k: f64| -wm * k.sqrt() * g1 * zzp * a1 * c1(-omega).conj() / den;
    let xi1_dag_z = |k: f64| -wm * k.sqrt() * g1 * zzp * a1 * c1(omega) / den;
    let dx_z = -2.0 * wm * kl.sqrt() * g1 * zzp * a1 * (c1(omega) + c1(-omega).conj()) * s.classical_noise_b / den;

    let sr = kr.sqrt();
    let pre = -1.0 / (kr * ns * nm);
    let lr = (kl * kr).sqrt();
    let ir = (ki * kr).sqrt();

    let a_sig = sr * big_g1 * ns * I * pi1_neg;
    let a_met = sr * big_g2 * nm * I * pi2;
    let (c2p, c2m) = (c2(omega), c2(-omega).conj());
    let (c1m, c1p) = (c1(-omega), c1(omega).conj());

    let t = [
        sr * big_g1 * ns * pi1_neg * sr * big_g2 * nm * pi2 * sym_zz,
        a_sig * a2 * lr * c2p * z_xi2(kl),
        a_sig * a2 * ir * c2p * z_xi2(ki),
        a_sig * a2 * (kr * c2p - 1.0) * z_xi2(kr),
        a_sig * a2 * lr * c2m * z_xi2_dag(kl),
        a_sig * a2 * ir * c2m * z_xi2_dag(ki),
        a_sig * a2 * (kr * c2m - 1.0) * z_xi2_dag(kr),
        a_met * a1 * lr * c1m * (xi1_z(kl) + dx_z),
        a_met * a1 * ir * c1m * xi1_z(ki),
        a_met * a1 * (kr * c1m - 1.0) * xi1_z(kr),
        a_met * a1 * lr * c1p * (xi1_dag_z(kl) + dx_z),
        a_met * a1 * ir * c1p * xi1_dag_z(ki),
        a_met * a1 * (kr * c1p - 1.0) * xi1_dag_z(kr),
    ];
    t.map(|v| v * pre)
}

/// Two-sided S_ISM(ω)/(Ī_S Ī_M) at one frequency, summed over the masked terms.
pub fn cross_two_sided(omega: f64, config: &DeviceConfig, mask: &TermMask) -> Complex64 {
    cross_terms_two_sided(omega, config)
        .iter()
        .zip(mask.0)
        .filter(|(_, on)| *on)
        .map(|(v, _)| *v)
        .sum()
}

/// One-sided cross spectrum at one frequency: S⁽²⁾(ω) + conj S⁽²⁾(−ω).
pub fn cross_one_sided(omega: f64, config: &DeviceConfig, options: &CrossOptions) -> Complex64 {
    let v = cross_two_sided(omega, config, &options.mask) + cross_two_sided(-omega, config, &options.mask).conj();
    v * Complex64::from_polar(1.0, options.phase_offset_deg.to_radians())
}

/// Full one-sided cross spectrum on a positive grid.
pub fn cross_spectrum_full(grid: &[f64], config: &DeviceConfig) -> Result<ComplexSpectrum, CrossError> {
    cross_spectrum_full_with(grid, config, &CrossOptions::default())
}

pub fn cross_spectrum_full_with(
    grid: &[f64],
    config: &DeviceConfig,
    options: &CrossOptions,
) -> Result<ComplexSpectrum, CrossError> {
    check_grid(grid, Sidedness::OneSided)?;
    check_beams(config)?;
    let values = grid.iter().map(|&w| cross_one_sided(w, config, options)).collect();
    Ok(ComplexSpectrum::new(grid.to_vec(), values, Sidedness::OneSided)?)
}

/// Resonant-signal cross spectrum split into shot-noise and classical parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonantCross {
    pub shot: ComplexSpectrum,
    pub classical: ComplexSpectrum,
    pub total: ComplexSpectrum,
}

/// Two-sided shot and classical parts for a signal beam on resonance.
pub fn resonant_two_sided(omega: f64, config: &DeviceConfig) -> (Complex64, Complex64) {
    let cav = &config.cavity;
    let (s, mt) = (&config.signal, &config.meter);
    let common = 2.0 * I * s.coupling_g * mt.coupling_g * config.mechanics.omega_m * pi_c(omega, cav, mt)
        / effective_denominator(omega, config);
    let shot = common * chi_c(omega, cav, s).conj();
    let classical = common
        * (cav.kappa_l * (chi_c(omega, cav, s) + chi_c(-omega, cav, s).conj()).norm_sqr() * s.classical_noise_b);
    (shot, classical)
}

/// One-sided resonant cross spectrum; the signal beam must be exactly on resonance.
pub fn cross_spectrum_resonant(grid: &[f64], config: &DeviceConfig) -> Result<ResonantCross, CrossError> {
    check_grid(grid, Sidedness::OneSided)?;
    check_beams(config)?;
    if config.signal.detuning != 0.0 {
        return Err(CrossError::DetunedSignal(config.signal.detuning));
    }
    let fold = |w: f64| {
        let (a, b) = resonant_two_sided(w, config);
        let (c, d) = resonant_two_sided(-w, config);
        (a + c.conj(), b + d.conj())
    };
    let (shot, classical): (Vec<_>, Vec<_>) = grid.iter().map(|&w| fold(w)).unzip();
    let total = shot.iter().zip(&classical).map(|(a, b)| a + b).collect();
    let mk = |v| ComplexSpectrum::new(grid.to_vec(), v, Sidedness::OneSided);
    Ok(ResonantCross { shot: mk(shot)?, classical: mk(classical)?, total: mk(total)? })
}

/// Phase lead of the classical-only over the shot-only cross spectrum at ω_m,
/// |Arg χ_c*(ω_m)| for a resonant signal beam, in degrees.
pub fn resonant_phase_offset(config: &DeviceConfig) -> f64 {
    let mut c = *config;
    c.signal.detuning = 0.0;
    chi_c(c.mechanics.omega_m, &c.cavity, &c.signal).conj().arg().abs().to_degrees()
}

/// 𝒞 = |S_ISM|²/(S_IS S_IM) from the three spectra at one frequency.
pub fn normalized_correlation(s_is: f64, s_im: f64, s_ism: Complex64) -> Result<f64, CrossError> {
    if !(s_is > 0.0 && s_im > 0.0) {
        return Err(CrossError::ZeroDenominator { s_is, s_im });
    }
    Ok(s_ism.norm_sqr() / (s_is * s_im))
}

/// Classical-noise-free estimate of the peak correlation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdealEstimate {
    /// R_S/(1 + R_S), the share of the motion driven by the signal's shot noise.
    pub rpsn_fraction: f64,
    /// κ_R/κ, the share of intracavity fluctuations leaving through the detected port.
    pub output_fraction: f64,
    pub efficiency: f64,
    pub value: f64,
}

pub fn ideal_estimate(rpsn_fraction: f64, output_fraction: f64, efficiency: f64) -> IdealEstimate {
    IdealEstimate { rpsn_fraction, output_fraction, efficiency, value: rpsn_fraction * output_fraction * efficiency }
}

/// [`ideal_estimate`] with the fraction taken from R_S of the configuration.
pub fn ideal_estimate_for(config: &DeviceConfig) -> Result<IdealEstimate, crate::params::ParamError> {
    let gm = crate::dynamics::total_damping(config);
    let rs = crate::params::derive(config, gm.max(config.mechanics.gamma_0))?.ratio_rs;
    Ok(ideal_estimate(
        rs / (1.0 + rs),
        config.cavity.kappa_r / config.cavity.kappa,
        config.detect_signal.efficiency,
    ))
}

/// Analytic 𝒞 near the mechanical peak, with real detection floors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationPrediction {
    /// Centre of the averaging band: the peak of the displacement spectrum (rad/s).
    pub center: f64,
    /// Half-width of the averaging band (rad/s).
    pub half_width: f64,
    pub s_is: f64,
    pub s_im: f64,
    pub s_ism: Complex64,
    pub value: f64,
}

/// Predicts 𝒞 the way it is estimated from data: the three one-sided spectra
/// (signal and meter including detector floors) are averaged over
/// `bins` points spread across ±`half_width` of the displacement peak.
pub fn predicted_correlation(
    config: &DeviceConfig,
    half_width: f64,
    bins: usize,
) -> Result<CorrelationPrediction, CrossError> {
    check_beams(config)?;
    let gm = crate::dynamics::total_damping(config).abs().max(config.mechanics.gamma_0);
    let wm = config.mechanics.omega_m;
    let center = crate::dynamics::peak_location(
        &|w| crate::response::displacement_psd(w, config),
        wm - 10.0 * gm,
        wm + 10.0 * gm,
    )
    .unwrap_or(wm);
    let model = crate::linear::LinearModel::new(config, &crate::montecarlo::NoiseSet::from_config(config));
    let n = bins.max(1);
    let (mut s_is, mut s_im, mut s_ism) = (0.0, 0.0, Complex64::new(0.0, 0.0));
    for k in 0..n {
        let w = if n == 1 { center } else { center - half_width + 2.0 * half_width * k as f64 / (n - 1) as f64 };
        let s = crate::linear::detected_spectra(&model, config, w);
        s_is += s.rin_signal;
        s_im += s.rin_meter;
        s_ism += cross_one_sided(w, config, &CrossOptions::default());
    }
    let inv = 1.0 / n as f64;
    let (s_is, s_im, s_ism) = (s_is * inv, s_im * inv, s_ism * inv);
    Ok(CorrelationPrediction { center, half_width, s_is, s_im, s_ism, value: normalized_correlation(s_is, s_im, s_ism)? })
}

/// Result of fitting the signal detuning to a measured cross spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetuningFit {
    /// Δ_S estimate (rad/s).
    pub detuning: f64,
    /// 1σ uncertainty of Δ_S (rad/s).
    pub sigma: f64,
    /// Real factor multiplying the model.
    pub scale: f64,
    /// √χ² at the optimum (in units of σ when per-bin errors are given).
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Least-squares fit of scale·cross_spectrum_full(Δ_S) to a measured one-sided cross spectrum.
///
/// `sigma` gives the standard error of each complex bin (per real
/// component); without it the errors are taken as uniform and estimated
/// from the residual.
pub fn fit_detuning(
    grid: &[f64],
    measured: &[Complex64],
    sigma: Option<&[f64]>,
    template: &DeviceConfig,
) -> Result<DetuningFit, CrossError> {
    check_grid(grid, Sidedness::OneSided)?;
    check_beams(template)?;
    if grid.len() != measured.len() || sigma.is_some_and(|s| s.len() != grid.len()) {
        return Err(CrossError::LengthMismatch { grid: grid.len(), measured: measured.len() });
    }
    let gm = crate::dynamics::total_damping(template).abs().max(template.mechanics.gamma_0);
    let wm = template.mechanics.omega_m;
    if grid[0] > wm - 5.0 * gm || grid[grid.len() - 1] < wm + 5.0 * gm {
        return Err(CrossError::NarrowSpectrum { needed: 5.0 * gm });
    }
    let weights: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|v| 1.0 / (v * v)).collect(),
        None => alloc::vec![1.0; grid.len()],
    };
    let model_at = |detuning: f64| -> Vec<Complex64> {
        let mut c = *template;
        c.signal.detuning = detuning;
        grid.iter().map(|&w| cross_one_sided(w, &c, &CrossOptions::default())).collect()
    };
    let chi2 = |model: &[Complex64], scale: f64| -> f64 {
        model.iter().zip(measured).zip(&weights).map(|((m, y), w)| (y - m * scale).norm_sqr() * w).sum()
    };
    let best_scale = |model: &[Complex64]| -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for ((m, y), w) in model.iter().zip(measured).zip(&weights) {
            num += (m.conj() * y).re * w;
            den += m.norm_sqr() * w;
        }
        if den > 0.0 { num / den } else { 0.0 }
    };
    let profile = |detuning: f64| {
        let m = model_at(detuning);
        chi2(&m, best_scale(&m))
    };

    // Coarse scan seeds the simplex away from the mirror-image local minimum.
    let span = 0.02 * template.cavity.kappa;
    let start = (-20..=20)
        .map(|k| span * k as f64 / 20.0)
        .map(|d| (d, profile(d)))
        .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let m0 = model_at(start.0);
    let s0 = best_scale(&m0);
    let s_step = if s0 != 0.0 { 0.1 * s0.abs() } else { 0.1 };
    let result = nelder_mead(
        |x| chi2(&model_at(x[0]), x[1]),
        &[start.0, s0],
        &[span / 20.0, s_step],
        &[-span * 2.0, f64::NEG_INFINITY],
        &[span * 2.0, f64::INFINITY],
        200,
        1e-10,
    );
    if !result.converged {
        return Err(CrossError::NoConvergence { iterations: result.iterations, best_detuning: result.x[0] });
    }
    let detuning = result.x[0];
    let chi2_min = profile(detuning);
    // χ² units: with known errors Δχ² = 1 marks 1σ; otherwise rescale by the reduced χ².
    let dof = (2 * grid.len()).saturating_sub(2).max(1) as f64;
    let noise_scale = if sigma.is_some() { 1.0 } else { chi2_min / dof };
    let h = (span * 1e-3).max(detuning.abs() * 1e-4);
    let curvature = (profile(detuning + h) - 2.0 * chi2_min + profile(detuning - h)) / (h * h);
    let sigma_d = if curvature > 0.0 { (2.0 * noise_scale / curvature).sqrt() } else { f64::INFINITY };
    Ok(DetuningFit {
        detuning,
        sigma: sigma_d,
        scale: result.x[1],
        residual_norm: chi2_min.sqrt(),
        iterations: result.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::hz;
    use crate::linear::LinearModel;
    use crate::montecarlo::NoiseSet;
    use crate::response::linear_grid;
    use proptest::prelude::*;

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    fn near_peak(c: &DeviceConfig) -> Vec<f64> {
        let w = c.mechanics.omega_m;
        linear_grid(w - hz(8e3), w + hz(8e3), 161)
    }

    #[test]
    fn matches_state_space_cross_spectrum() {
        // The state-space model is an independent route to the same cross spectrum.
        for (ds, b) in [(-hz(2e3), 0.0), (0.0, 0.0), (0.0, 0.3), (hz(300.0), 0.3)] {
            let mut c = DeviceConfig::device1();
            c.signal.detuning = ds;
            c.signal.classical_noise_b = b;
            let model = LinearModel::new(&c, &NoiseSet::from_config(&c));
            for f in [1.0e6, 1.549e6, 1.551e6, 1.552e6, 1.553e6] {
                let w = hz(f);
                let full = cross_one_sided(w, &c, &CrossOptions::default());
                let exact = model.spectra(w).cross;
                assert!(rel(full, exact) < 1e-8, "Δ={ds} B={b} f={f}: {full} vs {exact}");
            }
        }
    }

    #[test]
    fn no_signal_coupling_no_correlation() {
        let mut c = DeviceConfig::device1();
        c.signal.coupling_g = 0.0;
        let s = cross_spectrum_full(&near_peak(&c), &c).unwrap();
        assert!(s.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn resonant_form_is_the_zero_detuning_limit() {
        for b in [0.0, 0.3] {
            let mut c = DeviceConfig::device1();
            c.signal.detuning = 0.0;
            c.signal.classical_noise_b = b;
            let grid = near_peak(&c);
            let full = cross_spectrum_full(&grid, &c).unwrap();
            let res = cross_spectrum_resonant(&grid, &c).unwrap();
            for (a, r) in full.values().iter().zip(res.total.values()) {
                assert!(rel(*a, *r) < 1e-6);
            }
        }
        let c = DeviceConfig::device1();
        assert!(matches!(cross_spectrum_resonant(&near_peak(&c), &c), Err(CrossError::DetunedSignal(_))));
    }

    #[test]
    fn first_seven_terms_vanish_on_resonance() {
        let mut c = DeviceConfig::device1();
        c.signal.detuning = 0.0;
        for w in near_peak(&c) {
            let seven = cross_two_sided(w, &c, &TermMask::first_seven());
            let all = cross_two_sided(w, &c, &TermMask::ALL);
            assert!(seven.norm() < 1e-10 * all.norm());
        }
    }

    #[test]
    fn independent_of_detectors() {
        let c = DeviceConfig::device1();
        let mut d = c;
        d.detect_signal.efficiency = 0.2;
        d.detect_meter.dark_current_psd = 1e-20;
        let grid = near_peak(&c);
        assert_eq!(cross_spectrum_full(&grid, &c).unwrap(), cross_spectrum_full(&grid, &d).unwrap());
    }

    #[test]
    fn detuning_family_is_ordered() {
        let base = DeviceConfig::device1();
        let grid = linear_grid(hz(1.540e6), hz(1.562e6), 2001);
        let peaks: Vec<f64> = [-10.0, -5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|&d| {
                let mut c = base;
                c.signal.detuning = hz(d * 1e3);
                cross_spectrum_full(&grid, &c).unwrap().abs2().into_iter().fold(0.0, f64::max)
            })
            .collect();
        // In this module's sign convention the anti-damping side (Δ < 0) gives the tallest peak.
        assert!(peaks.windows(2).all(|w| w[0] > w[1]), "{peaks:?}");
    }

    #[test]
    fn phase_offset_is_arctan_two_omega_over_kappa() {
        let c = DeviceConfig::device1();
        let expect = (2.0 * c.mechanics.omega_m / c.cavity.kappa).atan().to_degrees();
        assert!((resonant_phase_offset(&c) - expect).abs() < 1e-9);
        assert!((expect - 74.0).abs() < 1.0);

        let mut r = c;
        r.signal.detuning = 0.0;
        r.signal.classical_noise_b = 1.0;
        let (shot, cl) = resonant_two_sided(r.mechanics.omega_m, &r);
        let diff = (cl / shot).arg().to_degrees().abs();
        assert!((diff - expect).abs() < 1e-6);
    }

    #[test]
    fn mechanical_phase_sweeps_half_a_turn() {
        let mut c = DeviceConfig::device1();
        c.signal.detuning = 0.0;
        c.signal.classical_noise_b = 0.5;
        let gm = crate::dynamics::total_damping(&c);
        let center = crate::dynamics::peak_location(
            &|w| crate::response::displacement_psd(w, &c),
            c.mechanics.omega_m - 10.0 * gm,
            c.mechanics.omega_m + 10.0 * gm,
        )
        .unwrap();
        let (s_lo, c_lo) = resonant_two_sided(center - 3.0 * gm, &c);
        let (s_hi, c_hi) = resonant_two_sided(center + 3.0 * gm, &c);
        for (lo, hi) in [(s_lo, s_hi), (c_lo, c_hi)] {
            let swing = (lo / hi).arg().to_degrees().abs();
            assert!(swing > 140.0, "{swing}");
        }
    }

    #[test]
    fn resonant_form_has_no_bath_dependence() {
        let mut c = DeviceConfig::device1();
        c.signal.detuning = 0.0;
        let mut hot = c;
        hot.env.temperature *= 10.0;
        let grid = near_peak(&c);
        assert_eq!(cross_spectrum_resonant(&grid, &c).unwrap(), cross_spectrum_resonant(&grid, &hot).unwrap());
    }

    #[test]
    fn classical_noise_moves_phase_monotonically() {
        let mut c = DeviceConfig::device1();
        c.signal.detuning = 0.0;
        let w = c.mechanics.omega_m;
        let phase = |b: f64| {
            let mut r = c;
            r.signal.classical_noise_b = b;
            let (s, cl) = resonant_two_sided(w, &r);
            ((s + cl) / s, cl / s)
        };
        let classical_only = phase(1.0).1.arg();
        let series: Vec<f64> = [0.0, 0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0, 1e4].iter().map(|&b| phase(b).0.arg()).collect();
        let dir = (series[8] - series[0]).signum();
        assert!(series.windows(2).all(|p| (p[1] - p[0]) * dir > 0.0), "{series:?}");
        assert_eq!(series[0], 0.0);
        assert!((series[8] - classical_only).abs() < 0.01);
    }

    #[test]
    fn ideal_estimate_value() {
        let e = ideal_estimate(0.40, 0.59, 0.63);
        assert!((e.value - 0.149).abs() < 5e-4);
    }

    #[test]
    fn correlation_needs_positive_denominators() {
        assert!(normalized_correlation(0.0, 1.0, Complex64::new(1.0, 0.0)).is_err());
        assert_eq!(normalized_correlation(2.0, 2.0, Complex64::new(0.0, 2.0)).unwrap(), 1.0);
    }

    #[test]
    fn strong_classical_drive_correlates_fully() {
        let mut c = DeviceConfig::device1();
        c.signal.classical_noise_b = 1e6;
        for d in [&mut c.detect_signal, &mut c.detect_meter] {
            d.efficiency = 1.0;
            d.dark_current_psd = 0.0;
        }
        c.env.temperature = 1e-6;
        let p = predicted_correlation(&c, hz(200.0), 21).unwrap();
        assert!(p.value > 0.95, "{}", p.value);
    }

    #[test]
    fn fig3a_prediction_near_ideal_estimate() {
        let c = DeviceConfig::fig3a();
        let p = predicted_correlation(&c, hz(200.0), 41).unwrap();
        assert!((p.value - 0.15).abs() < 0.02, "{}", p.value);
    }

    fn noisy(c: &DeviceConfig, grid: &[f64], rel_noise: f64, seed: u64) -> (Vec<Complex64>, Vec<f64>) {
        use rand_chacha::rand_core::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let clean = cross_spectrum_full(grid, c).unwrap();
        let peak = clean.abs2().into_iter().fold(0.0, f64::max).sqrt();
        let sd = rel_noise * peak;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals = clean
            .values()
            .iter()
            .map(|v| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                v + Complex64::new(a, b) * sd
            })
            .collect();
        (vals, alloc::vec![sd; grid.len()])
    }

    #[test]
    fn detuning_fit_recovers_truth() {
        for (truth, seed) in [(hz(300.0), 1), (0.0, 2), (-hz(300.0), 3)] {
            let mut c = DeviceConfig::fig3a();
            c.signal.detuning = truth;
            let grid = near_peak(&c);
            let (y, s) = noisy(&c, &grid, 0.02, seed);
            let fit = fit_detuning(&grid, &y, Some(&s), &c).unwrap();
            assert!(fit.sigma.is_finite() && fit.sigma > 0.0);
            assert!((fit.detuning - truth).abs() < 2.0 * fit.sigma + hz(1.0), "{} ± {} vs {truth}", fit.detuning, fit.sigma);
            assert!((fit.scale - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn detuning_fit_needs_wide_spectrum() {
        let c = DeviceConfig::fig3a();
        let w = c.mechanics.omega_m;
        let grid = linear_grid(w - hz(100.0), w + hz(100.0), 21);
        let y = cross_spectrum_full(&grid, &c).unwrap();
        assert!(matches!(fit_detuning(&grid, y.values(), None, &c), Err(CrossError::NarrowSpectrum { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn two_sided_is_hermitian_under_reflection(f in 1.3e6f64..1.8e6, ds in -5e3f64..5e3) {
            // For real currents S⁽²⁾(−ω) = conj S⁽²⁾(ω) must hold term-summed.
            let mut c = DeviceConfig::device1();
            c.signal.detuning = hz(ds);
            c.signal.classical_noise_b = 0.2;
            let w = hz(f);
            let a = cross_two_sided(w, &c, &TermMask::ALL);
            let b = cross_two_sided(-w, &c, &TermMask::ALL);
            prop_assert!((a - b.conj()).norm() < 1e-8 * a.norm());
        }
    }
}
