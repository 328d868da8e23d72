//! Optomechanical rates, phonon occupation, stability and multimode coupling geometry.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependent enables std float methods
use num_traits::Float;

use crate::consts::HBAR;
use crate::params::{Beam, Cavity, DeviceConfig, MechanicalMode};
use crate::response::{chi_c, chi_m, displacement_terms, integrate_one_sided, pi_c};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("dynamically unstable: total mechanical damping {0} rad/s is not positive")]
    Unstable(f64),
    #[error("peak not bracketed inside the search window")]
    PeakNotBracketed,
    #[error("laser spot ({x}, {y}) lies outside the membrane of side {side}")]
    SpotOutside { x: f64, y: f64, side: f64 },
    #[error("mode set is empty")]
    EmptyModeSet,
}

/// Γ_opt = g²Nκ(|χ_c(ω_m)|² − |χ_c(−ω_m)|²); positive values cool the mode.
pub fn optical_damping(beam: &Beam, cavity: &Cavity, mechanics: &MechanicalMode) -> f64 {
    let w = mechanics.omega_m;
    beam.coupling_g.powi(2)
        * beam.photon_number
        * cavity.kappa
        * (chi_c(w, cavity, beam).norm_sqr() - chi_c(-w, cavity, beam).norm_sqr())
}

/// Γ_m = Γ_0 + Γ_S + Γ_M.
pub fn total_damping(config: &DeviceConfig) -> f64 {
    let (m, c) = (&config.mechanics, &config.cavity);
    m.gamma_0 + optical_damping(&config.signal, c, m) + optical_damping(&config.meter, c, m)
}

/// Location of the maximum of `f` in `[lo, hi]`.
///
/// A 4001-point scan brackets the maximum, then golden-section search
/// refines it. Fails if the scan maximum sits on the window edge.
pub fn peak_location(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64, DynamicsError> {
    const N: usize = 4001;
    let step = (hi - lo) / (N - 1) as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..N {
        let v = f(lo + step * k as f64);
        if v > best.1 {
            best = (k, v);
        }
    }
    if best.0 == 0 || best.0 == N - 1 {
        return Err(DynamicsError::PeakNotBracketed);
    }
    let (mut a, mut b) = (lo + step * (best.0 - 1) as f64, lo + step * (best.0 + 1) as f64);
    let r = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a) <= 1e-12 * b.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    Ok(0.5 * (a + b))
}

fn single_beam_peak(beam: Option<&Beam>, cavity: &Cavity, m: &MechanicalMode) -> Result<f64, DynamicsError> {
    let gamma = m.gamma_0 + beam.map_or(0.0, |b| optical_damping(b, cavity, m).abs());
    let f = |w: f64| {
        let bare = (chi_m(w, m) * chi_m(-w, m).conj()).inv();
        let n = match beam {
            Some(b) => {
                let self_energy = pi_c(w, cavity, b) * (b.photon_number * b.coupling_g.powi(2));
                bare - num_complex::Complex64::new(0.0, 2.0 * m.omega_m) * self_energy
            }
            None => bare,
        };
        1.0 / n.norm_sqr()
    };
    peak_location(&f, m.omega_m - 20.0 * gamma, m.omega_m + 20.0 * gamma)
}

/// Optical-spring shift δω_m: how far one beam moves the peak of |𝒩(ω)|⁻².
pub fn optical_spring(beam: &Beam, cavity: &Cavity, mechanics: &MechanicalMode) -> Result<f64, DynamicsError> {
    if beam.photon_number == 0.0 || beam.coupling_g == 0.0 {
        return Ok(0.0);
    }
    Ok(single_beam_peak(Some(beam), cavity, mechanics)? - single_beam_peak(None, cavity, mechanics)?)
}

/// Phonon occupation from the rate equation n_m = (n_thΓ_0 + n_SΓ_S + n_MΓ_M)/Γ_m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Occupation {
    pub n_m: f64,
    pub gamma_m: f64,
    pub gamma_s: f64,
    pub gamma_meter: f64,
    /// n_th·Γ_0.
    pub thermal_product: f64,
    /// n_S·Γ_S, from the signal shot-noise and classical spectral areas.
    pub signal_product: f64,
    /// n_M·Γ_M, from the meter spectral area.
    pub meter_product: f64,
}

impl Occupation {
    /// Occupation of the meter bath alone, n_M = (n_MΓ_M)/Γ_M.
    pub fn meter_bath_occupation(&self) -> f64 {
        self.meter_product / self.gamma_meter
    }

    /// Mode temperature ħω_m n_m/k_B.
    pub fn temperature(&self, mechanics: &MechanicalMode) -> f64 {
        HBAR * mechanics.omega_m * self.n_m / crate::consts::K_B
    }
}

/// Rate-equation occupation of the mode.
///
/// A light bath's product n_kΓ_k is fixed by requiring that its spectral
/// term have area (2n_k + 1)Z_zp²Γ_k/Γ_m, the area a bath at occupation n_k
/// coupled at rate Γ_k produces. Then ∫S_z dω/2π = (2n_m + 1)Z_zp² whenever
/// the thermal term behaves the same way.
pub fn phonon_occupation(config: &DeviceConfig) -> Result<Occupation, DynamicsError> {
    let (m, c) = (&config.mechanics, &config.cavity);
    let gamma_s = optical_damping(&config.signal, c, m);
    let gamma_meter = optical_damping(&config.meter, c, m);
    let gamma_m = m.gamma_0 + gamma_s + gamma_meter;
    if !(gamma_m > 0.0) {
        return Err(DynamicsError::Unstable(gamma_m));
    }
    let zzp2 = config.z_zp().powi(2);
    let area = |pick: fn(&[f64; 4]) -> f64| {
        integrate_one_sided(|w| pick(&displacement_terms(w, config)), m.omega_m, gamma_m)
    };
    let signal_area = area(|t| t[1] + t[3]);
    let meter_area = area(|t| t[2]);
    let product = |a: f64, g: f64| if a == 0.0 && g == 0.0 { 0.0 } else { (a * gamma_m / zzp2 - g) / 2.0 };
    let thermal_product = config.n_th() * m.gamma_0;
    let signal_product = product(signal_area, gamma_s);
    let meter_product = product(meter_area, gamma_meter);
    Ok(Occupation {
        n_m: (thermal_product + signal_product + meter_product) / gamma_m,
        gamma_m,
        gamma_s,
        gamma_meter,
        thermal_product,
        signal_product,
        meter_product,
    })
}

/// Effective mode temperature T_bath·Γ_0/Γ_m.
pub fn effective_temperature(config: &DeviceConfig) -> Result<f64, DynamicsError> {
    let gm = total_damping(config);
    if !(gm > 0.0) {
        return Err(DynamicsError::Unstable(gm));
    }
    Ok(config.env.temperature * config.mechanics.gamma_0 / gm)
}

/// One drumhead mode of a square membrane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembraneMode {
    pub i: u32,
    pub j: u32,
    pub omega: f64,
    pub gamma: f64,
    /// Coupling G relative to the reference mode.
    pub relative_g: f64,
}

/// The membrane's modes as seen by a Gaussian laser spot.
#[derive(Clone, Debug, PartialEq)]
pub struct MembraneModeSet {
    pub side_length: f64,
    pub modes: Vec<MembraneMode>,
    pub spot: (f64, f64),
    /// 1/e² intensity radius.
    pub spot_waist: f64,
    pub reference: (u32, u32),
    /// Effective mass assigned to every mode.
    pub mass: f64,
}

impl MembraneModeSet {
    /// Modes (i, j) with 1 ≤ i, j ≤ `max_index`, ω_ij = ω_11√((i² + j²)/2),
    /// every mode sharing the reference mode's Γ_0 and mass.
    pub fn square(
        mechanics: &MechanicalMode,
        side_length: f64,
        spot: (f64, f64),
        spot_waist: f64,
        max_index: u32,
    ) -> Result<Self, DynamicsError> {
        let reference = mechanics.mode_indices;
        let dispersion = |i: u32, j: u32| (((i * i + j * j) as f64) / 2.0).sqrt();
        let omega_11 = mechanics.omega_m / dispersion(reference.0, reference.1);
        let mut modes = Vec::new();
        for i in 1..=max_index {
            for j in 1..=max_index {
                modes.push(MembraneMode {
                    i,
                    j,
                    omega: omega_11 * dispersion(i, j),
                    gamma: mechanics.gamma_0,
                    relative_g: mode_coupling_ratio(side_length, spot, spot_waist, (i, j), reference)?,
                });
            }
        }
        Ok(Self { side_length, modes, spot, spot_waist, reference, mass: mechanics.mass })
    }

    /// 0.5 mm membrane, 72 μm spot at the (2,2) antinode, modes up to (8,8).
    pub fn default_for(mechanics: &MechanicalMode) -> Self {
        let side = 0.5e-3;
        Self::square(mechanics, side, (side / 4.0, side / 4.0), 72e-6, 8)
            .expect("default spot lies inside the membrane")
    }
}

fn overlap_1d(side: f64, center: f64, waist: f64, index: u32) -> f64 {
    // Composite Simpson on [0, L]; the integrand is smooth, 4000 panels give ~1e-12.
    const PANELS: usize = 4000;
    let h = side / PANELS as f64;
    let k = index as f64 * core::f64::consts::PI / side;
    let f = |x: f64| (-2.0 * (x - center).powi(2) / (waist * waist)).exp() * (k * x).sin();
    let mut acc = f(0.0) + f(side);
    for n in 1..PANELS {
        acc += if n % 2 == 1 { 4.0 } else { 2.0 } * f(h * n as f64);
    }
    acc * h / 3.0
}

/// Coupling of mode (i, j) relative to the reference mode:
/// |∬ exp(−2|r − r₀|²/w²) sin(iπx/L) sin(jπy/L) dA| over the reference mode's value.
///
/// The Gaussian and the mode shape both factor in x and y, so the 2-D
/// integral is a product of two 1-D quadratures.
pub fn mode_coupling_ratio(
    side: f64,
    spot: (f64, f64),
    waist: f64,
    mode: (u32, u32),
    reference: (u32, u32),
) -> Result<f64, DynamicsError> {
    let inside = |v: f64| v > 0.0 && v < side;
    if !inside(spot.0) || !inside(spot.1) {
        return Err(DynamicsError::SpotOutside { x: spot.0, y: spot.1, side });
    }
    let ov = |(i, j): (u32, u32)| overlap_1d(side, spot.0, waist, i) * overlap_1d(side, spot.1, waist, j);
    Ok((ov(mode) / ov(reference)).abs())
}

/// Per-mode bistability threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeThreshold {
    pub i: u32,
    pub j: u32,
    /// 0.77κmω²/(ħG²); infinite for an uncoupled mode.
    pub photon_number: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BistabilityReport {
    /// Combined threshold 1/Σ(1/N_c,ij): the static optical spring of every
    /// mode softens the same cavity detuning, so the inverse thresholds add.
    pub critical_photon_number: f64,
    pub per_mode: Vec<ModeThreshold>,
}

/// Critical intracavity photon number for static optomechanical bistability.
///
/// `coupling_per_length` is the reference mode's G = g/Z_zp (rad/s per m).
pub fn bistability_threshold(
    modeset: &MembraneModeSet,
    cavity: &Cavity,
    coupling_per_length: f64,
) -> Result<BistabilityReport, DynamicsError> {
    if modeset.modes.is_empty() {
        return Err(DynamicsError::EmptyModeSet);
    }
    let per_mode: Vec<ModeThreshold> = modeset
        .modes
        .iter()
        .map(|m| {
            let g = coupling_per_length * m.relative_g;
            let n = if g == 0.0 {
                f64::INFINITY
            } else {
                0.77 * cavity.kappa * modeset.mass * m.omega * m.omega / (HBAR * g * g)
            };
            ModeThreshold { i: m.i, j: m.j, photon_number: n }
        })
        .collect();
    let inverse: f64 = per_mode.iter().map(|t| 1.0 / t.photon_number).sum();
    Ok(BistabilityReport { critical_photon_number: 1.0 / inverse, per_mode })
}

/// Net damping of one membrane mode under both beams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeStability {
    pub i: u32,
    pub j: u32,
    pub omega: f64,
    pub relative_g: f64,
    /// Γ_0,ij + Γ_S,ij + Γ_M,ij.
    pub gamma_net: f64,
    pub stable: bool,
}

/// Net damping of every mode in the set; modes with Γ_net ≤ 0 are flagged unstable.
pub fn stability_check(config: &DeviceConfig, modeset: &MembraneModeSet) -> Vec<ModeStability> {
    let zzp_ref = config.z_zp();
    modeset
        .modes
        .iter()
        .map(|mode| {
            let mech = MechanicalMode {
                omega_m: mode.omega,
                gamma_0: mode.gamma,
                mass: modeset.mass,
                mode_indices: (mode.i, mode.j),
            };
            let scale = mode.relative_g * mech.z_zp() / zzp_ref;
            let rate = |b: &Beam| {
                let mut b = *b;
                b.coupling_g *= scale;
                optical_damping(&b, &config.cavity, &mech)
            };
            let gamma_net = mode.gamma + rate(&config.signal) + rate(&config.meter);
            ModeStability {
                i: mode.i,
                j: mode.j,
                omega: mode.omega,
                relative_g: mode.relative_g,
                gamma_net,
                stable: gamma_net > 0.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::{hz, TWO_PI};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn no_damping_on_resonance() {
        let c = DeviceConfig::device1();
        let mut b = c.meter;
        b.detuning = 0.0;
        assert_eq!(optical_damping(&b, &c.cavity, &c.mechanics), 0.0);
    }

    #[test]
    fn meter_damping_matches_quoted_linewidth() {
        let mut c = DeviceConfig::device1();
        c.meter.coupling_g = hz(16.4);
        let g = optical_damping(&c.meter, &c.cavity, &c.mechanics);
        assert!(rel(g, hz(1.43e3)) < 0.10, "Γ_M/2π = {}", g / TWO_PI);
        // hand arithmetic with the locked susceptibility sign
        let (k, d, w) = (c.cavity.kappa, c.meter.detuning, c.mechanics.omega_m);
        let l = |x: f64| 1.0 / (k * k / 4.0 + (x - d).powi(2));
        let expect = hz(16.4).powi(2) * 7e6 * k * (l(w) - l(-w));
        assert!(rel(g, expect) < 1e-12);
    }

    proptest! {
        #[test]
        fn damping_antisymmetric_in_detuning(d in -2e7f64..2e7) {
            let c = DeviceConfig::device1();
            let mut b = c.meter;
            b.detuning = d;
            let up = optical_damping(&b, &c.cavity, &c.mechanics);
            b.detuning = -d;
            let down = optical_damping(&b, &c.cavity, &c.mechanics);
            prop_assert!((up + down).abs() <= 1e-12 * up.abs().max(1e-300));
        }
    }

    #[test]
    fn spring_zero_without_light_or_detuning() {
        let c = DeviceConfig::device1();
        let mut b = c.signal;
        b.photon_number = 0.0;
        assert_eq!(optical_spring(&b, &c.cavity, &c.mechanics).unwrap(), 0.0);
        b.photon_number = 3.6e8;
        b.detuning = 0.0;
        let gm = c.mechanics.gamma_0;
        assert!(optical_spring(&b, &c.cavity, &c.mechanics).unwrap().abs() <= 1e-3 * gm);
    }

    #[test]
    fn spring_linear_in_signal_power() {
        let c = DeviceConfig::device1();
        let ns: Vec<f64> = (1..=8).map(|k| 0.45e8 * k as f64).collect();
        let shifts: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let mut b = c.signal;
                b.photon_number = n;
                optical_spring(&b, &c.cavity, &c.mechanics).unwrap()
            })
            .collect();
        assert!(shifts.iter().all(|&s| s != 0.0));
        let fit = crate::fit::polyfit(&ns, &shifts, 1, None).unwrap();
        assert!(fit.r_squared > 0.999, "R² = {}", fit.r_squared);
    }

    #[test]
    fn occupation_without_light_is_thermal() {
        let c = DeviceConfig::device1().with_signal_photons(0.0).with_meter_photons(0.0);
        let o = phonon_occupation(&c).unwrap();
        assert!(rel(o.n_m, c.n_th()) < 1e-14);
    }

    #[test]
    fn cooled_occupation_and_temperature() {
        let c = DeviceConfig::device1().with_signal_photons(0.0);
        let o = phonon_occupation(&c).unwrap();
        let by_hand = c.n_th() * c.mechanics.gamma_0 / total_damping(&c);
        // meter heating adds a little on top of the thermal share
        assert!(o.n_m > by_hand && o.n_m < 1.05 * by_hand, "{} vs {}", o.n_m, by_hand);
        assert!((o.n_m - 21.6).abs() < 1.5, "n_m = {}", o.n_m);
        let t = effective_temperature(&c).unwrap();
        assert!(t > 1.5e-3 && t < 1.75e-3, "T_eff = {t}");
    }

    #[test]
    fn meter_bath_reaches_doppler_floor() {
        // Resolved-sideband optimum Δ_M = ω_m, weak coupling (Γ_M ≪ κ).
        let mut c = DeviceConfig::device1().with_signal_photons(0.0);
        c.meter.detuning = c.mechanics.omega_m;
        c.meter.photon_number = 1e6;
        let o = phonon_occupation(&c).unwrap();
        let n_min = (c.cavity.kappa / (4.0 * c.mechanics.omega_m)).powi(2);
        assert!(o.gamma_meter < 1e-2 * c.cavity.kappa);
        assert!(rel(o.meter_bath_occupation(), n_min) < 0.01, "{} vs {n_min}", o.meter_bath_occupation());
    }

    #[test]
    fn unstable_occupation_is_an_error() {
        let mut c = DeviceConfig::device1();
        c.meter.detuning = -c.meter.detuning;
        assert!(matches!(phonon_occupation(&c), Err(DynamicsError::Unstable(_))));
    }

    #[test]
    fn area_sum_rule_across_powers() {
        for ns in [0.0, 1.2e8, 3.6e8] {
            let mut c = DeviceConfig::device1().with_signal_photons(ns);
            c.signal.classical_noise_b = 0.1;
            let o = phonon_occupation(&c).unwrap();
            let area = integrate_one_sided(|w| crate::response::displacement_psd(w, &c), c.mechanics.omega_m, o.gamma_m);
            let expect = (2.0 * o.n_m + 1.0) * c.z_zp().powi(2);
            assert!(rel(area, expect) < 0.01, "N_S={ns}: {area} vs {expect}");
        }
    }

    #[test]
    fn rate_equation_matches_spectral_area_across_sweep() {
        for k in 0..10 {
            let c = DeviceConfig::device1().with_signal_photons(0.4e8 * k as f64);
            let o = phonon_occupation(&c).unwrap();
            let area = integrate_one_sided(|w| crate::response::displacement_psd(w, &c), c.mechanics.omega_m, o.gamma_m);
            let from_area = area / (2.0 * c.z_zp().powi(2)) - 0.5;
            assert!(rel(o.n_m, from_area) < 0.01);
        }
    }

    #[test]
    fn rs_matches_term_area_ratio() {
        let mut c = DeviceConfig::device1();
        c.signal.detuning = 0.0;
        let gm = total_damping(&c);
        let area = |k: usize| integrate_one_sided(|w| displacement_terms(w, &c)[k], c.mechanics.omega_m, gm);
        let rs = crate::params::derive(&c, gm).unwrap().ratio_rs;
        assert!(rel(area(1) / area(0), rs) < 0.02, "{} vs {rs}", area(1) / area(0));
    }

    #[test]
    fn coupling_ratio_limits() {
        let l = 0.5e-3;
        // point-like spot at the (2,2) antinode: (2,2)/(1,1) → 1/sin²(π/4) = 2
        let r = mode_coupling_ratio(l, (l / 4.0, l / 4.0), 1e-6, (1, 1), (2, 2)).unwrap();
        assert!(rel(1.0 / r, 2.0) < 1e-4, "{}", 1.0 / r);
        // spot on the x = L/2 node line of (2,2)
        let node = mode_coupling_ratio(l, (l / 2.0, l / 4.0), 72e-6, (2, 2), (1, 1)).unwrap();
        assert!(node < 1e-9);
        assert!(mode_coupling_ratio(l, (l * 1.1, l / 4.0), 72e-6, (2, 2), (1, 1)).is_err());
    }

    #[test]
    fn coupling_ratio_against_2d_quadrature() {
        let (l, w) = (0.5e-3, 72e-6);
        let (x0, y0) = (l / 4.0, l / 4.0);
        // independent 2-D midpoint rule at 1600×1600 cells
        let n = 1600;
        let h = l / n as f64;
        let ov = |i: f64, j: f64| {
            let mut acc = 0.0;
            for a in 0..n {
                let x = (a as f64 + 0.5) * h;
                for b in 0..n {
                    let y = (b as f64 + 0.5) * h;
                    let r2 = (x - x0).powi(2) + (y - y0).powi(2);
                    acc += (-2.0 * r2 / (w * w)).exp()
                        * (i * core::f64::consts::PI * x / l).sin()
                        * (j * core::f64::consts::PI * y / l).sin();
                }
            }
            acc * h * h
        };
        let reference = ov(2.0, 2.0);
        for (i, j) in [(1u32, 1u32), (1, 3), (4, 4), (3, 2)] {
            let oracle = (ov(i as f64, j as f64) / reference).abs();
            let ours = mode_coupling_ratio(l, (x0, y0), w, (i, j), (2, 2)).unwrap();
            assert!((ours - oracle).abs() < 1e-6 * oracle.max(1e-3), "({i},{j}): {ours} vs {oracle}");
        }
        // the (4,4) mode has node lines through the (2,2) antinode
        let weak = mode_coupling_ratio(l, (x0, y0), w, (4, 4), (2, 2)).unwrap();
        assert!(weak < 1e-6);
    }

    #[test]
    fn single_mode_threshold_by_hand() {
        let c = DeviceConfig::device1();
        let set = MembraneModeSet {
            side_length: 0.5e-3,
            modes: alloc::vec![MembraneMode { i: 2, j: 2, omega: c.mechanics.omega_m, gamma: c.mechanics.gamma_0, relative_g: 1.0 }],
            spot: (0.125e-3, 0.125e-3),
            spot_waist: 72e-6,
            reference: (2, 2),
            mass: c.mechanics.mass,
        };
        let g = c.signal.coupling_g / c.z_zp();
        let r = bistability_threshold(&set, &c.cavity, g).unwrap();
        let hbar = 1.054_571_817e-34;
        let expect = 0.77 * c.cavity.kappa * 7e-12 * c.mechanics.omega_m.powi(2) / (hbar * g * g);
        assert!(rel(r.critical_photon_number, expect) < 1e-12);
        let r2 = bistability_threshold(&set, &c.cavity, 2.0 * g).unwrap();
        assert!(rel(r2.critical_photon_number, expect / 4.0) < 1e-12);
    }

    #[test]
    fn default_modeset_threshold() {
        let c = DeviceConfig::device1();
        let set = MembraneModeSet::default_for(&c.mechanics);
        assert_eq!(set.modes.len(), 64);
        let r = bistability_threshold(&set, &c.cavity, c.signal.coupling_g / c.z_zp()).unwrap();
        let ratio = r.critical_photon_number / 3.5e8;
        assert!(ratio > 0.5 && ratio < 2.0, "N_c = {}", r.critical_photon_number);
    }

    #[test]
    fn stability_of_presets() {
        let c = DeviceConfig::device1();
        let set = MembraneModeSet::default_for(&c.mechanics);
        let mut quiet = c;
        quiet.signal.detuning = 0.0;
        assert!(stability_check(&quiet, &set).iter().all(|m| m.stable));

        let mut flipped = c;
        flipped.meter.detuning = -flipped.meter.detuning;
        let report = stability_check(&flipped, &set);
        let m22 = report.iter().find(|m| (m.i, m.j) == (2, 2)).unwrap();
        assert!(!m22.stable);

        let dark = c.with_signal_photons(0.0).with_meter_photons(0.0);
        for m in stability_check(&dark, &set) {
            assert!(m.stable);
            assert_eq!(m.gamma_net, c.mechanics.gamma_0);
        }
    }
}
