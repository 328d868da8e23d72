//! Physical parameter sets, validation and closed-form derived quantities.
//!
//! Everything is SI with angular frequencies (rad/s). Detunings follow
//! Δ = ω_cavity − ω_laser, so Δ > 0 is a red-detuned (cooling) beam.

use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // unused when a dependent enables std float methods
use num_traits::Float;

use crate::consts::{hz, C_LIGHT, HBAR, K_B, Q_E};

/// The mechanical mode read out by both beams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MechanicalMode {
    /// Resonance angular frequency ω_m (rad/s).
    pub omega_m: f64,
    /// Intrinsic amplitude damping rate Γ_0 (rad/s).
    pub gamma_0: f64,
    /// Effective mass (kg).
    pub mass: f64,
    /// Drumhead mode label (i, j).
    pub mode_indices: (u32, u32),
}

impl MechanicalMode {
    /// Zero-point amplitude √(ħ/2mω_m) in metres.
    pub fn z_zp(&self) -> f64 {
        (HBAR / (2.0 * self.mass * self.omega_m)).sqrt()
    }

    /// Thermal occupation k_B T/ħω_m in the Rayleigh–Jeans limit.
    pub fn n_th(&self, temperature: f64) -> f64 {
        K_B * temperature / (HBAR * self.omega_m)
    }
}

/// Cavity linewidth and its partition into the two mirror ports and internal loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cavity {
    pub kappa: f64,
    /// Input (left) mirror coupling rate.
    pub kappa_l: f64,
    /// Output (right) mirror coupling rate; the detected port.
    pub kappa_r: f64,
    pub kappa_int: f64,
}

impl Cavity {
    /// Builds a cavity from κ and the left/right fractions; the rest is internal loss.
    pub fn from_fractions(kappa: f64, frac_l: f64, frac_r: f64) -> Self {
        let kappa_l = frac_l * kappa;
        let kappa_r = frac_r * kappa;
        Self { kappa, kappa_l, kappa_r, kappa_int: kappa - kappa_l - kappa_r }
    }
}

/// One laser beam driving the cavity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Beam {
    /// Δ = ω_cavity − ω_laser (rad/s), including the static optomechanical shift.
    pub detuning: f64,
    /// Mean intracavity photon number N = |ā|².
    pub photon_number: f64,
    /// Single-photon optomechanical coupling g = G·Z_zp (rad/s).
    pub coupling_g: f64,
    /// Classical input intensity noise relative to shot noise (locally white).
    pub classical_noise_b: f64,
    /// Vacuum wavelength (m).
    pub wavelength: f64,
}

impl Beam {
    /// Optical angular frequency 2πc/λ.
    pub fn optical_omega(&self) -> f64 {
        2.0 * core::f64::consts::PI * C_LIGHT / self.wavelength
    }

    /// Energy of one photon, ħω (J).
    pub fn photon_energy(&self) -> f64 {
        HBAR * self.optical_omega()
    }

    /// Photon flux leaving the cavity through the output port, κ_R·N (1/s).
    pub fn output_flux(&self, cavity: &Cavity) -> f64 {
        cavity.kappa_r * self.photon_number
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Environment {
    /// Bath temperature (K).
    pub temperature: f64,
}

/// Photodetection chain for one beam.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    /// Quantum efficiency ε including collection losses after the cavity.
    pub efficiency: f64,
    /// One-sided dark-current power spectral density (A²/Hz).
    pub dark_current_psd: f64,
    /// Responsivity ℛ (A/W) applied to the detected optical power.
    pub responsivity: f64,
}

impl Detection {
    /// A detector whose responsivity is one electron per detected photon, q_e/ħω.
    pub fn photon_counting(wavelength: f64, efficiency: f64) -> Self {
        let omega = 2.0 * core::f64::consts::PI * C_LIGHT / wavelength;
        Self { efficiency, dark_current_psd: 0.0, responsivity: Q_E / (HBAR * omega) }
    }

    /// Mean photocurrent for a beam: ℛ·ħω·ε·κ_R·N.
    pub fn mean_current(&self, beam: &Beam, cavity: &Cavity) -> f64 {
        self.responsivity * beam.photon_energy() * self.efficiency * beam.output_flux(cavity)
    }
}

/// Complete parameter set of one two-beam optomechanical device.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceConfig {
    pub mechanics: MechanicalMode,
    pub cavity: Cavity,
    /// Strong beam near cavity resonance supplying the radiation-pressure shot noise.
    pub signal: Beam,
    /// Weak red-detuned beam that reads out and cools the motion.
    pub meter: Beam,
    pub env: Environment,
    pub detect_signal: Detection,
    pub detect_meter: Detection,
}

impl DeviceConfig {
    /// Device of the main measurement (membrane (2,2) mode at 1.551 MHz).
    ///
    /// The signal-beam detuning sits on the anti-damping side (Δ_S < 0 here);
    /// the signal beam then narrows the mechanical line as N_S grows.
    pub fn device1() -> Self {
        let wavelength = 1064e-9;
        let g = hz(16.1);
        let beam = |detuning, photon_number| Beam {
            detuning,
            photon_number,
            coupling_g: g,
            classical_noise_b: 0.0,
            wavelength,
        };
        let detect = Detection::photon_counting(wavelength, 0.63);
        Self {
            mechanics: MechanicalMode {
                omega_m: hz(1.551e6),
                gamma_0: hz(0.47),
                mass: 7e-12,
                mode_indices: (2, 2),
            },
            cavity: Cavity::from_fractions(hz(0.89e6), 0.32, 0.59),
            signal: beam(-hz(2e3), 3.6e8),
            meter: beam(hz(0.7e6), 7.0e6),
            env: Environment { temperature: 4.9 },
            detect_signal: detect,
            detect_meter: detect,
        }
    }

    /// Alternative device with a larger cavity linewidth and a higher-Q membrane.
    pub fn device2() -> Self {
        let mut c = Self::device1();
        let g = hz(16.3);
        c.mechanics.omega_m = hz(1.575e6);
        c.mechanics.gamma_0 = hz(0.116);
        c.cavity = Cavity::from_fractions(hz(1.17e6), 0.32, 0.59);
        c.signal.coupling_g = g;
        c.signal.photon_number = 1.0e8;
        c.signal.detuning = -hz(1.5e3);
        c.meter.coupling_g = g;
        c.meter.photon_number = 3.4e6;
        c.meter.detuning = hz(1.6e6);
        c
    }

    /// Device 1 at the settings of the cross-correlation measurement.
    pub fn fig3a() -> Self {
        let mut c = Self::device1();
        c.set_common_coupling(hz(14.8));
        c.signal.photon_number = 3.2e8;
        c.signal.detuning = -hz(300.0);
        c
    }

    /// Looks up a bundled preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "device1" => Some(Self::device1()),
            "device2" => Some(Self::device2()),
            "fig3a" => Some(Self::fig3a()),
            _ => None,
        }
    }

    /// Names accepted by [`DeviceConfig::preset`].
    pub const PRESETS: [&'static str; 3] = ["device1", "device2", "fig3a"];

    /// Sets the single-photon coupling of both beams to a common value.
    pub fn set_common_coupling(&mut self, g: f64) {
        self.signal.coupling_g = g;
        self.meter.coupling_g = g;
    }

    pub fn with_signal_photons(mut self, n: f64) -> Self {
        self.signal.photon_number = n;
        self
    }

    pub fn with_meter_photons(mut self, n: f64) -> Self {
        self.meter.photon_number = n;
        self
    }

    pub fn z_zp(&self) -> f64 {
        self.mechanics.z_zp()
    }

    pub fn n_th(&self) -> f64 {
        self.mechanics.n_th(self.env.temperature)
    }

    /// Checks every type invariant and reports each violated rule.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut check = |ok: bool, field: &'static str, rule: &'static str| {
            if !ok {
                v.push(Violation { field, rule });
            }
        };
        let m = &self.mechanics;
        check(m.omega_m > 0.0, "mechanics.omega_m", "omega_m > 0");
        check(m.gamma_0 > 0.0, "mechanics.gamma_0", "gamma_0 > 0");
        check(m.mass > 0.0, "mechanics.mass", "mass > 0");
        check(m.gamma_0 < m.omega_m, "mechanics.gamma_0", "gamma_0 < omega_m");

        let c = &self.cavity;
        check(c.kappa > 0.0, "cavity.kappa", "kappa > 0");
        check(
            c.kappa_l >= 0.0 && c.kappa_r >= 0.0 && c.kappa_int >= 0.0,
            "cavity",
            "partition rates >= 0",
        );
        let closure = (c.kappa_l + c.kappa_r + c.kappa_int - c.kappa).abs();
        check(
            closure <= 1e-9 * c.kappa.abs(),
            "cavity",
            "kappa = kappa_L + kappa_R + kappa_int",
        );

        for (name, b) in [("signal", &self.signal), ("meter", &self.meter)] {
            let field = |s: &'static str, m: &'static str| if name == "signal" { s } else { m };
            check(
                b.photon_number >= 0.0,
                field("signal.photon_number", "meter.photon_number"),
                "photon_number >= 0",
            );
            check(
                b.classical_noise_b >= 0.0,
                field("signal.classical_noise_b", "meter.classical_noise_b"),
                "classical_noise_b >= 0",
            );
            check(
                b.wavelength > 0.0,
                field("signal.wavelength", "meter.wavelength"),
                "wavelength > 0",
            );
            check(
                b.detuning.is_finite() && b.coupling_g.is_finite(),
                field("signal", "meter"),
                "detuning and coupling finite",
            );
        }

        check(self.env.temperature > 0.0, "env.temperature", "temperature > 0");

        for (name, d) in [("signal", &self.detect_signal), ("meter", &self.detect_meter)] {
            let field = |s: &'static str, m: &'static str| if name == "signal" { s } else { m };
            check(
                (0.0..=1.0).contains(&d.efficiency),
                field("detect_signal.efficiency", "detect_meter.efficiency"),
                "0 <= efficiency <= 1",
            );
            check(
                d.dark_current_psd >= 0.0,
                field("detect_signal.dark_current_psd", "detect_meter.dark_current_psd"),
                "dark_current_psd >= 0",
            );
        }
        v
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// One broken invariant, naming the field and the rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("invalid configuration ({count} violations, first: {first})")]
    Invalid { count: usize, first: Violation },
    #[error("total mechanical damping must be positive, got {0} rad/s")]
    NonPositiveDamping(f64),
    #[error("derived quantity `{0}` is not finite; check for zero mass, frequency or linewidth")]
    NonFinite(&'static str),
}

/// Closed-form quantities derived from a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedQuantities {
    /// √(ħ/2mω_m) (m).
    pub z_zp: f64,
    pub n_th: f64,
    /// Multiphoton cooperativity of the signal beam, 4N_S g²/(κΓ_0).
    pub cooperativity_cs: f64,
    /// Ratio of signal-beam shot-noise force to thermal force at ω_m.
    pub ratio_rs: f64,
    /// Sideband-cooling floor (κ/4ω_m)².
    pub n_min: f64,
    /// Standard-quantum-limit displacement PSD ħ/(mω_mΓ_m) (m²/Hz).
    pub sz_sql: f64,
    /// Signal-beam power leaving the output port, ħω κ_R N_S (W).
    pub output_power: f64,
}

fn finite(name: &'static str, x: f64) -> Result<f64, ParamError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ParamError::NonFinite(name))
    }
}

/// Evaluates the derived quantities for a configuration and total damping rate Γ_m.
pub fn derive(config: &DeviceConfig, gamma_m_total: f64) -> Result<DerivedQuantities, ParamError> {
    let violations = config.validate();
    if let Some(&first) = violations.first() {
        return Err(ParamError::Invalid { count: violations.len(), first });
    }
    if gamma_m_total <= 0.0 || !gamma_m_total.is_finite() {
        return Err(ParamError::NonPositiveDamping(gamma_m_total));
    }
    let m = &config.mechanics;
    let kappa = config.cavity.kappa;
    let g = config.signal.coupling_g;
    let n_th = finite("n_th", config.n_th())?;
    let cs = 4.0 * config.signal.photon_number * g * g / (kappa * m.gamma_0);
    let resolved = 2.0 * m.omega_m / kappa;
    Ok(DerivedQuantities {
        z_zp: finite("z_zp", config.z_zp())?,
        n_th,
        cooperativity_cs: finite("cooperativity_cs", cs)?,
        ratio_rs: finite("ratio_rs", (cs / n_th) / (1.0 + resolved * resolved))?,
        n_min: finite("n_min", (kappa / (4.0 * m.omega_m)).powi(2))?,
        sz_sql: finite("sz_sql", HBAR / (m.mass * m.omega_m * gamma_m_total))?,
        output_power: finite("output_power", photon_number_to_power(config, config.signal.photon_number))?,
    })
}

/// Optical power leaving the cavity output port for N intracavity photons of the signal beam.
pub fn photon_number_to_power(config: &DeviceConfig, n: f64) -> f64 {
    config.signal.photon_energy() * config.cavity.kappa_r * n
}

/// Inverse of [`photon_number_to_power`].
pub fn power_to_photon_number(config: &DeviceConfig, watts: f64) -> f64 {
    watts / (config.signal.photon_energy() * config.cavity.kappa_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::TWO_PI;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn presets_are_valid() {
        for name in DeviceConfig::PRESETS {
            let c = DeviceConfig::preset(name).unwrap();
            assert!(c.validate().is_empty(), "{name}: {:?}", c.validate());
        }
        assert!(DeviceConfig::preset("device9").is_none());
    }

    #[test]
    fn device1_calibration_point() {
        let c = DeviceConfig::device1();
        let d = derive(&c, TWO_PI * 1.43e3).unwrap();
        // Direct arithmetic, written out independently of the library code.
        let hbar = 1.054_571_817e-34;
        let kb = 1.380_649e-23;
        let wm = TWO_PI * 1.551e6;
        let kappa = TWO_PI * 0.89e6;
        let g = TWO_PI * 16.1;
        let n_th = kb * 4.9 / (hbar * wm);
        let cs = 4.0 * 3.6e8 * g * g / (kappa * TWO_PI * 0.47);
        let rs = cs / n_th / (1.0 + (2.0 * wm / kappa).powi(2));
        assert!(rel(d.n_th, n_th) < 1e-12);
        assert!(rel(d.ratio_rs, rs) < 1e-12);
        assert!((d.ratio_rs - 1.0).abs() < 0.05, "R_S = {}", d.ratio_rs);
        assert!(rel(d.z_zp, (hbar / (2.0 * 7e-12 * wm)).sqrt()) < 1e-12);
        assert!((d.z_zp - 0.88e-15).abs() < 0.01e-15, "z_zp = {}", d.z_zp);
        assert!((d.n_th - 6.6e4).abs() < 0.05e4, "n_th = {}", d.n_th);
        assert!(rel(d.n_min, (kappa / (4.0 * wm)).powi(2)) < 1e-12);
    }

    #[test]
    fn zero_signal_has_zero_cooperativity() {
        let c = DeviceConfig::device1().with_signal_photons(0.0);
        let d = derive(&c, 1.0).unwrap();
        assert_eq!(d.cooperativity_cs, 0.0);
        assert_eq!(d.ratio_rs, 0.0);
    }

    #[test]
    fn derive_rejects_bad_inputs() {
        let c = DeviceConfig::device1();
        assert!(matches!(derive(&c, 0.0), Err(ParamError::NonPositiveDamping(_))));
        let mut bad = c;
        bad.mechanics.mass = 0.0;
        assert!(matches!(derive(&bad, 1.0), Err(ParamError::Invalid { .. })));
    }

    #[test]
    fn output_power_near_two_hundred_microwatts() {
        let c = DeviceConfig::device1();
        let p = photon_number_to_power(&c, 3.6e8);
        let hbar = 1.054_571_817e-34;
        let omega = TWO_PI * 299_792_458.0 / 1064e-9;
        assert!(rel(p, hbar * omega * 0.59 * TWO_PI * 0.89e6 * 3.6e8) < 1e-12);
        assert!(rel(p, 200e-6) < 0.15, "P = {p}");
        assert_eq!(photon_number_to_power(&c, 0.0), 0.0);
    }

    #[test]
    fn partition_violation_is_named() {
        let mut c = DeviceConfig::device1();
        c.cavity.kappa_int *= 1.01;
        let v = c.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "kappa = kappa_L + kappa_R + kappa_int");
    }

    #[test]
    fn negative_mass_is_named() {
        let mut c = DeviceConfig::device1();
        c.mechanics.mass = -1.0;
        let v = c.validate();
        assert!(v.iter().any(|x| x.rule == "mass > 0" && x.field == "mechanics.mass"));
    }

    fn rs_of(n_s: f64, temperature: f64, gamma_0: f64) -> f64 {
        let mut c = DeviceConfig::device1().with_signal_photons(n_s);
        c.env.temperature = temperature;
        c.mechanics.gamma_0 = gamma_0;
        derive(&c, 1.0).unwrap().ratio_rs
    }

    proptest! {
        #[test]
        fn power_round_trip(n in 0.0f64..1e10) {
            let c = DeviceConfig::device1();
            let back = power_to_photon_number(&c, photon_number_to_power(&c, n));
            prop_assert!((back - n).abs() <= 1e-12 * n.max(1e-300));
        }

        #[test]
        fn power_is_linear(n in 1.0f64..1e10) {
            let c = DeviceConfig::device1();
            let p1 = photon_number_to_power(&c, n);
            let p2 = photon_number_to_power(&c, 2.0 * n);
            prop_assert!(rel(p2, 2.0 * p1) < 1e-14);
        }

        #[test]
        fn rs_monotonicity(n in 1e6f64..1e10, t in 0.5f64..300.0, g0 in 0.1f64..100.0, f in 1.01f64..3.0) {
            prop_assert!(rs_of(n * f, t, g0) > rs_of(n, t, g0));
            prop_assert!(rs_of(n, t * f, g0) < rs_of(n, t, g0));
            prop_assert!(rs_of(n, t, g0 * f) < rs_of(n, t, g0));
        }

        #[test]
        fn unit_audit(s in 0.1f64..10.0) {
            let c = DeviceConfig::device1();
            let mut sc = c;
            sc.mechanics.omega_m *= s;
            sc.mechanics.gamma_0 *= s;
            sc.mechanics.mass /= s;
            sc.cavity.kappa *= s;
            sc.cavity.kappa_l *= s;
            sc.cavity.kappa_r *= s;
            sc.cavity.kappa_int *= s;
            sc.signal.coupling_g *= s;
            sc.signal.detuning *= s;
            sc.meter.coupling_g *= s;
            sc.meter.detuning *= s;
            // n_th = k_B T/ħω_m is only scale free if the bath temperature follows ω_m.
            sc.env.temperature *= s;
            let a = derive(&c, 1.0).unwrap();
            let b = derive(&sc, s).unwrap();
            prop_assert!(rel(b.n_min, a.n_min) < 1e-12);
            prop_assert!(rel(b.ratio_rs, a.ratio_rs) < 1e-12);
            prop_assert!(rel(b.z_zp, a.z_zp) < 1e-12);
        }

        #[test]
        fn partition_closure_for_accepted_configs(k in 1.0f64..1e8, fl in 0.0f64..0.5, fr in 0.0f64..0.5) {
            let mut c = DeviceConfig::device1();
            c.cavity = Cavity::from_fractions(k, fl, fr);
            if c.validate().is_empty() {
                let cc = c.cavity;
                prop_assert!((cc.kappa_l + cc.kappa_r + cc.kappa_int - cc.kappa).abs() <= 1e-9 * cc.kappa);
            }
        }
    }
}
