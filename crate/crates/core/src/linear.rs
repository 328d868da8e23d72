//! Real state-space form of the linearized Langevin equations.
//!
//! State x = [q₁, p₁, q₂, p₂, X, P] with d_k = q_k + i p_k the optical
//! fluctuation of beam k (signal = 1, meter = 2) in its own rotating frame and
//! c = X + iP the mechanical amplitude, so z = 2Z_zp X. The mean fields ā_k
//! are taken real. The model is
//!
//! ```text
//! q̇_k = −κ/2 q_k + Δ_k p_k + Re ζ_k
//! ṗ_k = −Δ_k q_k − κ/2 p_k − 2g_k√N_k X + Im ζ_k
//! Ẋ   = −Γ_0/2 X + ω_m P + √Γ_0 Re η
//! Ṗ   = −ω_m X − Γ_0/2 P − Σ_k 2g_k√N_k q_k + √Γ_0 Im η + f_piezo
//! ζ_k = √κ_L(ξ_Lk + δx_k) + √κ_R ξ_Rk + √κ_int ξ_int,k
//! ```
//!
//! The same matrices drive both the exact frequency-domain spectra below and
//! the time-domain integrator in [`crate::montecarlo`].

use nalgebra::{Matrix3, SMatrix, SVector};
use num_complex::Complex64;
#[allow(unused_imports)] // unused when a dependent enables std float methods
use num_traits::Float;

use crate::montecarlo::{NoiseKind, NoiseSet};
use crate::params::DeviceConfig;

pub const N_STATE: usize = 6;
pub const N_INPUT: usize = 16;
pub const N_OUTPUT: usize = 3;

/// Indices of the white-noise inputs.
pub mod input {
    pub const L1_RE: usize = 0;
    pub const L1_IM: usize = 1;
    pub const R1_RE: usize = 2;
    pub const R1_IM: usize = 3;
    pub const INT1_RE: usize = 4;
    pub const INT1_IM: usize = 5;
    pub const L2_RE: usize = 6;
    pub const L2_IM: usize = 7;
    pub const R2_RE: usize = 8;
    pub const R2_IM: usize = 9;
    pub const INT2_RE: usize = 10;
    pub const INT2_IM: usize = 11;
    pub const CLASSICAL1: usize = 12;
    pub const THERMAL_RE: usize = 13;
    pub const THERMAL_IM: usize = 14;
    pub const PIEZO: usize = 15;
}

/// Indices of the outputs.
pub mod output {
    /// Displacement z (m).
    pub const Z: usize = 0;
    /// Signal-beam output intensity fluctuation relative to its mean, for ε = 1.
    pub const RIN_SIGNAL: usize = 1;
    /// Meter-beam output intensity fluctuation relative to its mean, for ε = 1.
    pub const RIN_METER: usize = 2;
}

pub type StateMatrix = SMatrix<f64, N_STATE, N_STATE>;
pub type InputMatrix = SMatrix<f64, N_STATE, N_INPUT>;

/// dx/dt = A x + B u, y = C x + D u, with u white and E[u_i(t)u_j(s)] = Σ_ii δ_ij δ(t − s).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub a: StateMatrix,
    pub b: InputMatrix,
    /// Two-sided PSD of each input.
    pub sigma: SVector<f64, N_INPUT>,
    pub c: SMatrix<f64, N_OUTPUT, N_STATE>,
    pub d: SMatrix<f64, N_OUTPUT, N_INPUT>,
}

/// One-sided output spectra at one frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputSpectra {
    /// Displacement PSD (m²/Hz).
    pub z: f64,
    /// Relative intensity PSD of the signal photocurrent (1/Hz).
    pub rin_signal: f64,
    /// Relative intensity PSD of the meter photocurrent (1/Hz).
    pub rin_meter: f64,
    /// Cross spectrum ⟨I_S*(ω) I_M(ω)⟩/(Ī_S Ī_M) (1/Hz).
    pub cross: Complex64,
}

impl LinearModel {
    pub fn new(config: &DeviceConfig, noise: &NoiseSet) -> Self {
        use input::*;
        let m = &config.mechanics;
        let cav = &config.cavity;
        let beams = [&config.signal, &config.meter];
        let mut a = StateMatrix::zeros();
        let mut b = InputMatrix::zeros();
        let mut sigma = SVector::<f64, N_INPUT>::zeros();

        for (k, beam) in beams.iter().enumerate() {
            let (q, p) = (2 * k, 2 * k + 1);
            a[(q, q)] = -cav.kappa / 2.0;
            a[(p, p)] = -cav.kappa / 2.0;
            a[(q, p)] = beam.detuning;
            a[(p, q)] = -beam.detuning;
            let coupling = 2.0 * beam.coupling_g * beam.photon_number.sqrt();
            a[(p, 4)] = -coupling;
            a[(5, q)] = -coupling;

            let ports = if k == 0 {
                [(L1_RE, NoiseKind::InputL1, cav.kappa_l), (R1_RE, NoiseKind::InputR1, cav.kappa_r), (INT1_RE, NoiseKind::Internal1, cav.kappa_int)]
            } else {
                [(L2_RE, NoiseKind::InputL2, cav.kappa_l), (R2_RE, NoiseKind::InputR2, cav.kappa_r), (INT2_RE, NoiseKind::Internal2, cav.kappa_int)]
            };
            for (re, kind, rate) in ports {
                b[(q, re)] = rate.sqrt();
                b[(p, re + 1)] = rate.sqrt();
                // symmetrized level s per port puts s/2 into each quadrature's two-sided PSD
                sigma[re] = noise.level(kind) / 2.0;
                sigma[re + 1] = noise.level(kind) / 2.0;
            }
        }
        b[(0, CLASSICAL1)] = cav.kappa_l.sqrt();
        sigma[CLASSICAL1] = noise.level(NoiseKind::ClassicalIntensity1);

        a[(4, 4)] = -m.gamma_0 / 2.0;
        a[(5, 5)] = -m.gamma_0 / 2.0;
        a[(4, 5)] = m.omega_m;
        a[(5, 4)] = -m.omega_m;
        b[(4, THERMAL_RE)] = m.gamma_0.sqrt();
        b[(5, THERMAL_IM)] = m.gamma_0.sqrt();
        sigma[THERMAL_RE] = noise.level(NoiseKind::Thermal) / 2.0;
        sigma[THERMAL_IM] = noise.level(NoiseKind::Thermal) / 2.0;
        b[(5, PIEZO)] = 1.0;
        sigma[PIEZO] = noise.level(NoiseKind::PiezoDrive) / 2.0;

        let mut c = SMatrix::<f64, N_OUTPUT, N_STATE>::zeros();
        let mut d = SMatrix::<f64, N_OUTPUT, N_INPUT>::zeros();
        c[(output::Z, 4)] = 2.0 * config.z_zp();
        for (k, beam) in beams.iter().enumerate() {
            let flux = beam.output_flux(cav);
            if flux > 0.0 {
                // δI/Ī = 2 Re(d_out)/√(κ_R N), d_out = √κ_R d − ξ_R
                let row = 1 + k;
                let norm = 2.0 / flux.sqrt();
                c[(row, 2 * k)] = norm * cav.kappa_r.sqrt();
                d[(row, if k == 0 { R1_RE } else { R2_RE })] = -norm;
            }
        }
        Self { a, b, sigma, c, d }
    }

    /// Transfer matrix H(ω) = C(−iω − A)⁻¹B + D from inputs to outputs.
    pub fn transfer(&self, omega: f64) -> SMatrix<Complex64, N_OUTPUT, N_INPUT> {
        let mut m = self.a.map(|v| Complex64::new(-v, 0.0));
        for k in 0..N_STATE {
            m[(k, k)] -= Complex64::new(0.0, omega);
        }
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m.lu().solve(&b).expect("(−iω − A) is invertible for a damped system");
        self.c.map(|v| Complex64::new(v, 0.0)) * x + self.d.map(|v| Complex64::new(v, 0.0))
    }

    /// Two-sided output spectral matrix S[a][b] = ⟨y_a*(ω) y_b(ω)⟩.
    pub fn spectral_matrix(&self, omega: f64) -> Matrix3<Complex64> {
        let h = self.transfer(omega);
        let mut s = Matrix3::<Complex64>::zeros();
        for i in 0..N_OUTPUT {
            for j in 0..N_OUTPUT {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..N_INPUT {
                    acc += h[(i, k)].conj() * self.sigma[k] * h[(j, k)];
                }
                s[(i, j)] = acc;
            }
        }
        s
    }

    /// One-sided spectra for ideal detection (ε = 1, no dark current).
    ///
    /// The outputs are real signals, so auto spectra are even and the
    /// cross spectrum is Hermitian; folding doubles the two-sided value.
    pub fn spectra(&self, omega: f64) -> OutputSpectra {
        let s = self.spectral_matrix(omega);
        OutputSpectra {
            z: 2.0 * s[(0, 0)].re,
            rin_signal: 2.0 * s[(1, 1)].re,
            rin_meter: 2.0 * s[(2, 2)].re,
            cross: s[(1, 2)] * 2.0,
        }
    }

    /// Largest real part among the eigenvalues of A; negative means stable.
    pub fn stability_margin(&self) -> f64 {
        let eig = self.a.complex_eigenvalues();
        eig.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Extra white floors that a real detector adds to the ideal relative intensity spectra:
/// (1/ε − 1)·2/(κ_R N) from the efficiency loss and S_dark/Ī² from dark current.
pub fn detection_floors(config: &DeviceConfig) -> (f64, f64) {
    let floor = |beam: &crate::params::Beam, det: &crate::params::Detection| {
        let flux = beam.output_flux(&config.cavity);
        if flux <= 0.0 || det.efficiency <= 0.0 {
            return 0.0;
        }
        let mean = det.mean_current(beam, &config.cavity);
        (1.0 / det.efficiency - 1.0) * 2.0 / flux + det.dark_current_psd / (mean * mean)
    };
    (floor(&config.signal, &config.detect_signal), floor(&config.meter, &config.detect_meter))
}

/// One-sided detected spectra (relative intensity) including detector floors.
pub fn detected_spectra(model: &LinearModel, config: &DeviceConfig, omega: f64) -> OutputSpectra {
    let mut s = model.spectra(omega);
    let (fs, fm) = detection_floors(config);
    s.rin_signal += fs;
    s.rin_meter += fm;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::hz;
    use crate::response;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn displacement_matches_four_term_formula() {
        for (ds, b) in [(-hz(2e3), 0.0), (0.0, 0.3), (hz(300.0), 0.3)] {
            let mut c = DeviceConfig::device1();
            c.signal.detuning = ds;
            c.signal.classical_noise_b = b;
            let model = LinearModel::new(&c, &NoiseSet::from_config(&c));
            for f in [1.0e6, 1.549e6, 1.551e6, 1.5515e6, 1.553e6, 3.0e6] {
                let w = hz(f);
                let exact = model.spectra(w).z;
                let formula = response::displacement_psd(w, &c);
                assert!(rel(exact, formula) < 1e-9, "f={f}: {exact} vs {formula}");
            }
        }
    }

    #[test]
    fn shot_floor_far_from_resonance() {
        let c = DeviceConfig::device1();
        let model = LinearModel::new(&c, &NoiseSet::from_config(&c));
        // far above the cavity linewidth the intracavity field no longer responds
        let s = model.spectra(1e3 * c.cavity.kappa);
        let expect = 2.0 / (c.cavity.kappa_r * c.meter.photon_number);
        assert!(rel(s.rin_meter, expect) < 1e-4);
    }

    #[test]
    fn presets_are_stable_and_flipped_meter_is_not() {
        let c = DeviceConfig::device1();
        let model = LinearModel::new(&c, &NoiseSet::from_config(&c));
        assert!(model.stability_margin() < 0.0);
        let mut f = c;
        f.meter.detuning = -f.meter.detuning;
        let model = LinearModel::new(&f, &NoiseSet::from_config(&f));
        assert!(model.stability_margin() > 0.0);
    }

    #[test]
    fn detection_floor_adds_efficiency_loss() {
        let c = DeviceConfig::device1();
        let model = LinearModel::new(&c, &NoiseSet::from_config(&c));
        let w = 1e3 * c.cavity.kappa;
        let s = detected_spectra(&model, &c, w);
        let expect = 2.0 / (0.63 * c.cavity.kappa_r * c.meter.photon_number);
        assert!(rel(s.rin_meter, expect) < 1e-4);
    }
}
