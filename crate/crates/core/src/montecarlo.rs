//! Time-domain synthesis of trajectories and photocurrent records from the
//! linearized Langevin model.
//!
//! Quantum inputs are replaced by real white Gaussian surrogates with the
//! symmetrized spectral levels, so every symmetrized observable (displacement,
//! photocurrent and cross spectra) is reproduced; sideband asymmetry is not.
//!
//! Every stored sample is the average of the continuous signal over its
//! interval [t_n, t_n + dt), the way an integrating digitizer sees it.
//! Colored spectra of the records therefore carry the gain
//! [`sampling_gain`] while white floors are unchanged.
//!
//! Seed splitting: record `i` of a campaign with master seed `s` draws its
//! dynamics noise from `ChaCha8Rng::seed_from_u64(s)` on stream `2i` and its
//! detection noise from stream `2i + 1`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SMatrix, SVector};
use num_complex::Complex64;
#[allow(unused_imports)] // unused when a dependent enables std float methods
use num_traits::Float;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{discretize, lyapunov, psd_factor};
use crate::linear::{input, LinearModel, N_INPUT, N_STATE};
use crate::params::{DeviceConfig, Detection};

/// A source of fluctuations entering the equations of motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    InputL1,
    InputR1,
    Internal1,
    InputL2,
    InputR2,
    Internal2,
    Thermal,
    ClassicalIntensity1,
    PiezoDrive,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 9] = [
        NoiseKind::InputL1,
        NoiseKind::InputR1,
        NoiseKind::Internal1,
        NoiseKind::InputL2,
        NoiseKind::InputR2,
        NoiseKind::Internal2,
        NoiseKind::Thermal,
        NoiseKind::ClassicalIntensity1,
        NoiseKind::PiezoDrive,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::InputL1 => "input_L1",
            NoiseKind::InputR1 => "input_R1",
            NoiseKind::Internal1 => "internal_1",
            NoiseKind::InputL2 => "input_L2",
            NoiseKind::InputR2 => "input_R2",
            NoiseKind::Internal2 => "internal_2",
            NoiseKind::Thermal => "thermal",
            NoiseKind::ClassicalIntensity1 => "classical_intensity_1",
            NoiseKind::PiezoDrive => "piezo_drive",
        }
    }
}

/// A noise source and its level.
///
/// Levels are in each channel's native units: optical ports and the thermal
/// bath use the symmetrized occupation (½ for vacuum, n_th + ½ for the bath),
/// which places half of it in the two-sided PSD of each quadrature; the
/// classical channel uses B, the two-sided PSD of δx relative to shot noise;
/// the piezo drive uses the one-sided PSD of the force on P (1/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseChannel {
    pub kind: NoiseKind,
    pub psd_level: f64,
}

/// Levels of all noise channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSet {
    levels: [f64; 9],
}

impl NoiseSet {
    /// Vacuum at every optical port, the thermal bath of the configuration,
    /// its classical signal noise, and no piezo drive.
    pub fn from_config(config: &DeviceConfig) -> Self {
        let mut s = Self::silent();
        for k in [
            NoiseKind::InputL1,
            NoiseKind::InputR1,
            NoiseKind::Internal1,
            NoiseKind::InputL2,
            NoiseKind::InputR2,
            NoiseKind::Internal2,
        ] {
            s.set(k, 0.5);
        }
        s.set(NoiseKind::Thermal, config.n_th() + 0.5);
        s.set(NoiseKind::ClassicalIntensity1, config.signal.classical_noise_b);
        s
    }

    /// Every channel off.
    pub fn silent() -> Self {
        Self { levels: [0.0; 9] }
    }

    pub fn level(&self, kind: NoiseKind) -> f64 {
        self.levels[kind.index()]
    }

    pub fn set(&mut self, kind: NoiseKind, level: f64) -> &mut Self {
        self.levels[kind.index()] = level;
        self
    }

    pub fn with(mut self, kind: NoiseKind, level: f64) -> Self {
        self.set(kind, level);
        self
    }

    pub fn channels(&self) -> impl Iterator<Item = NoiseChannel> + '_ {
        NoiseKind::ALL.iter().map(|&kind| NoiseChannel { kind, psd_level: self.level(kind) })
    }
}

/// Time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    /// Exact one-step update of the linear SDE (matrix exponential and
    /// discretized process-noise covariance).
    Exact,
    /// First-order Euler–Maruyama, kept for cross-validation. Each step
    /// multiplies an undamped rotation at ω by √(1 + ω²dt²), which outruns
    /// the intrinsic damping of a high-Q mode; use it on short horizons only.
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(crate::params::Violation),
    #[error("time step {dt} s too coarse: need dt ≤ {limit} s for this integrator")]
    TimeStep { dt: f64, limit: f64 },
    #[error("time step mismatch between trajectory ({trajectory}) and request ({requested})")]
    DtMismatch { trajectory: f64, requested: f64 },
    #[error("noise level for {0} is negative or not finite")]
    BadNoise(&'static str),
}

/// Addresses the random streams of one record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RecordSeed {
    pub master: u64,
    pub index: u64,
}

impl RecordSeed {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    pub fn dynamics_rng(&self) -> ChaCha8Rng {
        self.rng(2 * self.index)
    }

    pub fn detection_rng(&self) -> ChaCha8Rng {
        self.rng(2 * self.index + 1)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.master);
        r.set_stream(stream);
        r
    }
}

/// Starting point of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialState {
    /// A draw from the stationary distribution (zero for an unstable system).
    Stationary,
    /// The given [q₁, p₁, q₂, p₂, X, P].
    State([f64; N_STATE]),
}

/// Interval-averaged state of one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub d_signal: Vec<Complex64>,
    pub d_meter: Vec<Complex64>,
    pub c: Vec<Complex64>,
    /// Interval averages of Re ξ_R for each beam; the detected field reuses them.
    pub xi_r_signal: Vec<f64>,
    pub xi_r_meter: Vec<f64>,
    pub seed: RecordSeed,
    pub config: DeviceConfig,
    /// Set when the drift matrix has an eigenvalue with non-negative real part.
    pub unstable: bool,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Displacement z = 2Z_zp Re c (m).
    pub fn displacement(&self) -> Vec<f64> {
        let s = 2.0 * self.config.z_zp();
        self.c.iter().map(|c| s * c.re).collect()
    }
}

/// Two detector currents sampled on the trajectory's grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotocurrentRecord {
    pub dt: f64,
    pub i_signal: Vec<f64>,
    pub i_meter: Vec<f64>,
    /// Sample means Ī_S, Ī_M (A).
    pub mean_signal: f64,
    pub mean_meter: f64,
}

impl PhotocurrentRecord {
    /// Mean-removed copies of both currents.
    pub fn fluctuations(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.i_signal.iter().map(|v| v - self.mean_signal).collect(),
            self.i_meter.iter().map(|v| v - self.mean_meter).collect(),
        )
    }

    /// Fluctuations divided by the mean current, δI/Ī (zero if the mean is zero).
    pub fn relative_fluctuations(&self) -> (Vec<f64>, Vec<f64>) {
        let rel = |v: &[f64], m: f64| -> Vec<f64> {
            if m != 0.0 {
                v.iter().map(|x| (x - m) / m).collect()
            } else {
                v.iter().map(|_| 0.0).collect()
            }
        };
        (rel(&self.i_signal, self.mean_signal), rel(&self.i_meter, self.mean_meter))
    }
}

/// Spectral gain of interval averaging, sinc²(ω dt/2).
pub fn sampling_gain(omega: f64, dt: f64) -> f64 {
    let x = 0.5 * omega * dt;
    if x == 0.0 {
        1.0
    } else {
        (x.sin() / x).powi(2)
    }
}

/// Fastest rate the sampled outputs must resolve: max(κ, ω_m + |Δ|).
pub fn fastest_rate(config: &DeviceConfig) -> f64 {
    let detuning = config.signal.detuning.abs().max(config.meter.detuning.abs());
    config.cavity.kappa.max(config.mechanics.omega_m + detuning)
}

/// Largest admissible time step for the integrator.
pub fn max_time_step(config: &DeviceConfig, integrator: Integrator) -> f64 {
    let rate = fastest_rate(config);
    match integrator {
        Integrator::Exact => 1.0 / rate,
        Integrator::EulerMaruyama => 1.0 / (20.0 * rate),
    }
}

const N_AUG: usize = 14;
type AugState = SVector<f64, N_AUG>;

/// Precomputed one-step propagator for a configuration and time step.
#[derive(Clone, Debug)]
pub struct Simulator {
    config: DeviceConfig,
    dt: f64,
    integrator: Integrator,
    model: LinearModel,
    /// Maps x_n to [x_{n+1}, mean of x over the step, 0, 0] (noise-free part).
    propagate: SMatrix<f64, N_AUG, N_STATE>,
    /// Factor of the per-step noise covariance; columns beyond `draws` are zero.
    noise: SMatrix<f64, N_AUG, N_INPUT>,
    draws: usize,
    stationary: Option<SMatrix<f64, N_STATE, N_STATE>>,
    unstable: bool,
}

impl Simulator {
    pub fn new(config: &DeviceConfig, noise: &NoiseSet, dt: f64, integrator: Integrator) -> Result<Self, SimError> {
        if let Some(&v) = config.validate().first() {
            return Err(SimError::InvalidConfig(v));
        }
        for ch in noise.channels() {
            if !(ch.psd_level >= 0.0 && ch.psd_level.is_finite()) {
                return Err(SimError::BadNoise(ch.kind.name()));
            }
        }
        let limit = max_time_step(config, integrator);
        if !(dt > 0.0 && dt <= limit) {
            return Err(SimError::TimeStep { dt, limit });
        }
        let model = LinearModel::new(config, noise);
        let unstable = model.stability_margin() >= 0.0;
        let (propagate, noise_factor, draws) = match integrator {
            Integrator::Exact => exact_step(&model, dt),
            Integrator::EulerMaruyama => euler_step(&model, dt),
        };
        let stationary = if unstable { None } else { stationary_factor(&model) };
        Ok(Self {
            config: *config,
            dt,
            integrator,
            model,
            propagate,
            noise: noise_factor,
            draws,
            stationary,
            unstable,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn is_unstable(&self) -> bool {
        self.unstable
    }

    /// Integrates `n_steps` steps with the record's dynamics stream.
    pub fn run(&self, n_steps: usize, seed: RecordSeed, initial: InitialState) -> TrajectoryRecord {
        let mut rng = seed.dynamics_rng();
        let mut x = SVector::<f64, N_STATE>::zeros();
        match initial {
            InitialState::State(s) => x.copy_from_slice(&s),
            InitialState::Stationary => {
                if let Some(f) = &self.stationary {
                    let w = SVector::<f64, N_STATE>::from_fn(|_, _| StandardNormal.sample(&mut rng));
                    x = f * w;
                }
            }
        }
        let mut rec = TrajectoryRecord {
            dt: self.dt,
            d_signal: Vec::with_capacity(n_steps),
            d_meter: Vec::with_capacity(n_steps),
            c: Vec::with_capacity(n_steps),
            xi_r_signal: Vec::with_capacity(n_steps),
            xi_r_meter: Vec::with_capacity(n_steps),
            seed,
            config: self.config,
            unstable: self.unstable,
        };
        let mut w = SVector::<f64, N_INPUT>::zeros();
        for _ in 0..n_steps {
            for k in 0..self.draws {
                w[k] = StandardNormal.sample(&mut rng);
            }
            let y: AugState = self.propagate * x + self.noise * w;
            x = y.fixed_rows::<N_STATE>(0).into_owned();
            rec.d_signal.push(Complex64::new(y[6], y[7]));
            rec.d_meter.push(Complex64::new(y[8], y[9]));
            rec.c.push(Complex64::new(y[10], y[11]));
            rec.xi_r_signal.push(y[12]);
            rec.xi_r_meter.push(y[13]);
        }
        rec
    }
}

/// Augmented drift: x, its running mean over the step, and the running means
/// of Re ξ_R for both beams (driven directly by those inputs).
fn augmented(model: &LinearModel, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::<f64>::zeros(N_AUG, N_AUG);
    let mut b = DMatrix::<f64>::zeros(N_AUG, N_INPUT);
    for i in 0..N_STATE {
        for j in 0..N_STATE {
            a[(i, j)] = model.a[(i, j)];
        }
        for j in 0..N_INPUT {
            b[(i, j)] = model.b[(i, j)];
        }
        a[(N_STATE + i, i)] = 1.0 / dt;
    }
    b[(12, input::R1_RE)] = 1.0 / dt;
    b[(13, input::R2_RE)] = 1.0 / dt;
    (a, b)
}

fn exact_step(model: &LinearModel, dt: f64) -> (SMatrix<f64, N_AUG, N_STATE>, SMatrix<f64, N_AUG, N_INPUT>, usize) {
    let (a, b) = augmented(model, dt);
    let mut phi = DMatrix::<f64>::identity(N_AUG, N_AUG);
    let mut q = DMatrix::<f64>::zeros(N_AUG, N_AUG);
    // Discretize each input separately so that inputs of very different
    // strength all keep full relative precision.
    for k in 0..N_INPUT {
        let s = model.sigma[k];
        let col = b.column(k);
        if s == 0.0 || col.iter().all(|&v| v == 0.0) {
            continue;
        }
        let qc = &col * col.transpose() * s;
        let (p, qk) = discretize(&a, &qc, dt);
        phi = p;
        q += qk;
    }
    if q.iter().all(|&v| v == 0.0) {
        phi = crate::linalg::expm(&(&a * dt));
    }
    let factor = psd_factor(&q);
    let propagate = SMatrix::<f64, N_AUG, N_STATE>::from_fn(|i, j| phi[(i, j)]);
    let noise = SMatrix::<f64, N_AUG, N_INPUT>::from_fn(|i, j| if j < N_AUG { factor[(i, j)] } else { 0.0 });
    (propagate, noise, N_AUG)
}

fn euler_step(model: &LinearModel, dt: f64) -> (SMatrix<f64, N_AUG, N_STATE>, SMatrix<f64, N_AUG, N_INPUT>, usize) {
    let mut propagate = SMatrix::<f64, N_AUG, N_STATE>::zeros();
    let mut noise = SMatrix::<f64, N_AUG, N_INPUT>::zeros();
    for i in 0..N_STATE {
        for j in 0..N_STATE {
            let id = if i == j { 1.0 } else { 0.0 };
            propagate[(i, j)] = id + model.a[(i, j)] * dt;
            // trapezoidal mean of x_n and x_{n+1}
            propagate[(N_STATE + i, j)] = id + 0.5 * model.a[(i, j)] * dt;
        }
        for k in 0..N_INPUT {
            let kick = model.b[(i, k)] * (model.sigma[k] * dt).sqrt();
            noise[(i, k)] = kick;
            noise[(N_STATE + i, k)] = 0.5 * kick;
        }
    }
    noise[(12, input::R1_RE)] = (model.sigma[input::R1_RE] / dt).sqrt();
    noise[(13, input::R2_RE)] = (model.sigma[input::R2_RE] / dt).sqrt();
    (propagate, noise, N_INPUT)
}

fn stationary_factor(model: &LinearModel) -> Option<SMatrix<f64, N_STATE, N_STATE>> {
    let a = DMatrix::from_fn(N_STATE, N_STATE, |i, j| model.a[(i, j)]);
    let mut qc = DMatrix::<f64>::zeros(N_STATE, N_STATE);
    for k in 0..N_INPUT {
        let col = DMatrix::from_fn(N_STATE, 1, |i, _| model.b[(i, k)]);
        qc += &col * col.transpose() * model.sigma[k];
    }
    let p = lyapunov(&a, &qc)?;
    let f = psd_factor(&p);
    Some(SMatrix::<f64, N_STATE, N_STATE>::from_fn(|i, j| f[(i, j)]))
}

/// Runs one record: integrates the dynamics and detects both beams.
pub fn simulate(
    config: &DeviceConfig,
    noise: &NoiseSet,
    n_steps: usize,
    dt: f64,
    seed: RecordSeed,
    integrator: Integrator,
) -> Result<TrajectoryRecord, SimError> {
    let sim = Simulator::new(config, noise, dt, integrator)?;
    Ok(sim.run(n_steps, seed, InitialState::Stationary))
}

/// Turns a trajectory into two photocurrents.
///
/// I = ℛħω[εκ_R N + ε√(κ_R N)·2Re d_out + √(ε(1−ε))√(κ_R N)·2Re ξ_n] + I_dark,
/// with d_out = √κ_R d − ξ_R using the same ξ_R realization that drove the
/// cavity, ξ_n a fresh vacuum input at the efficiency loss, and I_dark white
/// with the configured one-sided PSD. Detection noise comes from the record's
/// detection stream.
pub fn detect(traj: &TrajectoryRecord, detect_signal: &Detection, detect_meter: &Detection) -> PhotocurrentRecord {
    let mut rng = traj.seed.detection_rng();
    let cfg = &traj.config;
    let cav = &cfg.cavity;
    let dt = traj.dt;
    let vacuum_sd = (0.25 / dt).sqrt();
    let mut channel = |beam: &crate::params::Beam, det: &Detection, d: &[Complex64], xi: &[f64]| -> Vec<f64> {
        let flux = beam.output_flux(cav);
        let eps = det.efficiency;
        let scale = det.responsivity * beam.photon_energy();
        let amp = flux.max(0.0).sqrt();
        let loss = (eps * (1.0 - eps)).max(0.0).sqrt();
        let dark_sd = (det.dark_current_psd / (2.0 * dt)).sqrt();
        let kr = cav.kappa_r.sqrt();
        d.iter()
            .zip(xi)
            .map(|(dk, &xr)| {
                let n: f64 = StandardNormal.sample(&mut rng);
                let dn: f64 = StandardNormal.sample(&mut rng);
                let out = kr * dk.re - xr;
                let optical = eps * flux + eps * amp * 2.0 * out + loss * amp * 2.0 * vacuum_sd * n;
                scale * optical + dark_sd * dn
            })
            .collect()
    };
    let i_signal = channel(&cfg.signal, detect_signal, &traj.d_signal, &traj.xi_r_signal);
    let i_meter = channel(&cfg.meter, detect_meter, &traj.d_meter, &traj.xi_r_meter);
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    PhotocurrentRecord { dt, mean_signal: mean(&i_signal), mean_meter: mean(&i_meter), i_signal, i_meter }
}

/// Like [`detect`] but checks the requested sample interval against the trajectory.
pub fn detect_checked(
    traj: &TrajectoryRecord,
    detect_signal: &Detection,
    detect_meter: &Detection,
    dt: f64,
) -> Result<PhotocurrentRecord, SimError> {
    if (traj.dt - dt).abs() > 1e-12 * dt.abs() {
        return Err(SimError::DtMismatch { trajectory: traj.dt, requested: dt });
    }
    Ok(detect(traj, detect_signal, detect_meter))
}

/// Piezo drive level that multiplies the displacement spectrum at `omega` by `factor`.
pub fn piezo_level_for_peak_factor(config: &DeviceConfig, omega: f64, factor: f64) -> f64 {
    let base = NoiseSet::from_config(config);
    let without = LinearModel::new(config, &base).spectra(omega).z;
    let unit = LinearModel::new(config, &NoiseSet::silent().with(NoiseKind::PiezoDrive, 1.0)).spectra(omega).z;
    (factor - 1.0) * without / unit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::hz;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn thermal_only() -> DeviceConfig {
        let mut c = DeviceConfig::device1().with_signal_photons(0.0).with_meter_photons(0.0);
        c.mechanics.gamma_0 = hz(1e3);
        c
    }

    #[test]
    fn deterministic_given_seed() {
        let c = DeviceConfig::device1();
        let sim = Simulator::new(&c, &NoiseSet::from_config(&c), 5e-8, Integrator::Exact).unwrap();
        let a = sim.run(500, RecordSeed::new(7, 3), InitialState::Stationary);
        let b = sim.run(500, RecordSeed::new(7, 3), InitialState::Stationary);
        assert_eq!(a, b);
        let other = sim.run(500, RecordSeed::new(7, 4), InitialState::Stationary);
        assert_ne!(a.c, other.c);
        assert_eq!(detect(&a, &c.detect_signal, &c.detect_meter), detect(&b, &c.detect_signal, &c.detect_meter));
    }

    #[test]
    fn time_step_limits() {
        let c = DeviceConfig::device1();
        let noise = NoiseSet::from_config(&c);
        assert!(Simulator::new(&c, &noise, 5e-8, Integrator::Exact).is_ok());
        assert!(matches!(Simulator::new(&c, &noise, 5e-8, Integrator::EulerMaruyama), Err(SimError::TimeStep { .. })));
        assert!(matches!(Simulator::new(&c, &noise, 1e-6, Integrator::Exact), Err(SimError::TimeStep { .. })));
    }

    #[test]
    fn noiseless_decay_rates() {
        let c = DeviceConfig::device1().with_signal_photons(0.0).with_meter_photons(0.0);
        let dt = 5e-8;
        let sim = Simulator::new(&c, &NoiseSet::silent(), dt, Integrator::Exact).unwrap();
        let n = 2000;
        let rec = sim.run(n, RecordSeed::new(1, 0), InitialState::State([1.0, 0.0, 0.0, 1.0, 1.0, 0.0]));
        let t = (n - 1) as f64 * dt;
        let decay = |v: &[Complex64]| v[n - 1].norm() / v[0].norm();
        assert!(rel(decay(&rec.d_signal), (-c.cavity.kappa / 2.0 * t).exp()) < 1e-6);
        assert!(rel(decay(&rec.d_meter), (-c.cavity.kappa / 2.0 * t).exp()) < 1e-6);
        assert!(rel(decay(&rec.c), (-c.mechanics.gamma_0 / 2.0 * t).exp()) < 1e-9);
    }

    #[test]
    fn stationary_covariance_matches_equipartition() {
        let c = thermal_only();
        let model = LinearModel::new(&c, &NoiseSet::from_config(&c));
        let f = stationary_factor(&model).unwrap();
        let p = f * f.transpose();
        let expect = c.n_th() / 2.0 + 0.25;
        assert!(rel(p[(4, 4)], expect) < 1e-9);
        assert!(rel(p[(0, 0)], 0.25) < 1e-9);
    }

    #[test]
    fn thermal_variance_from_samples() {
        // 100 records; samples decorrelate over 1/Γ_0 so each record of
        // 20/Γ_0 holds ~20 independent looks.
        let c = thermal_only();
        let dt = 5e-8;
        let sim = Simulator::new(&c, &NoiseSet::from_config(&c), dt, Integrator::Exact).unwrap();
        let steps = (20.0 / c.mechanics.gamma_0 / dt) as usize;
        let mut acc = 0.0;
        let mut count = 0usize;
        for r in 0..100 {
            let rec = sim.run(steps, RecordSeed::new(11, r), InitialState::Stationary);
            for v in rec.c.iter().step_by(50) {
                acc += v.re * v.re;
                count += 1;
            }
        }
        let expect = (c.n_th() / 2.0 + 0.25) * sampling_variance_factor(&c, dt);
        assert!(rel(acc / count as f64, expect) < 0.05, "{} vs {expect}", acc / count as f64);
    }

    /// Interval averaging of a fast oscillation shrinks its variance by sinc²(ω_m dt/2).
    fn sampling_variance_factor(c: &DeviceConfig, dt: f64) -> f64 {
        sampling_gain(c.mechanics.omega_m, dt)
    }

    #[test]
    fn euler_agrees_with_exact_on_cavity_noise() {
        // Euler steps inflate a high-Q rotation every step, so compare on the
        // strongly damped cavity quadrature over a short horizon.
        let c = thermal_only();
        let noise = NoiseSet::from_config(&c);
        let dt = 0.9 * max_time_step(&c, Integrator::EulerMaruyama);
        let exact = Simulator::new(&c, &noise, dt, Integrator::Exact).unwrap();
        let euler = Simulator::new(&c, &noise, dt, Integrator::EulerMaruyama).unwrap();
        let var = |s: &Simulator| {
            let mut acc = 0.0;
            let mut n = 0;
            for r in 0..20 {
                let rec = s.run(20_000, RecordSeed::new(5, r), InitialState::Stationary);
                for v in rec.d_signal.iter().step_by(200) {
                    acc += v.re * v.re;
                    n += 1;
                }
            }
            acc / n as f64
        };
        let (a, b) = (var(&exact), var(&euler));
        assert!(rel(a, 0.25) < 0.05, "exact {a}");
        assert!(rel(b, a) < 0.05, "exact {a} euler {b}");
    }

    #[test]
    fn photocurrent_means_and_dark_only() {
        let c = DeviceConfig::device1();
        let dt = 5e-8;
        let rec = simulate(&c, &NoiseSet::from_config(&c), 20_000, dt, RecordSeed::new(3, 0), Integrator::Exact).unwrap();
        let pc = detect(&rec, &c.detect_signal, &c.detect_meter);
        for (beam, det, mean, samples) in [
            (&c.signal, &c.detect_signal, pc.mean_signal, &pc.i_signal),
            (&c.meter, &c.detect_meter, pc.mean_meter, &pc.i_meter),
        ] {
            let expect = det.mean_current(beam, &c.cavity);
            let n = samples.len() as f64;
            let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!((mean - expect).abs() < 5.0 * sd / n.sqrt() + 1e-12 * expect, "{mean} vs {expect}");
        }

        let mut dark = c;
        dark.detect_signal.efficiency = 0.0;
        dark.detect_signal.dark_current_psd = 4e-24;
        let pc = detect(&rec, &dark.detect_signal, &c.detect_meter);
        let var = pc.i_signal.iter().map(|v| v * v).sum::<f64>() / pc.i_signal.len() as f64;
        assert!(rel(var, 4e-24 / (2.0 * dt)) < 0.05);
        assert!(pc.mean_signal.abs() < 5.0 * (4e-24 / (2.0 * dt) / 20_000.0).sqrt());
        assert!(detect_checked(&rec, &c.detect_signal, &c.detect_meter, 2.0 * dt).is_err());
    }

    #[test]
    fn unstable_runs_are_tagged() {
        let mut c = DeviceConfig::device1();
        c.meter.detuning = -c.meter.detuning;
        let rec = simulate(&c, &NoiseSet::from_config(&c), 100, 5e-8, RecordSeed::new(1, 0), Integrator::Exact).unwrap();
        assert!(rec.unstable);
        assert_eq!(rec.c[0].norm() < 1e3, true);
    }

    #[test]
    fn piezo_level_doubles_peak() {
        let c = DeviceConfig::fig3a();
        let w = c.mechanics.omega_m;
        let level = piezo_level_for_peak_factor(&c, w, 2.0);
        let noise = NoiseSet::from_config(&c).with(NoiseKind::PiezoDrive, level);
        let driven = LinearModel::new(&c, &noise).spectra(w).z;
        let quiet = LinearModel::new(&c, &NoiseSet::from_config(&c)).spectra(w).z;
        assert!(rel(driven, 2.0 * quiet) < 1e-10);
    }

    #[test]
    fn sampling_gain_limits() {
        assert_eq!(sampling_gain(0.0, 1.0), 1.0);
        assert!(sampling_gain(core::f64::consts::TAU, 1.0) < 1e-30);
        let g = sampling_gain(hz(1.551e6), 5e-8);
        assert!(g > 0.97 && g < 0.99);
    }
}
