//! Periodogram estimates from sampled records.
//!
//! One-sided normalization: for a record x_0..x_{N−1} sampled at dt and a
//! window w with mean square U, bin k (0 < k < N/2) holds
//! P_k = 2dt/(N U)·|Σ w_n x_n e^{−2πikn/N}|², at angular frequency 2πk/(N dt).
//! White noise of variance σ² then sits at 2σ²dt, and the bins of a sinusoid
//! of RMS amplitude A sum to A²/(bin width in Hz).
//!
//! Cross spectra use the same scale with conj(X_a)·X_b, so that an identical
//! pair of channels gives the power spectrum with zero phase.

use std::f64::consts::PI;
use std::sync::Arc;

use optomech_core::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("no records supplied")]
    NoRecords,
    #[error("record {index} has {len} samples, expected {expected}")]
    LengthMismatch { index: usize, len: usize, expected: usize },
    #[error("records need at least 4 samples")]
    TooShort,
    #[error("channel A has {a} records but channel B has {b}")]
    Unpaired { a: usize, b: usize },
    #[error("sample interval must be positive")]
    BadInterval,
}

/// Taper applied before the transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    /// w_n = sin²(πn/N); mean square 3/8, noise bandwidth 1.5 bins.
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n).map(|k| (PI * k as f64 / n as f64).sin().powi(2)).collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rect" | "rectangular" => Ok(Window::Rectangular),
            "hann" => Ok(Window::Hann),
            _ => Err(format!("unknown window `{s}` (rect, hann)")),
        }
    }
}

/// Scaled one-sided Fourier coefficients of records with a fixed length and interval.
#[derive(Clone)]
pub struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    n: usize,
    dt: f64,
    scale: f64,
    enbw_bins: f64,
}

impl std::fmt::Debug for Periodogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Periodogram").field("n", &self.n).field("dt", &self.dt).finish()
    }
}

impl Periodogram {
    pub fn new(n: usize, dt: f64, window: Window) -> Result<Self, SpectralError> {
        if n < 4 {
            return Err(SpectralError::TooShort);
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SpectralError::BadInterval);
        }
        let w = window.coefficients(n);
        let sum: f64 = w.iter().sum();
        let ms = w.iter().map(|v| v * v).sum::<f64>() / n as f64;
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(n),
            scale: (2.0 * dt / (n as f64 * ms)).sqrt(),
            enbw_bins: n as f64 * n as f64 * ms / (sum * sum),
            window: w,
            n,
            dt,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of output bins, k = 1 … ⌈N/2⌉ − 1.
    pub fn bins(&self) -> usize {
        self.n.div_ceil(2) - 1
    }

    /// Angular frequency of every output bin.
    pub fn omega(&self) -> Vec<f64> {
        let step = 2.0 * PI / (self.n as f64 * self.dt);
        (1..=self.bins()).map(|k| step * k as f64).collect()
    }

    /// Bin spacing in Hz.
    pub fn bin_width_hz(&self) -> f64 {
        1.0 / (self.n as f64 * self.dt)
    }

    /// Equivalent noise bandwidth in Hz.
    pub fn resolution_bandwidth_hz(&self) -> f64 {
        self.enbw_bins * self.bin_width_hz()
    }

    /// Windowed, scaled coefficients whose squared magnitudes are the periodogram.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<Complex64>, SpectralError> {
        if x.len() != self.n {
            return Err(SpectralError::LengthMismatch { index: 0, len: x.len(), expected: self.n });
        }
        let mut buf: Vec<Complex64> = x.iter().zip(&self.window).map(|(v, w)| Complex64::new(v * w, 0.0)).collect();
        self.fft.process(&mut buf);
        Ok(buf[1..=self.bins()].iter().map(|c| c * self.scale).collect())
    }
}

/// Scalar average of periodograms with a per-bin standard error.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PowerAccumulator {
    records: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl PowerAccumulator {
    pub fn new(bins: usize) -> Self {
        Self { records: 0, sum: vec![0.0; bins], sum_sq: vec![0.0; bins] }
    }

    pub fn add(&mut self, coeffs: &[Complex64]) {
        for ((s, q), c) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(coeffs) {
            let p = c.norm_sqr();
            *s += p;
            *q += p * p;
        }
        self.records += 1;
    }

    /// Adds another accumulator's records after this one's.
    pub fn merge(&mut self, other: &PowerAccumulator) {
        if self.sum.is_empty() {
            *self = other.clone();
            return;
        }
        for k in 0..self.sum.len() {
            self.sum[k] += other.sum[k];
            self.sum_sq[k] += other.sum_sq[k];
        }
        self.records += other.records;
    }

    pub fn records(&self) -> usize {
        self.records
    }

    pub fn finish(&self, omega: Vec<f64>, resolution_bandwidth_hz: f64) -> PowerSpectrum {
        let n = self.records.max(1) as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let stderr = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| if self.records > 1 { ((q / n - m * m).max(0.0) / (n - 1.0)).sqrt() } else { f64::NAN })
            .collect();
        PowerSpectrum { omega, mean, stderr, records: self.records, resolution_bandwidth_hz }
    }
}

/// Vector (complex) average of cross periodograms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CrossAccumulator {
    records: usize,
    sum: Vec<Complex64>,
    sum_abs2: Vec<f64>,
}

impl CrossAccumulator {
    pub fn new(bins: usize) -> Self {
        Self { records: 0, sum: vec![Complex64::new(0.0, 0.0); bins], sum_abs2: vec![0.0; bins] }
    }

    pub fn add(&mut self, a: &[Complex64], b: &[Complex64]) {
        for k in 0..self.sum.len() {
            let c = a[k].conj() * b[k];
            self.sum[k] += c;
            self.sum_abs2[k] += c.norm_sqr();
        }
        self.records += 1;
    }

    pub fn merge(&mut self, other: &CrossAccumulator) {
        if self.sum.is_empty() {
            *self = other.clone();
            return;
        }
        for k in 0..self.sum.len() {
            self.sum[k] += other.sum[k];
            self.sum_abs2[k] += other.sum_abs2[k];
        }
        self.records += other.records;
    }

    pub fn finish(&self, omega: Vec<f64>) -> CrossSpectrum {
        let n = self.records.max(1) as f64;
        let mean: Vec<Complex64> = self.sum.iter().map(|s| s / n).collect();
        let stderr = self
            .sum_abs2
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                if self.records > 1 {
                    ((q / n - m.norm_sqr()).max(0.0) / (n - 1.0)).sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect();
        CrossSpectrum { omega, mean, stderr, records: self.records }
    }
}

/// Averaged one-sided power spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSpectrum {
    pub omega: Vec<f64>,
    pub mean: Vec<f64>,
    /// Standard error of each bin's mean over records.
    pub stderr: Vec<f64>,
    pub records: usize,
    pub resolution_bandwidth_hz: f64,
}

/// Vector-averaged one-sided cross spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossSpectrum {
    pub omega: Vec<f64>,
    pub mean: Vec<Complex64>,
    /// Circular standard error: √(E|c − c̄|²/n), covering both components.
    pub stderr: Vec<f64>,
    pub records: usize,
}

/// Cross spectrum together with the two channels' power spectra.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossResult {
    pub cross: CrossSpectrum,
    pub power_a: PowerSpectrum,
    pub power_b: PowerSpectrum,
}

fn check_records(records: &[&[f64]]) -> Result<usize, SpectralError> {
    let first = records.first().ok_or(SpectralError::NoRecords)?;
    let n = first.len();
    for (index, r) in records.iter().enumerate() {
        if r.len() != n {
            return Err(SpectralError::LengthMismatch { index, len: r.len(), expected: n });
        }
    }
    Ok(n)
}

/// Scalar-averaged periodogram of equally long records.
pub fn power_spectrum(records: &[&[f64]], dt: f64, window: Window) -> Result<PowerSpectrum, SpectralError> {
    let n = check_records(records)?;
    let p = Periodogram::new(n, dt, window)?;
    let mut acc = PowerAccumulator::new(p.bins());
    for r in records {
        acc.add(&p.transform(r)?);
    }
    Ok(acc.finish(p.omega(), p.resolution_bandwidth_hz()))
}

/// Vector-averaged cross spectrum ⟨conj(A)·B⟩ of paired records, with both power spectra.
pub fn cross_spectrum(a: &[&[f64]], b: &[&[f64]], dt: f64, window: Window) -> Result<CrossResult, SpectralError> {
    if a.len() != b.len() {
        return Err(SpectralError::Unpaired { a: a.len(), b: b.len() });
    }
    let n = check_records(a)?;
    let nb = check_records(b)?;
    if nb != n {
        return Err(SpectralError::LengthMismatch { index: 0, len: nb, expected: n });
    }
    let p = Periodogram::new(n, dt, window)?;
    let mut pa = PowerAccumulator::new(p.bins());
    let mut pb = PowerAccumulator::new(p.bins());
    let mut cx = CrossAccumulator::new(p.bins());
    for (ra, rb) in a.iter().zip(b) {
        let (fa, fb) = (p.transform(ra)?, p.transform(rb)?);
        pa.add(&fa);
        pb.add(&fb);
        cx.add(&fa, &fb);
    }
    let rbw = p.resolution_bandwidth_hz();
    Ok(CrossResult { cross: cx.finish(p.omega()), power_a: pa.finish(p.omega(), rbw), power_b: pb.finish(p.omega(), rbw) })
}

/// Indices of the bins within ±`half_width` of `center`.
pub fn band(omega: &[f64], center: f64, half_width: f64) -> Vec<usize> {
    (0..omega.len()).filter(|&k| (omega[k] - center).abs() <= half_width).collect()
}

/// Mean of a real spectrum over a band, with the standard error of that mean
/// treating bins as independent.
pub fn band_mean(values: &[f64], stderr: &[f64], idx: &[usize]) -> (f64, f64) {
    let n = idx.len().max(1) as f64;
    let m = idx.iter().map(|&k| values[k]).sum::<f64>() / n;
    let e = idx.iter().map(|&k| stderr[k].powi(2)).sum::<f64>().sqrt() / n;
    (m, e)
}

/// Complex band mean with its circular standard error.
pub fn band_mean_complex(values: &[Complex64], stderr: &[f64], idx: &[usize]) -> (Complex64, f64) {
    let n = idx.len().max(1) as f64;
    let m = idx.iter().map(|&k| values[k]).sum::<Complex64>() / n;
    let e = idx.iter().map(|&k| stderr[k].powi(2)).sum::<f64>().sqrt() / n;
    (m, e)
}

/// Expected value of a rectangular-window periodogram bin at `omega` for a
/// process with one-sided spectrum `s`: the spectrum convolved with the
/// Fejér kernel T·sinc²((ω − ω')T/2) of a record of duration `t`.
///
/// The convolution is evaluated over ±`span` around `omega`; outside that
/// the spectrum is taken as constant at its value at the span edges.
pub fn expected_periodogram(s: &impl Fn(f64) -> f64, omega: f64, t: f64, span: f64) -> f64 {
    let kernel = |x: f64| {
        let a = 0.5 * x * t;
        if a == 0.0 {
            t
        } else {
            t * (a.sin() / a).powi(2)
        }
    };
    // 16 points per kernel zero spacing resolves the sinc² oscillations.
    let h = 2.0 * PI / t / 16.0;
    let n = ((span / h).ceil() as usize).max(16);
    let mut acc = 0.0;
    let mut mass = 0.0;
    for k in 0..=2 * n {
        let x = -span + span * k as f64 / n as f64;
        let w = if k == 0 || k == 2 * n { 0.5 } else { 1.0 };
        let kv = kernel(x) * w;
        acc += kv * s(omega - x);
        mass += kv;
    }
    let step = span / n as f64;
    acc *= step / (2.0 * PI);
    mass *= step / (2.0 * PI);
    let edge = 0.5 * (s(omega - span) + s(omega + span));
    acc + (1.0 - mass) * edge
}
