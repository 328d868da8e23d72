//! The work behind each subcommand, returning tables and reports so that
//! callers other than the binary can use it.

use std::path::{Path, PathBuf};

use optomech_core::analysis::{
    calibrate_g_from_damping, calibrate_g_from_thermal, classical_noise_for_drive_share, correct_damping,
    lorentzian_fit, model_power_sweep, power_sweep_decomposition,
};
use optomech_core::consts::{hz, to_hz};
use optomech_core::crosscorr::{cross_spectrum_full, fit_detuning, normalized_correlation, predicted_correlation};
use optomech_core::dynamics::{
    bistability_threshold, effective_temperature, peak_location, stability_check, total_damping, MembraneModeSet,
};
use optomech_core::linear::{detected_spectra, LinearModel, OutputSpectra};
use optomech_core::montecarlo::{fastest_rate, sampling_gain, NoiseSet};
use optomech_core::params::derive;
use optomech_core::response::{displacement_psd, displacement_spectrum, linear_grid, meter_photocurrent_spectrum, RealSpectrum, Sidedness};
use optomech_core::{Complex64, DeviceConfig};

use crate::campaign::{CampaignError, CampaignResult, CampaignSpec};
use crate::config::{parse_config, ConfigError};
use crate::io::{IoError, Report, Table};
use crate::records::{Manifest, RecordError};
use crate::spectral::{band, band_mean, band_mean_complex};

/// Failure of a command, grouped by the exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

impl CommandError {
    /// 2 for configuration problems, 3 for numerical failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(e) if e.is_io() => 4,
            CommandError::Config(_) | CommandError::Usage(_) => 2,
            CommandError::Numerical(_) => 3,
            CommandError::Io(IoError::Schema { .. }) => 2,
            CommandError::Io(_) => 4,
            CommandError::Record(RecordError::Io { .. }) => 4,
            CommandError::Record(_) => 2,
        }
    }
}

impl From<CampaignError> for CommandError {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Record(r) => r.into(),
            CampaignError::Io { path, source } => IoError::Io { path, source }.into(),
            CampaignError::Sim(s) => CommandError::Usage(s.to_string()),
            other => CommandError::Numerical(other.to_string()),
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CommandError {
    CommandError::Numerical(e.to_string())
}

/// Frequency grid in rad/s: `points` between the given bounds in Hz, or
/// ω_m ± 20Γ_m when a bound is missing.
pub fn grid(config: &DeviceConfig, lo_hz: Option<f64>, hi_hz: Option<f64>, points: usize) -> Result<Vec<f64>, CommandError> {
    let gm = total_damping(config).abs().max(config.mechanics.gamma_0);
    let wm = config.mechanics.omega_m;
    let lo = lo_hz.map(hz).unwrap_or(wm - 20.0 * gm);
    let hi = hi_hz.map(hz).unwrap_or(wm + 20.0 * gm);
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err(CommandError::Usage(format!(
            "need 0 < lo < hi and at least 2 points (got {} Hz, {} Hz, {points})",
            to_hz(lo),
            to_hz(hi)
        )));
    }
    Ok(linear_grid(lo, hi, points))
}

pub const SPECTRUM_COLUMNS: [&str; 6] = ["omega_hz", "thermal", "rpsn_signal", "meter_backaction_zp", "classical", "total"];

/// One-sided displacement spectrum (m²/Hz) split into its terms.
pub fn spectrum_table(config: &DeviceConfig, grid: &[f64]) -> Result<Table, CommandError> {
    let s = displacement_spectrum(grid, config).map_err(numerical)?;
    let mut t = Table::new(&SPECTRUM_COLUMNS);
    for k in 0..grid.len() {
        t.push_nums(&[to_hz(grid[k]), s.thermal[k], s.rpsn_signal[k], s.meter_backaction_zp[k], s.classical[k], s.total[k]]);
    }
    Ok(t)
}

/// Evenly spaced N_S values from 0 to `n_max`.
pub fn sweep_values(n_max: f64, steps: usize) -> Vec<f64> {
    linear_grid(0.0, n_max, steps.max(2))
}

/// Peak displacement spectrum and its parts along a signal-power sweep.
///
/// With `rpsn_share`, the classical noise is set so that shot noise supplies
/// that share of the light-driven force at the largest N_S, and scales in
/// proportion to N_S elsewhere.
pub fn sweep_power_table(config: &DeviceConfig, n_values: &[f64], rpsn_share: Option<f64>) -> Result<Table, CommandError> {
    let n_max = n_values.iter().copied().fold(0.0, f64::max);
    let mut c = *config;
    if let Some(share) = rpsn_share {
        c.signal.photon_number = n_max;
        c.signal.classical_noise_b = classical_noise_for_drive_share(&c, share).map_err(numerical)?;
    }
    let mut t = Table::new(&["n_s", "peak", "thermal", "rpsn", "meter", "classical", "gamma_m_hz", "r_s"]);
    for p in model_power_sweep(&c, n_values) {
        let mut at = c;
        at.signal.photon_number = p.n_s;
        let r_s = derive(&at, p.gamma_m.abs().max(at.mechanics.gamma_0)).map(|d| d.ratio_rs).unwrap_or(f64::NAN);
        t.push_nums(&[p.n_s, p.peak, p.thermal, p.rpsn, p.meter, p.classical, to_hz(p.gamma_m), r_s]);
    }
    Ok(t)
}

const CROSS_COLUMNS: [&str; 5] = ["omega_hz", "re", "im", "abs2", "phase_deg"];

fn cross_row(w: f64, v: Complex64) -> [f64; 5] {
    [to_hz(w), v.re, v.im, v.norm_sqr(), v.arg().to_degrees()]
}

/// One-sided signal–meter cross spectrum S_ISM/(Ī_S Ī_M) (1/Hz).
pub fn crosscorr_table(config: &DeviceConfig, grid: &[f64]) -> Result<Table, CommandError> {
    let s = cross_spectrum_full(grid, config).map_err(numerical)?;
    let mut t = Table::new(&CROSS_COLUMNS);
    for (w, v) in grid.iter().zip(s.values()) {
        t.push_nums(&cross_row(*w, *v));
    }
    Ok(t)
}

/// Cross spectra for a family of values of one parameter, in long format with
/// the parameter as the first column.
pub fn crosscorr_family(
    config: &DeviceConfig,
    grid: &[f64],
    column: &str,
    values: &[f64],
    apply: impl Fn(&mut DeviceConfig, f64),
) -> Result<Table, CommandError> {
    let mut cols = vec![column];
    cols.extend(CROSS_COLUMNS);
    let mut t = Table::new(&cols);
    for &v in values {
        let mut c = *config;
        apply(&mut c, v);
        let s = cross_spectrum_full(grid, &c).map_err(numerical)?;
        for (w, x) in grid.iter().zip(s.values()) {
            let mut row = vec![v];
            row.extend(cross_row(*w, *x));
            t.push_nums(&row);
        }
    }
    Ok(t)
}

/// Signal detunings (Hz) of the detuning family: −10 kHz to +10 kHz.
pub const DETUNING_FAMILY_HZ: [f64; 5] = [-10e3, -5e3, 0.0, 5e3, 10e3];

/// Classical noise levels of the phase family: none, then 0.1 to 100 times
/// the level at which classical and shot noise drive the membrane equally.
pub fn classical_family(config: &DeviceConfig) -> Result<Vec<f64>, CommandError> {
    let b_eq = classical_noise_for_drive_share(config, 0.5).map_err(numerical)?;
    Ok([0.0, 0.1, 1.0, 10.0, 100.0].iter().map(|f| f * b_eq).collect())
}

/// Analytic normalized correlation around the displacement peak.
pub fn correlation_report(config: &DeviceConfig, half_width_hz: f64) -> Result<Report, CommandError> {
    let p = predicted_correlation(config, hz(half_width_hz), 41).map_err(numerical)?;
    let mut r = Report::new();
    r.num("center_hz", to_hz(p.center))
        .num("half_width_hz", half_width_hz)
        .num("s_is", p.s_is)
        .num("s_im", p.s_im)
        .num("s_ism_re", p.s_ism.re)
        .num("s_ism_im", p.s_ism.im)
        .num("correlation", p.value);
    Ok(r)
}

/// Per-mode net damping of the default mode set, and the bistability threshold.
pub fn stability(config: &DeviceConfig) -> Result<(Table, Report), CommandError> {
    let set = MembraneModeSet::default_for(&config.mechanics);
    let mut t = Table::new(&["mode", "omega_hz", "relative_G", "gamma_net_hz", "status"]);
    let modes = stability_check(config, &set);
    for m in &modes {
        t.push(vec![
            format!("({},{})", m.i, m.j),
            crate::io::fmt_num(to_hz(m.omega)),
            crate::io::fmt_num(m.relative_g),
            crate::io::fmt_num(to_hz(m.gamma_net)),
            if m.stable { "stable" } else { "unstable" }.into(),
        ]);
    }
    let b = bistability_threshold(&set, &config.cavity, config.signal.coupling_g / config.z_zp()).map_err(numerical)?;
    let mut r = Report::new();
    r.num("critical_photon_number", b.critical_photon_number)
        .num("signal_photon_number", config.signal.photon_number)
        .int("unstable_modes", modes.iter().filter(|m| !m.stable).count() as i64);
    Ok((t, r))
}

pub const CAMPAIGN_COLUMNS: [&str; 10] = [
    "omega_hz",
    "z",
    "z_err",
    "rin_signal",
    "rin_signal_err",
    "rin_meter",
    "rin_meter_err",
    "cross_re",
    "cross_im",
    "cross_err",
];

/// Averaged campaign spectra as a table.
pub fn campaign_table(r: &CampaignResult) -> Table {
    let mut t = Table::new(&CAMPAIGN_COLUMNS);
    for k in 0..r.displacement.omega.len() {
        t.push_nums(&[
            to_hz(r.displacement.omega[k]),
            r.displacement.mean[k],
            r.displacement.stderr[k],
            r.rin_signal.mean[k],
            r.rin_signal.stderr[k],
            r.rin_meter.mean[k],
            r.rin_meter.stderr[k],
            r.cross.mean[k].re,
            r.cross.mean[k].im,
            r.cross.stderr[k],
        ]);
    }
    t
}

pub fn campaign_summary(spec: &CampaignSpec, r: &CampaignResult) -> Report {
    let mut rep = Report::new();
    rep.int("records", spec.records as i64)
        .int("samples", spec.samples as i64)
        .num("dt", spec.dt)
        .int("unstable_records", r.unstable_records as i64)
        .num("mean_signal_current", r.mean_signal)
        .num("mean_meter_current", r.mean_meter)
        .num("resolution_bandwidth_hz", r.displacement.resolution_bandwidth_hz);
    rep
}

/// A campaign directory read back: its manifest, configuration and spectra.
pub struct CampaignData {
    pub manifest: Manifest,
    pub config: DeviceConfig,
    pub omega: Vec<f64>,
    pub table: Table,
    pub path: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SPECTRA_FILE: &str = "spectra.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

pub fn load_campaign(dir: &Path) -> Result<CampaignData, CommandError> {
    let manifest = Manifest::read(&dir.join(MANIFEST_FILE))?;
    let config = parse_config(&manifest.config, &dir.join(MANIFEST_FILE).display().to_string())?;
    let path = dir.join(SPECTRA_FILE);
    let table = Table::read(&path)?;
    let omega = table.require("omega_hz", &path)?.into_iter().map(hz).collect();
    Ok(CampaignData { manifest, config, omega, table, path })
}

impl CampaignData {
    pub fn column(&self, name: &str) -> Result<Vec<f64>, CommandError> {
        Ok(self.table.require(name, &self.path)?)
    }
}

/// Model spectra as a periodogram of interval-averaged samples sees them:
/// the colored part scaled by sinc²(ωdt/2), the white part unchanged.
pub fn sampled_spectra(model: &LinearModel, config: &DeviceConfig, omega: f64, dt: f64) -> OutputSpectra {
    let far = 1e6 * fastest_rate(config);
    let white = detected_spectra(model, config, far);
    let s = detected_spectra(model, config, omega);
    let g = sampling_gain(omega, dt);
    OutputSpectra {
        z: g * s.z,
        rin_signal: g * (s.rin_signal - white.rin_signal) + white.rin_signal,
        rin_meter: g * (s.rin_meter - white.rin_meter) + white.rin_meter,
        cross: (s.cross - white.cross) * g + white.cross,
    }
}

/// Measured 𝒞 with its standard error, and the analytic values to compare.
pub struct CorrelationComparison {
    pub center: f64,
    pub bins: usize,
    pub measured: f64,
    pub measured_err: f64,
    pub s_ism_abs: f64,
    pub s_ism_abs_err: f64,
    pub predicted: f64,
    /// Prediction with the sampling gain applied.
    pub predicted_sampled: f64,
}

/// Band-averaged 𝒞 from campaign spectra, over bins within ±`half_width_hz`
/// of the analytic displacement peak.
pub fn compare_correlation(data: &CampaignData, half_width_hz: f64) -> Result<CorrelationComparison, CommandError> {
    let config = &data.config;
    let pred = predicted_correlation(config, hz(half_width_hz), 41).map_err(numerical)?;
    let idx = band(&data.omega, pred.center, hz(half_width_hz));
    if idx.is_empty() {
        return Err(CommandError::Numerical(format!("no bins within ±{half_width_hz} Hz of the peak")));
    }
    let (s, se) = band_mean(&data.column("rin_signal")?, &data.column("rin_signal_err")?, &idx);
    let (m, me) = band_mean(&data.column("rin_meter")?, &data.column("rin_meter_err")?, &idx);
    let re = data.column("cross_re")?;
    let im = data.column("cross_im")?;
    let cross: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
    let (x, xe) = band_mean_complex(&cross, &data.column("cross_err")?, &idx);
    let measured = normalized_correlation(s, m, x).map_err(numerical)?;
    // first-order propagation; the circular error splits evenly over the two components
    let rel = ((2.0 * xe / 2f64.sqrt() / x.norm()).powi(2) + (se / s).powi(2) + (me / m).powi(2)).sqrt();

    let model = LinearModel::new(config, &NoiseSet::from_config(config));
    let n = 41;
    let (mut ss, mut sm, mut sx) = (0.0, 0.0, Complex64::new(0.0, 0.0));
    for k in 0..n {
        let w = pred.center - hz(half_width_hz) + 2.0 * hz(half_width_hz) * k as f64 / (n - 1) as f64;
        let o = sampled_spectra(&model, config, w, data.manifest.dt);
        ss += o.rin_signal;
        sm += o.rin_meter;
        sx += o.cross;
    }
    let predicted_sampled = normalized_correlation(ss, sm, sx).map_err(numerical)?;
    Ok(CorrelationComparison {
        center: pred.center,
        bins: idx.len(),
        measured,
        measured_err: measured * rel,
        s_ism_abs: x.norm(),
        s_ism_abs_err: xe,
        predicted: pred.value,
        predicted_sampled,
    })
}

pub fn analyze_crosscorr(dir: &Path, half_width_hz: f64) -> Result<Report, CommandError> {
    let data = load_campaign(dir)?;
    let c = compare_correlation(&data, half_width_hz)?;
    let mut r = Report::new();
    r.int("records", data.manifest.records as i64)
        .num("center_hz", to_hz(c.center))
        .num("half_width_hz", half_width_hz)
        .int("bins", c.bins as i64)
        .num("correlation", c.measured)
        .num("correlation_err", c.measured_err)
        .num("s_ism_abs", c.s_ism_abs)
        .num("s_ism_abs_err", c.s_ism_abs_err)
        .num("predicted", c.predicted)
        .num("predicted_sampled", c.predicted_sampled);

    let gm = total_damping(&data.config).abs().max(data.config.mechanics.gamma_0);
    let fit_idx = band(&data.omega, data.config.mechanics.omega_m, 8.0 * gm);
    let re = data.column("cross_re")?;
    let im = data.column("cross_im")?;
    let err = data.column("cross_err")?;
    let grid: Vec<f64> = fit_idx.iter().map(|&k| data.omega[k]).collect();
    let meas: Vec<Complex64> = fit_idx.iter().map(|&k| Complex64::new(re[k], im[k])).collect();
    let sig: Vec<f64> = fit_idx.iter().map(|&k| err[k] / 2f64.sqrt()).collect();
    match fit_detuning(&grid, &meas, Some(&sig), &data.config) {
        Ok(f) => {
            r.num("detuning_fit_hz", to_hz(f.detuning))
                .num("detuning_fit_err_hz", to_hz(f.sigma))
                .num("detuning_configured_hz", to_hz(data.config.signal.detuning))
                .num("detuning_fit_scale", f.scale);
        }
        Err(e) => {
            r.text("detuning_fit_error", &e.to_string());
        }
    }
    Ok(r)
}

/// Lorentzian fit to a campaign's displacement (`z`) or meter (`rin_meter`)
/// spectrum within ±`linewidths`·Γ_m of its peak, with the residuals.
pub fn analyze_lorentzian(dir: &Path, column: &str, linewidths: f64) -> Result<(Report, Table), CommandError> {
    let data = load_campaign(dir)?;
    let values = data.column(column)?;
    let errs = data.column(&format!("{column}_err"))?;
    let gm = total_damping(&data.config).abs().max(data.config.mechanics.gamma_0);
    let wm = data.config.mechanics.omega_m;
    let near = band(&data.omega, wm, 20.0 * gm);
    let center = near
        .iter()
        .copied()
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .map(|k| data.omega[k])
        .ok_or_else(|| CommandError::Numerical("spectrum has no bins near ω_m".into()))?;
    let spectrum = RealSpectrum { grid: data.omega.clone(), values: values.clone(), sidedness: Sidedness::OneSided };
    let fit = lorentzian_fit(&spectrum, center, linewidths * gm, Some(&errs)).map_err(numerical)?;
    let s = fit.sigmas();
    let mut r = Report::new();
    r.text("column", column)
        .num("center_hz", to_hz(fit.center))
        .num("center_err_hz", to_hz(s[0]))
        .num("fwhm_hz", to_hz(fit.fwhm))
        .num("fwhm_err_hz", to_hz(s[1]))
        .num("peak", fit.peak)
        .num("peak_err", s[2])
        .num("offset", fit.offset)
        .num("offset_err", s[3])
        .num("area", fit.area())
        .num("window_linewidths", linewidths)
        .num("sampling_gain", sampling_gain(fit.center, data.manifest.dt));
    let mut res = Table::new(&["omega_hz", "value", "fit", "residual", "normalized"]);
    for k in band(&data.omega, center, linewidths * gm) {
        let f = fit.eval(data.omega[k]);
        res.push_nums(&[to_hz(data.omega[k]), values[k], f, values[k] - f, (values[k] - f) / errs[k]]);
    }
    Ok((r, res))
}

/// Damping correction and quadratic decomposition of a power-sweep table
/// (columns n_s, peak, gamma_m_hz).
pub fn analyze_power_sweep(path: &Path) -> Result<Report, CommandError> {
    let t = Table::read(path)?;
    let n = t.require("n_s", path)?;
    let peaks = t.require("peak", path)?;
    let gammas: Vec<f64> = t.require("gamma_m_hz", path)?.into_iter().map(hz).collect();
    let corr = correct_damping(&n, &peaks, &gammas).map_err(numerical)?;
    let d = power_sweep_decomposition(&n, &corr.corrected, None).map_err(numerical)?;
    let mut r = Report::new();
    r.text("damping_correction", "area-preserving: peak * (gamma_m / gamma_m(0))^2")
        .num("gamma_at_zero_hz", to_hz(corr.gamma_at_zero))
        .num("damping_slope_hz", to_hz(corr.slope))
        .flag("nonlinear_damping_trend", corr.nonlinear_trend)
        .num("n_max", d.n_max)
        .num("constant", d.constant)
        .num("linear", d.linear)
        .num("quadratic", d.quadratic)
        .num("rpsn_share_of_increase", d.rpsn_share_of_increase)
        .num("rpsn_share_of_total", d.rpsn_share_of_total)
        .num("classical_share_of_total", d.classical_share_of_total)
        .num("thermal_share_of_total", d.thermal_share_of_total);
    Ok(r)
}

/// Coupling from the meter's optical damping and from its thermal peak.
///
/// With a campaign directory both inputs come from a Lorentzian fit to the
/// simulated meter spectrum (divided by the sampling gain), which should be
/// run with the signal beam off; without one they come from the analytic
/// model of `config` with the signal beam switched off.
pub fn analyze_calibrate(config: &DeviceConfig, campaign: Option<&Path>) -> Result<Report, CommandError> {
    let (config, gamma_m, peak, source) = match campaign {
        Some(dir) => {
            let data = load_campaign(dir)?;
            let (fit_report, _) = analyze_lorentzian(dir, "rin_meter", 5.0)?;
            let gm = hz(fit_report.get_num("fwhm_hz").unwrap_or(f64::NAN));
            let peak = fit_report.get_num("peak").unwrap_or(f64::NAN) / fit_report.get_num("sampling_gain").unwrap_or(1.0);
            (data.config, gm, peak, "campaign")
        }
        None => {
            let config = &config.with_signal_photons(0.0);
            let gm = total_damping(config);
            let wm = config.mechanics.omega_m;
            let w = peak_location(&|w| displacement_psd(w, config), wm - 10.0 * gm.abs(), wm + 10.0 * gm.abs())
                .map_err(numerical)?;
            let spec = meter_photocurrent_spectrum(&[w], config).map_err(numerical)?;
            (*config, gm, spec.transduced[0], "model")
        }
    };
    let g_damp = calibrate_g_from_damping(gamma_m, config.meter.photon_number, &config.cavity, config.meter.detuning, &config.mechanics)
        .map_err(numerical)?;
    let g_therm = calibrate_g_from_thermal(peak, gamma_m, config.env.temperature, &config).map_err(numerical)?;
    let mut r = Report::new();
    r.text("source", source)
        .num("gamma_m_hz", to_hz(gamma_m))
        .num("relative_peak", peak)
        .num("g_damping_hz", to_hz(g_damp))
        .num("g_thermal_hz", to_hz(g_therm))
        .num("g_configured_hz", to_hz(config.meter.coupling_g))
        .num("relative_difference", (g_damp - g_therm).abs() / g_damp)
        .num("effective_temperature_k", effective_temperature(&config).unwrap_or(f64::NAN));
    Ok(r)
}

/// Frequency (rad/s) of the analytic displacement peak.
pub fn displacement_peak(config: &DeviceConfig) -> f64 {
    let gm = total_damping(config).abs().max(config.mechanics.gamma_0);
    let wm = config.mechanics.omega_m;
    peak_location(&|w| displacement_psd(w, config), wm - 10.0 * gm, wm + 10.0 * gm).unwrap_or(wm)
}
