//! Command-line parsing and dispatch.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use optomech_core::montecarlo::{piezo_level_for_peak_factor, Integrator};
use optomech_core::DeviceConfig;

use crate::campaign::{manifest, run_campaign, CampaignSpec, RunOptions};
use crate::commands::{self as cmd, CommandError, MANIFEST_FILE, SPECTRA_FILE, SUMMARY_FILE};
use crate::config::{load_config_over, load_preset};
use crate::io::{write_text, IoError, Report, Table};
use crate::plot::{plot_to_file, PlotSpec};
use crate::spectral::Window;

#[derive(Debug, Parser)]
#[command(name = "optomech", version, about = "Two-beam cavity optomechanics: spectra, cross-correlations and Monte Carlo campaigns")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Starting parameter set: device1, device2, fig3a, or a name in $OPTOMECH_PRESET_DIR.
    #[arg(long, global = true, default_value = "device1")]
    pub preset: String,
    /// TOML file overriding preset fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Signal-beam intracavity photon number N_S.
    #[arg(long, global = true)]
    pub ns: Option<f64>,
    /// Output file (a directory for `montecarlo`); standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CrossMode {
    Single,
    SweepDetuning,
    SweepClassical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Crosscorr,
    Lorentzian,
    PowerSweep,
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntegratorArg {
    Exact,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    Rectangular,
    Hann,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Lower grid edge (Hz); defaults to ω_m − 20Γ_m.
    #[arg(long)]
    pub lo_hz: Option<f64>,
    /// Upper grid edge (Hz); defaults to ω_m + 20Γ_m.
    #[arg(long)]
    pub hi_hz: Option<f64>,
    #[arg(long, default_value_t = 2001)]
    pub points: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Displacement spectrum split into thermal, shot-noise, meter and classical terms.
    Spectrum(GridArgs),
    /// Peak displacement spectrum along a signal-power sweep.
    SweepPower {
        /// Comma-separated N_S values; default 9 steps from 0 to the configured N_S.
        #[arg(long, value_delimiter = ',')]
        ns_list: Vec<f64>,
        #[arg(long, default_value_t = 9)]
        steps: usize,
        /// Add classical noise so shot noise supplies this share of the light-driven force at the top of the sweep.
        #[arg(long)]
        rpsn_share: Option<f64>,
    },
    /// Signal–meter cross spectrum, singly or as a family.
    Crosscorr {
        #[arg(long, value_enum, default_value_t = CrossMode::Single)]
        mode: CrossMode,
        #[command(flatten)]
        grid: GridArgs,
        /// Band half-width (Hz) for the normalized correlation printed in single mode.
        #[arg(long, default_value_t = 200.0)]
        half_width_hz: f64,
    },
    /// Simulate a campaign of independent records and average their spectra.
    Montecarlo {
        #[arg(long, default_value_t = 100)]
        records: usize,
        /// Record length, e.g. `20ms` or a number of seconds.
        #[arg(long, default_value = "20ms", value_parser = parse_seconds)]
        len: f64,
        /// Sample rate (Hz).
        #[arg(long, default_value_t = 2e7)]
        fs: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep every record as a binary file next to the manifest.
        #[arg(long)]
        save_records: bool,
        /// Reuse matching record files already in the output directory.
        #[arg(long)]
        resume: bool,
        /// Add a piezo drive that multiplies the displacement peak by this factor.
        #[arg(long)]
        piezo_factor: Option<f64>,
        #[arg(long, value_enum, default_value_t = IntegratorArg::Exact)]
        integrator: IntegratorArg,
        #[arg(long, value_enum, default_value_t = WindowArg::Rectangular)]
        window: WindowArg,
    },
    /// Estimate quantities from campaign output or sweep tables.
    Analyze {
        #[arg(long, value_enum)]
        task: Task,
        /// Campaign directory, or a sweep CSV for `power-sweep`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 200.0)]
        half_width_hz: f64,
        /// Lorentzian fit window in linewidths either side of the peak.
        #[arg(long, default_value_t = 5.0)]
        fit_linewidths: f64,
        /// Spectrum column for the Lorentzian fit.
        #[arg(long, default_value = "z")]
        column: String,
        /// Where to write fit residuals (lorentzian task).
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Net damping of each membrane mode and the bistability threshold.
    Stability,
    /// Draw a CSV as an SVG line plot.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        x: Option<String>,
        #[arg(long, value_delimiter = ',')]
        y: Vec<String>,
        /// Column splitting rows into separate curves.
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        log_y: bool,
        #[arg(long, default_value = "")]
        title: String,
    },
}

/// Parses `20ms`, `1.5s`, `500us` or a bare number of seconds.
pub fn parse_seconds(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let split = s.find(|c: char| c.is_ascii_alphabetic() || c == 'µ').unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let v: f64 = num.trim().parse().map_err(|_| format!("not a duration: `{s}`"))?;
    let scale = match unit {
        "" | "s" => 1.0,
        "ms" => 1e-3,
        "us" | "µs" => 1e-6,
        "ns" => 1e-9,
        _ => return Err(format!("unknown time unit `{unit}` (use s, ms, us, ns)")),
    };
    if v > 0.0 && v.is_finite() {
        Ok(v * scale)
    } else {
        Err(format!("duration must be positive: `{s}`"))
    }
}

fn resolve_config(c: &Common) -> Result<DeviceConfig, CommandError> {
    let mut config = load_preset(&c.preset)?;
    if let Some(path) = &c.config {
        config = load_config_over(path, &config)?;
    }
    if let Some(ns) = c.ns {
        config.signal.photon_number = ns;
        if let Some(&v) = config.validate().first() {
            return Err(CommandError::Usage(format!("--ns {ns}: {v}")));
        }
    }
    Ok(config)
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<(), CommandError> {
    match out {
        Some(p) => Ok(write_text(p, text)?),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())
                .and_then(|_| so.flush())
                .map_err(|source| IoError::Io { path: "<stdout>".into(), source }.into())
        }
    }
}

fn emit_table(c: &Common, table: &Table, plot: PlotSpec) -> Result<(), CommandError> {
    match c.format {
        Format::Csv => emit_text(c.out.as_deref(), &table.to_csv_string()),
        Format::Svg => {
            let svg = crate::plot::render_svg(table, &plot).map_err(|e| CommandError::Numerical(e.to_string()))?;
            emit_text(c.out.as_deref(), &svg)
        }
    }
}

fn note(text: &str) {
    eprintln!("{text}");
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CommandError> {
    let c = &cli.common;
    match &cli.command {
        Command::Spectrum(g) => {
            let config = resolve_config(c)?;
            let grid = cmd::grid(&config, g.lo_hz, g.hi_hz, g.points)?;
            let t = cmd::spectrum_table(&config, &grid)?;
            let plot = PlotSpec { log_y: true, title: "displacement spectrum (m²/Hz)".into(), ..Default::default() };
            emit_table(c, &t, plot)
        }
        Command::SweepPower { ns_list, steps, rpsn_share } => {
            let config = resolve_config(c)?;
            let n = if ns_list.is_empty() { cmd::sweep_values(config.signal.photon_number, *steps) } else { ns_list.clone() };
            let t = cmd::sweep_power_table(&config, &n, *rpsn_share)?;
            let plot = PlotSpec {
                y: vec!["peak".into(), "thermal".into(), "rpsn".into(), "classical".into()],
                title: "peak displacement spectrum vs N_S".into(),
                ..Default::default()
            };
            emit_table(c, &t, plot)
        }
        Command::Crosscorr { mode, grid, half_width_hz } => {
            let config = resolve_config(c)?;
            let g = cmd::grid(&config, grid.lo_hz, grid.hi_hz, grid.points)?;
            let (t, group) = match mode {
                CrossMode::Single => {
                    note(cmd::correlation_report(&config, *half_width_hz)?.render().trim_end());
                    (cmd::crosscorr_table(&config, &g)?, None)
                }
                CrossMode::SweepDetuning => {
                    let values = cmd::DETUNING_FAMILY_HZ;
                    let t = cmd::crosscorr_family(&config, &g, "detuning_hz", &values, |c, v| {
                        c.signal.detuning = optomech_core::consts::hz(v)
                    })?;
                    (t, Some("detuning_hz"))
                }
                CrossMode::SweepClassical => {
                    let values = cmd::classical_family(&config)?;
                    let t = cmd::crosscorr_family(&config, &g, "classical_b", &values, |c, v| c.signal.classical_noise_b = v)?;
                    (t, Some("classical_b"))
                }
            };
            let plot = PlotSpec {
                x: Some("omega_hz".into()),
                y: vec![if *mode == CrossMode::SweepClassical { "phase_deg" } else { "abs2" }.into()],
                group: group.map(str::to_string),
                log_y: *mode != CrossMode::SweepClassical,
                title: "signal–meter cross spectrum".into(),
            };
            emit_table(c, &t, plot)
        }
        Command::Montecarlo { records, len, fs, seed, save_records, resume, piezo_factor, integrator, window } => {
            let config = resolve_config(c)?;
            let dir = c.out.as_deref().ok_or_else(|| CommandError::Usage("montecarlo needs --out DIR".into()))?;
            let mut spec = CampaignSpec::new(&config, *records, *len, *fs, *seed);
            spec.integrator = match integrator {
                IntegratorArg::Exact => Integrator::Exact,
                IntegratorArg::Euler => Integrator::EulerMaruyama,
            };
            spec.window = match window {
                WindowArg::Rectangular => Window::Rectangular,
                WindowArg::Hann => Window::Hann,
            };
            if let Some(f) = piezo_factor {
                let w = cmd::displacement_peak(&config);
                spec = spec.with_piezo(piezo_level_for_peak_factor(&config, w, *f));
            }
            let progress = |done: usize, total: usize| eprint!("\r{done}/{total} records");
            let opts = RunOptions { record_dir: Some(dir), keep_records: *save_records, resume: *resume, progress: Some(&progress) };
            std::fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
            let result = run_campaign(&spec, opts)?;
            eprintln!();
            manifest(&spec, &result).write(&dir.join(MANIFEST_FILE))?;
            cmd::campaign_table(&result).write(&dir.join(SPECTRA_FILE))?;
            let summary = cmd::campaign_summary(&spec, &result);
            write_text(&dir.join(SUMMARY_FILE), &summary.render())?;
            if result.unstable_records > 0 {
                note(&format!("warning: {} records flagged dynamically unstable", result.unstable_records));
            }
            Ok(())
        }
        Command::Analyze { task, input, half_width_hz, fit_linewidths, column, residuals } => {
            let need_input = || input.as_deref().ok_or_else(|| CommandError::Usage(format!("--task {task:?} needs --input")));
            let report: Report = match task {
                Task::Crosscorr => cmd::analyze_crosscorr(need_input()?, *half_width_hz)?,
                Task::Lorentzian => {
                    let (r, res) = cmd::analyze_lorentzian(need_input()?, column, *fit_linewidths)?;
                    if let Some(p) = residuals {
                        res.write(p)?;
                    }
                    r
                }
                Task::PowerSweep => cmd::analyze_power_sweep(need_input()?)?,
                Task::Calibrate => {
                    let config = resolve_config(c)?;
                    cmd::analyze_calibrate(&config, input.as_deref())?
                }
            };
            emit_text(c.out.as_deref(), &report.render())
        }
        Command::Stability => {
            let config = resolve_config(c)?;
            let (t, r) = cmd::stability(&config)?;
            if c.format == Format::Svg {
                return Err(CommandError::Usage("stability writes CSV only".into()));
            }
            note(r.render().trim_end());
            emit_text(c.out.as_deref(), &t.to_csv_string())
        }
        Command::Plot { input, x, y, group, log_y, title } => {
            let table = Table::read(input)?;
            let out = c.out.clone().unwrap_or_else(|| input.with_extension("svg"));
            let spec = PlotSpec { x: x.clone(), y: y.clone(), group: group.clone(), log_y: *log_y, title: title.clone() };
            plot_to_file(&table, &spec, &out).map_err(|e| match e {
                crate::plot::PlotError::Draw { message, .. } => {
                    CommandError::Io(IoError::Io { path: out.clone(), source: std::io::Error::other(message) })
                }
                other => CommandError::Usage(other.to_string()),
            })
        }
    }
}
