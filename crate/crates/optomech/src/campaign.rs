//! Monte Carlo campaigns: many independent records, streamed into averaged
//! spectra without holding the records in memory.
//!
//! Records are processed in fixed chunks of consecutive indices on the rayon
//! pool and the chunk accumulators are merged in index order, so results are
//! bit-identical whatever the number of threads.

use std::path::{Path, PathBuf};

use optomech_core::montecarlo::{detect, InitialState, Integrator, NoiseKind, NoiseSet, RecordSeed, SimError, Simulator};
use optomech_core::DeviceConfig;
use rayon::prelude::*;

use crate::config::{config_hash, to_toml};
use crate::records::{record_file_name, Manifest, ManifestEntry, RecordError, RecordHeader, StoredRecord, FLAG_UNSTABLE, VERSION};
use crate::spectral::{CrossAccumulator, CrossSpectrum, Periodogram, PowerAccumulator, PowerSpectrum, SpectralError, Window};

const CHUNK: usize = 4;
const WAVE: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("campaign needs at least one record of at least 4 samples")]
    Empty,
    #[error("cannot create {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// What to simulate.
#[derive(Clone, Debug, PartialEq)]
pub struct CampaignSpec {
    pub config: DeviceConfig,
    pub noise: NoiseSet,
    pub dt: f64,
    pub samples: usize,
    pub records: usize,
    pub master_seed: u64,
    pub integrator: Integrator,
    pub window: Window,
}

impl CampaignSpec {
    /// Records of `duration` seconds sampled at `sample_rate` Hz with the
    /// configuration's own noise, the exact integrator and no window.
    pub fn new(config: &DeviceConfig, records: usize, duration: f64, sample_rate: f64, master_seed: u64) -> Self {
        Self {
            config: *config,
            noise: NoiseSet::from_config(config),
            dt: 1.0 / sample_rate,
            samples: (duration * sample_rate).round() as usize,
            records,
            master_seed,
            integrator: Integrator::Exact,
            window: Window::Rectangular,
        }
    }

    pub fn with_piezo(mut self, level: f64) -> Self {
        self.noise.set(NoiseKind::PiezoDrive, level);
        self
    }

    pub fn duration(&self) -> f64 {
        self.samples as f64 * self.dt
    }
}

/// Where records go, if anywhere.
#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Directory for record files.
    pub record_dir: Option<&'a Path>,
    /// Write each record to `record_dir`.
    pub keep_records: bool,
    /// Reuse matching record files already in `record_dir` instead of simulating them.
    pub resume: bool,
    /// Called after each wave with (records done, records total).
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

/// Averaged spectra of a campaign. Photocurrent spectra are relative,
/// δI/Ī with each record normalized by its own mean current.
#[derive(Clone, Debug, PartialEq)]
pub struct CampaignResult {
    pub displacement: PowerSpectrum,
    pub rin_signal: PowerSpectrum,
    pub rin_meter: PowerSpectrum,
    pub cross: CrossSpectrum,
    pub entries: Vec<ManifestEntry>,
    pub unstable_records: usize,
    /// Averages over records of the mean currents (A).
    pub mean_signal: f64,
    pub mean_meter: f64,
}

#[derive(Clone)]
struct Accumulators {
    z: PowerAccumulator,
    s: PowerAccumulator,
    m: PowerAccumulator,
    x: CrossAccumulator,
    entries: Vec<ManifestEntry>,
}

impl Accumulators {
    fn new(bins: usize) -> Self {
        Self {
            z: PowerAccumulator::new(bins),
            s: PowerAccumulator::new(bins),
            m: PowerAccumulator::new(bins),
            x: CrossAccumulator::new(bins),
            entries: Vec::new(),
        }
    }

    fn merge(&mut self, o: &Accumulators) {
        self.z.merge(&o.z);
        self.s.merge(&o.s);
        self.m.merge(&o.m);
        self.x.merge(&o.x);
        self.entries.extend(o.entries.iter().cloned());
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn relative(v: &[f64], m: f64) -> Vec<f64> {
    if m == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| (x - m) / m).collect()
    }
}

struct Context<'a> {
    spec: &'a CampaignSpec,
    sim: Simulator,
    periodogram: Periodogram,
    hash: u64,
    opts: RunOptions<'a>,
}

impl Context<'_> {
    fn header(&self, index: u64, unstable: bool) -> RecordHeader {
        RecordHeader {
            dt: self.spec.dt,
            samples: self.spec.samples as u64,
            master_seed: self.spec.master_seed,
            index,
            config_hash: self.hash,
            flags: if unstable { FLAG_UNSTABLE } else { 0 },
        }
    }

    fn existing(&self, index: u64) -> Option<StoredRecord> {
        let dir = self.opts.record_dir?;
        if !self.opts.resume {
            return None;
        }
        let r = StoredRecord::read(&dir.join(record_file_name(index))).ok()?;
        let want = self.header(index, r.header.flags & FLAG_UNSTABLE != 0);
        (r.header == want).then_some(r)
    }

    fn record(&self, index: u64) -> Result<StoredRecord, CampaignError> {
        if let Some(r) = self.existing(index) {
            return Ok(r);
        }
        let seed = RecordSeed::new(self.spec.master_seed, index);
        let traj = self.sim.run(self.spec.samples, seed, InitialState::Stationary);
        let pc = detect(&traj, &self.spec.config.detect_signal, &self.spec.config.detect_meter);
        let rec = StoredRecord {
            header: self.header(index, traj.unstable),
            displacement: traj.displacement(),
            i_signal: pc.i_signal,
            i_meter: pc.i_meter,
        };
        if let (Some(dir), true) = (self.opts.record_dir, self.opts.keep_records) {
            rec.write(&dir.join(record_file_name(index)))?;
        }
        Ok(rec)
    }

    fn chunk(&self, indices: &[u64]) -> Result<Accumulators, CampaignError> {
        let mut acc = Accumulators::new(self.periodogram.bins());
        for &index in indices {
            let rec = self.record(index)?;
            let (ms, mm) = (mean(&rec.i_signal), mean(&rec.i_meter));
            let z_mean = mean(&rec.displacement);
            let z: Vec<f64> = rec.displacement.iter().map(|v| v - z_mean).collect();
            let fz = self.periodogram.transform(&z)?;
            let fs = self.periodogram.transform(&relative(&rec.i_signal, ms))?;
            let fm = self.periodogram.transform(&relative(&rec.i_meter, mm))?;
            acc.z.add(&fz);
            acc.s.add(&fs);
            acc.m.add(&fm);
            acc.x.add(&fs, &fm);
            acc.entries.push(ManifestEntry {
                index,
                file: (self.opts.keep_records && self.opts.record_dir.is_some()).then(|| record_file_name(index)),
                hash: format!("{:016x}", rec.content_hash()),
                unstable: rec.header.flags & FLAG_UNSTABLE != 0,
                mean_signal: ms,
                mean_meter: mm,
            });
        }
        Ok(acc)
    }
}

/// Runs a campaign and returns its averaged spectra.
pub fn run_campaign(spec: &CampaignSpec, opts: RunOptions<'_>) -> Result<CampaignResult, CampaignError> {
    if spec.records == 0 || spec.samples < 4 {
        return Err(CampaignError::Empty);
    }
    if let (Some(dir), true) = (opts.record_dir, opts.keep_records) {
        std::fs::create_dir_all(dir).map_err(|source| CampaignError::Io { path: dir.to_path_buf(), source })?;
    }
    let ctx = Context {
        spec,
        sim: Simulator::new(&spec.config, &spec.noise, spec.dt, spec.integrator)?,
        periodogram: Periodogram::new(spec.samples, spec.dt, spec.window)?,
        hash: config_hash(&spec.config),
        opts,
    };
    let all: Vec<u64> = (0..spec.records as u64).collect();
    let mut total = Accumulators::new(ctx.periodogram.bins());
    for wave in all.chunks(CHUNK * WAVE) {
        let parts: Vec<Result<Accumulators, CampaignError>> = wave.par_chunks(CHUNK).map(|c| ctx.chunk(c)).collect();
        for p in parts {
            total.merge(&p?);
        }
        if let Some(cb) = opts.progress {
            cb(total.entries.len(), spec.records);
        }
    }
    let omega = ctx.periodogram.omega();
    let rbw = ctx.periodogram.resolution_bandwidth_hz();
    let n = total.entries.len() as f64;
    Ok(CampaignResult {
        displacement: total.z.finish(omega.clone(), rbw),
        rin_signal: total.s.finish(omega.clone(), rbw),
        rin_meter: total.m.finish(omega.clone(), rbw),
        cross: total.x.finish(omega),
        unstable_records: total.entries.iter().filter(|e| e.unstable).count(),
        mean_signal: total.entries.iter().map(|e| e.mean_signal).sum::<f64>() / n,
        mean_meter: total.entries.iter().map(|e| e.mean_meter).sum::<f64>() / n,
        entries: total.entries,
    })
}

/// The manifest describing a finished campaign.
pub fn manifest(spec: &CampaignSpec, result: &CampaignResult) -> Manifest {
    Manifest {
        format_version: VERSION,
        master_seed: spec.master_seed,
        records: spec.records as u64,
        samples: spec.samples as u64,
        dt: spec.dt,
        integrator: match spec.integrator {
            Integrator::Exact => "exact".into(),
            Integrator::EulerMaruyama => "euler-maruyama".into(),
        },
        window: match spec.window {
            Window::Rectangular => "rectangular".into(),
            Window::Hann => "hann".into(),
        },
        config_hash: format!("{:016x}", config_hash(&spec.config)),
        config: to_toml(&spec.config),
        piezo: spec.noise.level(NoiseKind::PiezoDrive),
        entries: result.entries.clone(),
    }
}
