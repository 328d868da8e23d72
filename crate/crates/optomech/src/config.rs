//! TOML device configurations.
//!
//! Frequencies are written in Hz (keys ending in `_hz`) and converted to rad/s
//! on load. A file may start from a named preset and override any subset of
//! fields, either as tables or as dotted keys:
//!
//! ```toml
//! preset = "device1"
//! signal.photons = 2.0e8
//! signal.detuning_hz = -300.0
//!
//! [mechanics]
//! gamma_0_hz = 0.5
//! ```
//!
//! Preset names resolve to the built-in presets first, then to `<name>.toml`
//! in the directory named by `OPTOMECH_PRESET_DIR`.

use std::path::{Path, PathBuf};

use optomech_core::consts::{hz, to_hz};
use optomech_core::params::{Beam, Cavity, Detection, DeviceConfig, Violation};
use serde::{Deserialize, Serialize};

/// Environment variable naming an extra preset directory.
pub const PRESET_DIR_VAR: &str = "OPTOMECH_PRESET_DIR";

const MAX_PRESET_DEPTH: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: Box<toml::de::Error> },
    #[error("unknown preset `{0}` (built-in: device1, device2, fig3a; or set {PRESET_DIR_VAR})")]
    UnknownPreset(String),
    #[error("preset chain deeper than {MAX_PRESET_DEPTH} (cycle?) at `{0}`")]
    PresetDepth(String),
    #[error("invalid configuration: {}", list(.0))]
    Invalid(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl ConfigError {
    /// Whether the failure is an I/O problem rather than bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, ConfigError::Io { .. })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanicsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_m_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_0_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_kg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<[u32; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_hz: Option<f64>,
    /// Fraction of κ through the input mirror.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left_fraction: Option<f64>,
    /// Fraction of κ through the detected output mirror.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub photons: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    /// One-sided dark-current PSD (A²/Hz).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dark_psd: Option<f64>,
    /// Responsivity (A/W).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub responsivity: Option<f64>,
}

/// A configuration file: an optional base preset plus overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanics: Option<MechanicsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<BeamSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meter: Option<BeamSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detect_signal: Option<DetectSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detect_meter: Option<DetectSection>,
}

fn set(target: &mut f64, v: Option<f64>) {
    if let Some(v) = v {
        *target = v;
    }
}

fn set_hz(target: &mut f64, v: Option<f64>) {
    if let Some(v) = v {
        *target = hz(v);
    }
}

fn apply_beam(beam: &mut Beam, s: &BeamSection) {
    set_hz(&mut beam.detuning, s.detuning_hz);
    set(&mut beam.photon_number, s.photons);
    set_hz(&mut beam.coupling_g, s.g_hz);
    set(&mut beam.classical_noise_b, s.classical_b);
    set(&mut beam.wavelength, s.wavelength_m);
}

fn apply_detect(d: &mut Detection, s: &DetectSection) {
    set(&mut d.efficiency, s.efficiency);
    set(&mut d.dark_current_psd, s.dark_psd);
    set(&mut d.responsivity, s.responsivity);
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), source: Box::new(e) })
    }

    /// Applies the overrides in this file on top of `base`.
    pub fn apply(&self, base: &DeviceConfig) -> DeviceConfig {
        let mut c = *base;
        if let Some(m) = &self.mechanics {
            set_hz(&mut c.mechanics.omega_m, m.omega_m_hz);
            set_hz(&mut c.mechanics.gamma_0, m.gamma_0_hz);
            set(&mut c.mechanics.mass, m.mass_kg);
            if let Some([i, j]) = m.mode {
                c.mechanics.mode_indices = (i, j);
            }
        }
        if let Some(cav) = &self.cavity {
            let kappa = cav.kappa_hz.map(hz).unwrap_or(c.cavity.kappa);
            let fl = cav.left_fraction.unwrap_or(c.cavity.kappa_l / c.cavity.kappa);
            let fr = cav.right_fraction.unwrap_or(c.cavity.kappa_r / c.cavity.kappa);
            c.cavity = Cavity::from_fractions(kappa, fl, fr);
        }
        if let Some(s) = &self.signal {
            apply_beam(&mut c.signal, s);
        }
        if let Some(s) = &self.meter {
            apply_beam(&mut c.meter, s);
        }
        if let Some(e) = &self.env {
            set(&mut c.env.temperature, e.temperature_k);
        }
        if let Some(d) = &self.detect_signal {
            apply_detect(&mut c.detect_signal, d);
        }
        if let Some(d) = &self.detect_meter {
            apply_detect(&mut c.detect_meter, d);
        }
        c
    }

    /// A complete description of `config`, with no preset reference.
    pub fn from_config(config: &DeviceConfig) -> Self {
        let beam = |b: &Beam| BeamSection {
            detuning_hz: Some(to_hz(b.detuning)),
            photons: Some(b.photon_number),
            g_hz: Some(to_hz(b.coupling_g)),
            classical_b: Some(b.classical_noise_b),
            wavelength_m: Some(b.wavelength),
        };
        let detect = |d: &Detection| DetectSection {
            efficiency: Some(d.efficiency),
            dark_psd: Some(d.dark_current_psd),
            responsivity: Some(d.responsivity),
        };
        let m = &config.mechanics;
        let cav = &config.cavity;
        ConfigFile {
            preset: None,
            mechanics: Some(MechanicsSection {
                omega_m_hz: Some(to_hz(m.omega_m)),
                gamma_0_hz: Some(to_hz(m.gamma_0)),
                mass_kg: Some(m.mass),
                mode: Some([m.mode_indices.0, m.mode_indices.1]),
            }),
            cavity: Some(CavitySection {
                kappa_hz: Some(to_hz(cav.kappa)),
                left_fraction: Some(cav.kappa_l / cav.kappa),
                right_fraction: Some(cav.kappa_r / cav.kappa),
            }),
            signal: Some(beam(&config.signal)),
            meter: Some(beam(&config.meter)),
            env: Some(EnvSection { temperature_k: Some(config.env.temperature) }),
            detect_signal: Some(detect(&config.detect_signal)),
            detect_meter: Some(detect(&config.detect_meter)),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections serialize to TOML")
    }
}

fn preset_dir() -> Option<PathBuf> {
    std::env::var_os(PRESET_DIR_VAR).map(PathBuf::from)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

fn resolve_preset(name: &str, depth: usize) -> Result<DeviceConfig, ConfigError> {
    if let Some(c) = DeviceConfig::preset(name) {
        return Ok(c);
    }
    if depth >= MAX_PRESET_DEPTH {
        return Err(ConfigError::PresetDepth(name.to_string()));
    }
    let path = preset_dir().map(|d| d.join(format!("{name}.toml"))).filter(|p| p.is_file());
    match path {
        Some(p) => {
            let file = ConfigFile::parse(&read(&p)?, &p.display().to_string())?;
            resolve_file(&file, depth + 1)
        }
        None => Err(ConfigError::UnknownPreset(name.to_string())),
    }
}

fn resolve_file(file: &ConfigFile, depth: usize) -> Result<DeviceConfig, ConfigError> {
    let base = match &file.preset {
        Some(name) => resolve_preset(name, depth)?,
        None => DeviceConfig::device1(),
    };
    Ok(file.apply(&base))
}

/// Looks up a preset by name (built-in or from the preset directory) and validates it.
pub fn load_preset(name: &str) -> Result<DeviceConfig, ConfigError> {
    validated(resolve_preset(name, 0)?)
}

/// Parses configuration text; a missing `preset` key starts from device1.
pub fn parse_config(text: &str, origin: &str) -> Result<DeviceConfig, ConfigError> {
    validated(resolve_file(&ConfigFile::parse(text, origin)?, 0)?)
}

pub fn load_config(path: &Path) -> Result<DeviceConfig, ConfigError> {
    parse_config(&read(path)?, &path.display().to_string())
}

/// Applies a config file's overrides on top of an explicit base.
pub fn load_config_over(path: &Path, base: &DeviceConfig) -> Result<DeviceConfig, ConfigError> {
    let file = ConfigFile::parse(&read(path)?, &path.display().to_string())?;
    let base = match &file.preset {
        Some(name) => resolve_preset(name, 0)?,
        None => *base,
    };
    validated(file.apply(&base))
}

fn validated(c: DeviceConfig) -> Result<DeviceConfig, ConfigError> {
    let v = c.validate();
    if v.is_empty() {
        Ok(c)
    } else {
        Err(ConfigError::Invalid(v))
    }
}

/// Canonical TOML text of a configuration.
pub fn to_toml(config: &DeviceConfig) -> String {
    ConfigFile::from_config(config).to_toml()
}

/// 64-bit FNV-1a hash of the canonical TOML text, used to tag records.
pub fn config_hash(config: &DeviceConfig) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(to_toml(config).as_bytes());
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn dotted_keys_override_preset() {
        let c = parse_config("preset = \"device2\"\nsignal.photons = 2.5e7\nmechanics.gamma_0_hz = 0.2\n", "inline").unwrap();
        let d2 = DeviceConfig::device2();
        assert_eq!(c.signal.photon_number, 2.5e7);
        assert!(rel(c.mechanics.gamma_0, hz(0.2)) < 1e-15);
        assert_eq!(c.meter, d2.meter);
    }

    #[test]
    fn canonical_text_round_trips() {
        for name in DeviceConfig::PRESETS {
            let c = DeviceConfig::preset(name).unwrap();
            let text = to_toml(&c);
            let back = parse_config(&text, "roundtrip").unwrap();
            assert_eq!(to_toml(&back), text);
            assert!(rel(back.cavity.kappa_r, c.cavity.kappa_r) < 1e-12);
            assert!(rel(back.signal.detuning, c.signal.detuning) < 1e-12);
        }
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(matches!(parse_config("preset = \"nope\"", "x"), Err(ConfigError::UnknownPreset(_))));
        assert!(matches!(parse_config("signal.photonz = 1", "x"), Err(ConfigError::Parse { .. })));
        assert!(matches!(parse_config("mechanics.mass_kg = -1.0", "x"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = DeviceConfig::device1();
        let mut b = a;
        b.signal.photon_number *= 1.0 + 1e-9;
        assert_eq!(config_hash(&a), config_hash(&DeviceConfig::device1()));
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
