//! Binary record files and the campaign manifest.
//!
//! A record file is little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `OPTOREC\0` |
//! | 4     | format version (1) |
//! | 4     | flags (bit 0: dynamics unstable) |
//! | 8     | dt (f64, s) |
//! | 8     | samples per channel n (u64) |
//! | 8     | master seed (u64) |
//! | 8     | record index (u64) |
//! | 8     | FNV-1a hash of the canonical config text (u64) |
//! | 4     | channel count c (u32) |
//! | 4     | reserved, zero |
//! | 8·n·c | channels, each n f64 values: signal current, meter current, displacement |

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 8] = *b"OPTOREC\0";
pub const VERSION: u32 = 1;
pub const FLAG_UNSTABLE: u32 = 1;
const HEADER_LEN: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}: not a record file (bad magic)")]
    BadMagic(PathBuf),
    #[error("{path}: unsupported format version {version}")]
    Version { path: PathBuf, version: u32 },
    #[error("{path}: truncated ({got} bytes, expected {expected})")]
    Truncated { path: PathBuf, got: usize, expected: usize },
    #[error("{path}: cannot parse manifest: {source}")]
    Manifest { path: PathBuf, source: Box<toml::de::Error> },
}

/// Identifying fields stored ahead of the samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordHeader {
    pub dt: f64,
    pub samples: u64,
    pub master_seed: u64,
    pub index: u64,
    pub config_hash: u64,
    pub flags: u32,
}

/// One stored record: the two photocurrents and the displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredRecord {
    pub header: RecordHeader,
    pub i_signal: Vec<f64>,
    pub i_meter: Vec<f64>,
    pub displacement: Vec<f64>,
}

impl StoredRecord {
    pub fn encode(&self) -> Vec<u8> {
        let h = &self.header;
        let n = h.samples as usize;
        let mut out = Vec::with_capacity(HEADER_LEN + 24 * n);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&h.flags.to_le_bytes());
        out.extend_from_slice(&h.dt.to_le_bytes());
        out.extend_from_slice(&h.samples.to_le_bytes());
        out.extend_from_slice(&h.master_seed.to_le_bytes());
        out.extend_from_slice(&h.index.to_le_bytes());
        out.extend_from_slice(&h.config_hash.to_le_bytes());
        out.extend_from_slice(&3u32.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for ch in [&self.i_signal, &self.i_meter, &self.displacement] {
            for v in ch.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self, RecordError> {
        let truncated = |expected| RecordError::Truncated { path: path.to_path_buf(), got: bytes.len(), expected };
        if bytes.len() < HEADER_LEN {
            return Err(truncated(HEADER_LEN));
        }
        if bytes[..8] != MAGIC {
            return Err(RecordError::BadMagic(path.to_path_buf()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(RecordError::Version { path: path.to_path_buf(), version });
        }
        let header = RecordHeader {
            flags: u32_at(12),
            dt: f64::from_bits(u64_at(16)),
            samples: u64_at(24),
            master_seed: u64_at(32),
            index: u64_at(40),
            config_hash: u64_at(48),
        };
        let channels = u32_at(56) as usize;
        let n = header.samples as usize;
        let expected = HEADER_LEN + 8 * n * channels;
        if bytes.len() != expected || channels != 3 {
            return Err(truncated(expected));
        }
        let channel = |c: usize| -> Vec<f64> {
            let start = HEADER_LEN + 8 * n * c;
            bytes[start..start + 8 * n].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()
        };
        Ok(Self { header, i_signal: channel(0), i_meter: channel(1), displacement: channel(2) })
    }

    pub fn write(&self, path: &Path) -> Result<(), RecordError> {
        let io = |source| RecordError::Io { path: path.to_path_buf(), source };
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(&self.encode()).map_err(io)?;
        f.sync_all().map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, RecordError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| RecordError::Io { path: path.to_path_buf(), source })?;
        Self::decode(&bytes, path)
    }

    /// FNV-1a hash of the encoded file, listed in the manifest.
    pub fn content_hash(&self) -> u64 {
        use std::hash::Hasher;
        let mut h = fnv::FnvHasher::default();
        h.write(&self.encode());
        h.finish()
    }
}

/// Campaign description and per-record index, stored as `manifest.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub records: u64,
    pub samples: u64,
    pub dt: f64,
    pub integrator: String,
    pub window: String,
    pub config_hash: String,
    /// Canonical configuration text.
    pub config: String,
    /// Piezo drive level (one-sided force PSD on P, 1/s).
    pub piezo: f64,
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: u64,
    /// Record file name relative to the manifest, when records are kept.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// FNV-1a hash of the record content, hex.
    pub hash: String,
    pub unstable: bool,
    pub mean_signal: f64,
    pub mean_meter: f64,
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes to TOML")
    }

    pub fn read(path: &Path) -> Result<Self, RecordError> {
        let text = std::fs::read_to_string(path).map_err(|source| RecordError::Io { path: path.to_path_buf(), source })?;
        toml::from_str(&text).map_err(|e| RecordError::Manifest { path: path.to_path_buf(), source: Box::new(e) })
    }

    pub fn write(&self, path: &Path) -> Result<(), RecordError> {
        std::fs::write(path, self.to_toml()).map_err(|source| RecordError::Io { path: path.to_path_buf(), source })
    }
}

/// File name of record `index` inside a campaign directory.
pub fn record_file_name(index: u64) -> String {
    format!("record_{index:06}.bin")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StoredRecord {
        StoredRecord {
            header: RecordHeader { dt: 5e-8, samples: 3, master_seed: 7, index: 2, config_hash: 0xdead_beef, flags: FLAG_UNSTABLE },
            i_signal: vec![1.0, -2.5, 3.25],
            i_meter: vec![0.0, f64::MIN_POSITIVE, 1e300],
            displacement: vec![-1e-15, 2e-15, 0.0],
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let r = sample();
        let bytes = r.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 3 * 3 * 8);
        assert_eq!(StoredRecord::decode(&bytes, Path::new("x")).unwrap(), r);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bytes = sample().encode();
        assert!(matches!(StoredRecord::decode(&bytes[..40], Path::new("x")), Err(RecordError::Truncated { .. })));
        bytes.pop();
        assert!(matches!(StoredRecord::decode(&bytes, Path::new("x")), Err(RecordError::Truncated { .. })));
        let mut bad = sample().encode();
        bad[0] = b'X';
        assert!(matches!(StoredRecord::decode(&bad, Path::new("x")), Err(RecordError::BadMagic(_))));
        let mut ver = sample().encode();
        ver[8] = 9;
        assert!(matches!(StoredRecord::decode(&ver, Path::new("x")), Err(RecordError::Version { version: 9, .. })));
    }
}
