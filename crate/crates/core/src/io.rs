//! The `CTCE` emission container and TSV training manifests.
//!
//! Container layout, all little-endian:
//!
//! ```text
//! "CTCE" | version u32 = 1 | T u32 | V u32 | source_len u32 | T*V f32 (row-major, natural log)
//! ```

use std::path::{Path, PathBuf};

use crate::emissions::{EmissionMatrix, ROW_TOLERANCE};
use crate::error::{Error, Result};
use crate::perceptron::TrainInstance;
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 4] = b"CTCE";
pub const VERSION: u32 = 1;
/// Magic plus four u32 fields.
pub const HEADER_LEN: usize = 4 + 16;
pub const EMISSION_EXT: &str = "ctce";

pub fn write_emissions(m: &EmissionMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(MAGIC);
    for field in [VERSION, m.frames() as u32, m.vocab_size() as u32, m.source_len() as u32] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for &v in m.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn read_emissions(bytes: &[u8]) -> Result<EmissionMatrix> {
    read_emissions_with_tolerance(bytes, ROW_TOLERANCE)
}

pub fn read_emissions_with_tolerance(bytes: &[u8], tolerance: f64) -> Result<EmissionMatrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Container(format!(
            "bad magic {:?}, expected \"CTCE\"",
            String::from_utf8_lossy(&bytes[..bytes.len().min(4)])
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Container(format!(
            "truncated header: {} bytes, need {HEADER_LEN}",
            bytes.len()
        )));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = field(0);
    if version != VERSION {
        return Err(Error::Container(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let (frames, vocab_size, source_len) = (field(1) as usize, field(2) as usize, field(3) as usize);
    let needed = frames
        .checked_mul(vocab_size)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Container(format!("dimensions {frames}x{vocab_size} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < needed {
        return Err(Error::Container(format!(
            "truncated payload: {} bytes for {frames}x{vocab_size}, need {needed}",
            payload.len()
        )));
    }
    if payload.len() > needed {
        return Err(Error::Container(format!(
            "{} trailing bytes after the payload",
            payload.len() - needed
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let m = EmissionMatrix::new(data, frames, vocab_size, source_len)?;
    m.check_normalized(tolerance)?;
    Ok(m)
}

pub fn load_emissions(path: impl AsRef<Path>) -> Result<EmissionMatrix> {
    let path = path.as_ref();
    read_emissions(&std::fs::read(path)?).map_err(|e| match e {
        Error::Io(_) => e,
        other => Error::Container(format!("{}: {other}", path.display())),
    })
}

pub fn save_emissions(path: impl AsRef<Path>, m: &EmissionMatrix) -> Result<()> {
    std::fs::write(path, write_emissions(m))?;
    Ok(())
}

/// `*.ctce` files directly inside `dir`, sorted by file name.
pub fn list_emission_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == EMISSION_EXT))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// As written, usually relative to the manifest's directory.
    pub emissions: PathBuf,
    /// Space-separated reference tokens.
    pub reference: String,
}

/// Training manifest: `emission-path<TAB>reference tokens`, one instance per line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (path, reference) = line.split_once('\t').ok_or_else(|| Error::Manifest {
                line: i + 1,
                message: "expected path<TAB>reference".into(),
            })?;
            if path.is_empty() {
                return Err(Error::Manifest {
                    line: i + 1,
                    message: "empty emission path".into(),
                });
            }
            entries.push(ManifestEntry {
                emissions: PathBuf::from(path),
                reference: reference.to_string(),
            });
        }
        Ok(Self { entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.emissions.to_string_lossy());
            out.push('\t');
            out.push_str(&e.reference);
            out.push('\n');
        }
        out
    }

    /// Loads every instance, resolving relative paths against `base`.
    pub fn load_instances(&self, base: &Path, vocab: &Vocabulary) -> Result<Vec<TrainInstance>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let wrap = |source: Error| Error::Manifest {
                    line: i + 1,
                    message: source.to_string(),
                };
                let path = if e.emissions.is_absolute() {
                    e.emissions.clone()
                } else {
                    base.join(&e.emissions)
                };
                let m = load_emissions(&path).map_err(wrap)?;
                m.validate(vocab, ROW_TOLERANCE).map_err(wrap)?;
                let reference = vocab.encode(&e.reference).map_err(wrap)?;
                Ok(TrainInstance::new(m, reference))
            })
            .collect()
    }
}

/// Reads a manifest file and its instances.
pub fn load_manifest(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<TrainInstance>> {
    let path = path.as_ref();
    let manifest = Manifest::parse(&std::fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    manifest.load_instances(base, vocab)
}
