//! Saliency map type, interchange formats and max-scaling.
//!
//! Binary layout (`.salm`, little-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "SALM"
//! 4       2         version (u16, currently 1)
//! 6       4         width  (u32)
//! 10      4         height (u32)
//! 14      4·w·h     values, row-major f32
//! 14+4wh  4         CRC-32 of all preceding bytes
//! ```
//!
//! Identity fields live in a JSON sidecar `<file>.meta.json`. A CSV fallback
//! (`.csv`, one raster row per line) is accepted for hand-written fixtures and
//! uses the same sidecar.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mosaic::MosaicManifest;

pub const MAGIC: &[u8; 4] = b"SALM";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 14;
/// Method registry file inside a saliency directory.
pub const METHODS_FILE: &str = "methods.json";

#[derive(Debug, Error)]
pub enum SaliencyError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("non-finite value at row {row}, col {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("negative value at row {row}, col {col} in a positive-only map")]
    NegativeValue { row: usize, col: usize },
    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("sidecar {path}: {source}")]
    Sidecar {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("method registry: {0}")]
    Registry(String),
}

pub type Result<T, E = SaliencyError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SaliencyError + '_ {
    move |source| SaliencyError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Whether a method can emit negative attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignCapability {
    Signed,
    PositiveOnly,
}

impl fmt::Display for SignCapability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignCapability::Signed => "signed",
            SignCapability::PositiveOnly => "positive_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDescriptor {
    pub method_id: String,
    pub sign_capability: SignCapability,
    pub display_name: String,
}

/// Reads `methods.json` from a saliency directory.
pub fn read_registry(dir: &Path) -> Result<Vec<MethodDescriptor>> {
    let path = dir.join(METHODS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let methods: Vec<MethodDescriptor> =
        serde_json::from_str(&text).map_err(|source| SaliencyError::Sidecar { path, source })?;
    let mut seen = HashSet::new();
    for m in &methods {
        if !seen.insert(m.method_id.as_str()) {
            return Err(SaliencyError::Registry(format!("duplicate method_id `{}`", m.method_id)));
        }
    }
    Ok(methods)
}

pub fn write_registry(dir: &Path, methods: &[MethodDescriptor]) -> Result<()> {
    let path = dir.join(METHODS_FILE);
    let mut text = serde_json::to_string_pretty(methods).expect("registry serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// Canonical location of a method's map for a mosaic.
pub fn map_path(dir: &Path, method_id: &str, mosaic_id: &str) -> PathBuf {
    dir.join(method_id).join(format!("{mosaic_id}.salm"))
}

/// Finds the map file for `(method, mosaic)`, preferring `.salm` over `.csv`.
pub fn locate_map(dir: &Path, method_id: &str, mosaic_id: &str) -> Option<PathBuf> {
    let salm = map_path(dir, method_id, mosaic_id);
    if salm.is_file() {
        return Some(salm);
    }
    let csv = dir.join(method_id).join(format!("{mosaic_id}.csv"));
    csv.is_file().then_some(csv)
}

/// Sidecar path for a map file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SaliencyMeta {
    mosaic_id: String,
    method_id: String,
    target_class: String,
    sign_capability: SignCapability,
}

/// Dense signed attribution over a mosaic raster.
///
/// Values are held as `f64` so that scaling and normalisation stay exact to
/// double precision; the interchange formats store `f32`, and every map read
/// from disk holds exactly representable `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub mosaic_id: String,
    pub method_id: String,
    pub target_class: String,
    pub sign_capability: SignCapability,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    /// Builds a map from row-major values, checking finiteness and sign.
    pub fn new(
        mosaic_id: impl Into<String>,
        method_id: impl Into<String>,
        target_class: impl Into<String>,
        sign_capability: SignCapability,
        width: usize,
        height: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(SaliencyError::DimensionMismatch {
                expected: format!("{width}x{height} = {} values", width * height),
                found: format!("{} values", values.len()),
            });
        }
        let map = SaliencyMap {
            mosaic_id: mosaic_id.into(),
            method_id: method_id.into(),
            target_class: target_class.into(),
            sign_capability,
            width,
            height,
            values,
        };
        map.check_values()?;
        Ok(map)
    }

    fn check_values(&self) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            let (row, col) = (i / self.width.max(1), i % self.width.max(1));
            if !v.is_finite() {
                return Err(SaliencyError::NonFiniteValue { row, col });
            }
            if self.sign_capability == SignCapability::PositiveOnly && *v < 0.0 {
                return Err(SaliencyError::NegativeValue { row, col });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Row slice `row` of the raster.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    /// Copy with every value multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> SaliencyMap {
        assert!(factor > 0.0 && factor.is_finite(), "scale factor must be positive");
        SaliencyMap {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Largest absolute value in the map.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Divides every value by the largest magnitude, mapping the map into
    /// `[-1, 1]`. Zeros and signs are preserved; an all-zero map is returned
    /// unchanged.
    pub fn normalize_max_scale(&self) -> SaliencyMap {
        let max = self.max_abs();
        if max == 0.0 {
            return self.clone();
        }
        SaliencyMap {
            values: self.values.iter().map(|v| v / max).collect(),
            ..self.clone()
        }
    }

    fn meta(&self) -> SaliencyMeta {
        SaliencyMeta {
            mosaic_id: self.mosaic_id.clone(),
            method_id: self.method_id.clone(),
            target_class: self.target_class.clone(),
            sign_capability: self.sign_capability,
        }
    }

    fn f32_values(&self) -> Result<Vec<f32>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let narrowed = v as f32;
                if narrowed.is_finite() {
                    Ok(narrowed)
                } else {
                    Err(SaliencyError::NonFiniteValue {
                        row: i / self.width,
                        col: i % self.width,
                    })
                }
            })
            .collect()
    }

    /// Encodes the value grid in the binary layout.
    pub fn to_salm_bytes(&self) -> Result<Vec<u8>> {
        let width = u32::try_from(self.width).map_err(|_| SaliencyError::MalformedHeader("width overflows u32".into()))?;
        let height =
            u32::try_from(self.height).map_err(|_| SaliencyError::MalformedHeader("height overflows u32".into()))?;
        let values = self.f32_values()?;
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * values.len() + 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&width.to_le_bytes());
        buf.extend_from_slice(&height.to_le_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    fn to_csv_string(&self) -> Result<String> {
        let values = self.f32_values()?;
        let mut out = String::with_capacity(values.len() * 4);
        for row in values.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Decodes the binary layout into `(width, height, values)`.
pub fn decode_salm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(SaliencyError::MalformedHeader(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(SaliencyError::MalformedHeader("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(SaliencyError::MalformedHeader(format!("unsupported version {version}")));
    }
    let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let width = read_u32(6) as usize;
    let height = read_u32(10) as usize;
    let expected_len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN + 4));
    if expected_len != Some(bytes.len()) {
        return Err(SaliencyError::DimensionMismatch {
            expected: format!("{width}x{height} payload"),
            found: format!("{} bytes", bytes.len()),
        });
    }
    let body_end = bytes.len() - 4;
    let stored = read_u32(body_end);
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(SaliencyError::ChecksumMismatch { stored, computed });
    }
    let values = bytes[HEADER_LEN..body_end]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Ok((width, height, values))
}

fn decode_csv(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f32>()
                    .map(f64::from)
                    .map_err(|e| SaliencyError::MalformedCsv {
                        line: i + 1,
                        reason: format!("`{}`: {e}", cell.trim()),
                    })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(SaliencyError::MalformedCsv {
                    line: i + 1,
                    reason: format!("expected {w} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        values.extend(row);
        height += 1;
    }
    Ok((width.unwrap_or(0), height, values))
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes a map and its sidecar. `.csv` paths use the text fallback.
pub fn write_saliency(map: &SaliencyMap, path: &Path) -> Result<()> {
    let payload = if is_csv(path) {
        map.to_csv_string()?.into_bytes()
    } else {
        map.to_salm_bytes()?
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    fs::write(path, payload).map_err(io_err(path))?;
    let sidecar = sidecar_path(path);
    let mut meta = serde_json::to_string_pretty(&map.meta()).expect("meta serializes");
    meta.push('\n');
    fs::write(&sidecar, meta).map_err(io_err(&sidecar))
}

/// Reads a map and its sidecar, validating the checksum and every value.
pub fn read_saliency(path: &Path) -> Result<SaliencyMap> {
    let sidecar = sidecar_path(path);
    let meta_text = fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
    let meta: SaliencyMeta =
        serde_json::from_str(&meta_text).map_err(|source| SaliencyError::Sidecar { path: sidecar, source })?;
    let (width, height, values) = if is_csv(path) {
        decode_csv(&fs::read_to_string(path).map_err(io_err(path))?)?
    } else {
        decode_salm(&fs::read(path).map_err(io_err(path))?)?
    };
    SaliencyMap::new(
        meta.mosaic_id,
        meta.method_id,
        meta.target_class,
        meta.sign_capability,
        width,
        height,
        values,
    )
}

/// One problem found while validating a saliency directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub path: PathBuf,
    pub message: String,
}

/// Checks every map file under `dir` against the registry and the manifest:
/// readability, checksum, finiteness, dimensions and id cross-references.
pub fn validate_saliency_dir(dir: &Path, manifest: &MosaicManifest) -> Vec<Finding> {
    let mut findings = Vec::new();
    let registry = match read_registry(dir) {
        Ok(r) => r,
        Err(e) => {
            findings.push(Finding {
                path: dir.join(METHODS_FILE),
                message: e.to_string(),
            });
            return findings;
        }
    };
    let side = manifest.mosaic_pixels as usize;
    for method in &registry {
        let method_dir = dir.join(&method.method_id);
        let entries = match fs::read_dir(&method_dir) {
            Ok(entries) => entries,
            Err(e) => {
                findings.push(Finding {
                    path: method_dir,
                    message: format!("cannot list method directory: {e}"),
                });
                continue;
            }
        };
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| e == "salm" || e.eq_ignore_ascii_case("csv"))
            })
            .collect();
        files.sort();
        for path in files {
            let mut report = |message: String| {
                findings.push(Finding {
                    path: path.clone(),
                    message,
                })
            };
            let map = match read_saliency(&path) {
                Ok(map) => map,
                Err(e) => {
                    report(e.to_string());
                    continue;
                }
            };
            if map.method_id != method.method_id {
                report(format!(
                    "method_id `{}` does not match directory `{}`",
                    map.method_id, method.method_id
                ));
            }
            if map.sign_capability != method.sign_capability {
                report(format!(
                    "sign capability {} differs from registry ({})",
                    map.sign_capability, method.sign_capability
                ));
            }
            match manifest.get(&map.mosaic_id) {
                None => report(format!("unknown mosaic_id `{}`", map.mosaic_id)),
                Some(spec) if spec.target_class != map.target_class => report(format!(
                    "target_class `{}` differs from manifest (`{}`)",
                    map.target_class, spec.target_class
                )),
                Some(_) => {}
            }
            if map.width() != side || map.height() != side {
                report(format!(
                    "dimensions {}x{} differ from manifest ({side}x{side})",
                    map.width(),
                    map.height()
                ));
            }
        }
    }
    findings
}
