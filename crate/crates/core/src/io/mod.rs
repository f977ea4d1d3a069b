//! Point-cloud file formats: PLY and PCD, ASCII and binary little-endian.
//!
//! Coordinates are stored as 32-bit floats and labels as 32-bit unsigned
//! integers. The class table travels in header comments as
//! `class <id> <name> <static|movable>` lines.

mod pcd;
mod ply;
mod scalar;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cloud::{ClassId, ClassTable, SemanticPointCloud};
use crate::geom::Point3;

pub use pcd::{parse_pcd, to_pcd_bytes};
pub use ply::{parse_ply, to_ply_bytes};

/// Comment written into every cloud header; the scanner exports carry no
/// frame information so this is the assumed convention.
pub const FRAME_COMMENT: &str = "frame right-handed z-up meters";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Pcd,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(Self::Ply),
            "pcd" => Some(Self::Pcd),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    #[default]
    Binary,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed header at byte {offset}: {msg}")]
    MalformedHeader { offset: usize, msg: String },
    #[error("malformed payload at byte {offset}: {msg}")]
    MalformedPayload { offset: usize, msg: String },
    #[error("truncated payload at byte {offset}: header declares {expected} points, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported encoding `{encoding}` at byte {offset}")]
    UnsupportedEncoding { offset: usize, encoding: String },
    #[error("cannot write an empty cloud")]
    EmptyCloud,
    #[error("cannot infer cloud format from {0}")]
    UnknownFormat(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    pub(crate) fn header(offset: usize, msg: impl Into<String>) -> Self {
        Self::MalformedHeader {
            offset,
            msg: msg.into(),
        }
    }

    pub(crate) fn payload(offset: usize, msg: impl Into<String>) -> Self {
        Self::MalformedPayload {
            offset,
            msg: msg.into(),
        }
    }
}

/// Reads a cloud; `format` of `None` infers it from the file extension.
pub fn read_point_cloud(
    path: &Path,
    format: Option<CloudFormat>,
) -> Result<SemanticPointCloud, FormatError> {
    let format = match format {
        Some(f) => f,
        None => CloudFormat::from_path(path).ok_or_else(|| FormatError::UnknownFormat(path.into()))?,
    };
    let bytes = fs::read(path).map_err(|source| FormatError::Io {
        path: path.into(),
        source,
    })?;
    let raw = match format {
        CloudFormat::Ply => parse_ply(&bytes)?,
        CloudFormat::Pcd => parse_pcd(&bytes)?,
    };
    Ok(raw.into_cloud())
}

pub fn write_point_cloud(
    cloud: &SemanticPointCloud,
    path: &Path,
    format: CloudFormat,
    encoding: Encoding,
) -> Result<(), FormatError> {
    if cloud.is_empty() {
        return Err(FormatError::EmptyCloud);
    }
    let bytes = match format {
        CloudFormat::Ply => to_ply_bytes(cloud, encoding),
        CloudFormat::Pcd => to_pcd_bytes(cloud, encoding),
    };
    crate::util::write_atomic(path, &bytes).map_err(|source| FormatError::Io {
        path: path.into(),
        source,
    })
}

/// Parsed file content before labels are resolved against a class table.
#[derive(Clone, Debug, Default)]
pub struct RawCloud {
    pub points: Vec<Point3>,
    /// Raw label values; `None` when the file has no label field.
    pub labels: Option<Vec<u32>>,
    pub materials: Option<Vec<u32>>,
    /// Class table from header comments, if any.
    pub classes: Option<ClassTable>,
}

impl RawCloud {
    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    /// Resolves labels; missing labels become `unknown`, and IDs absent from
    /// the table are registered as `class_<id>`.
    pub fn into_cloud(self) -> SemanticPointCloud {
        let mut classes = self.classes.unwrap_or_default();
        let labels: Vec<ClassId> = match self.labels {
            Some(l) => l.into_iter().map(ClassId).collect(),
            None => vec![ClassId::UNKNOWN; self.points.len()],
        };
        for l in &labels {
            if !classes.contains(*l) {
                classes.register(*l, &format!("class_{}", l.0), false);
            }
        }
        SemanticPointCloud {
            points: self.points,
            labels,
            materials: self.materials,
            classes,
        }
    }
}

/// Reads just the raw values; used where labels carry non-class meaning
/// (e.g. beam indices for calibration).
pub fn read_raw(path: &Path, format: Option<CloudFormat>) -> Result<RawCloud, FormatError> {
    let format = match format {
        Some(f) => f,
        None => CloudFormat::from_path(path).ok_or_else(|| FormatError::UnknownFormat(path.into()))?,
    };
    let bytes = fs::read(path).map_err(|source| FormatError::Io {
        path: path.into(),
        source,
    })?;
    match format {
        CloudFormat::Ply => parse_ply(&bytes),
        CloudFormat::Pcd => parse_pcd(&bytes),
    }
}

/// Splits off one header line starting at `pos`; returns the trimmed line and
/// the offset just past its terminator.
pub(crate) fn next_line(bytes: &[u8], pos: usize) -> Option<(&str, usize)> {
    if pos >= bytes.len() {
        return None;
    }
    let end = bytes[pos..]
        .iter()
        .position(|&b| b == b'\n')
        .map_or(bytes.len(), |e| pos + e);
    let line = std::str::from_utf8(&bytes[pos..end]).ok()?;
    Some((line.trim_end_matches('\r'), (end + 1).min(bytes.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> SemanticPointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = SemanticPointCloud::default();
        for _ in 0..n {
            // f32-representable coordinates so the round trip is bitwise.
            let p = Point3::new(
                rng.random_range(-100.0f32..100.0) as f64,
                rng.random_range(-100.0f32..100.0) as f64,
                rng.random_range(-5.0f32..20.0) as f64,
            );
            c.push(p, ClassId(rng.random_range(0..10)));
        }
        c
    }

    #[test]
    fn roundtrip_all_formats() {
        let dir = tempfile::tempdir().unwrap();
        for (n, seed) in [(10_000, 1), (1_000, 2)] {
            let cloud = random_cloud(n, seed);
            for fmt in [CloudFormat::Ply, CloudFormat::Pcd] {
                for enc in [Encoding::Ascii, Encoding::Binary] {
                    let path = dir.path().join(format!("c_{n}_{fmt:?}_{enc:?}"));
                    write_point_cloud(&cloud, &path, fmt, enc).unwrap();
                    let back = read_point_cloud(&path, Some(fmt)).unwrap();
                    assert_eq!(back.labels, cloud.labels);
                    for (a, b) in back.points.iter().zip(&cloud.points) {
                        for k in 0..3 {
                            assert_eq!(a[k].to_bits(), b[k].to_bits());
                        }
                    }
                    assert_eq!(back.classes, cloud.classes);
                }
            }
        }
    }

    #[test]
    fn empty_cloud_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_point_cloud(
            &SemanticPointCloud::default(),
            &dir.path().join("e.ply"),
            CloudFormat::Ply,
            Encoding::Binary,
        )
        .unwrap_err();
        assert!(matches!(err, FormatError::EmptyCloud));
    }

    #[test]
    fn single_point_header_count() {
        let mut c = SemanticPointCloud::default();
        c.push(Point3::new(1.0, 2.0, 3.0), ClassId::GROUND);
        let bytes = to_ply_bytes(&c, Encoding::Binary);
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.contains("element vertex 1\n"));
        let bytes = to_pcd_bytes(&c, Encoding::Ascii);
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.contains("POINTS 1\n"));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let mut c = SemanticPointCloud::default();
        c.push(Point3::new(1.0, 2.0, 3.0), ClassId::GROUND);
        let err = write_point_cloud(
            &c,
            Path::new("/nonexistent-dir/x/y.ply"),
            CloudFormat::Ply,
            Encoding::Binary,
        )
        .unwrap_err();
        assert!(matches!(err, FormatError::Io { .. }));
    }
}
