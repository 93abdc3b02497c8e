//! `MNE1` embedding files.
//!
//! ```text
//! "MNE1"      4 bytes
//! count N     u32
//! dim D       u32
//! has_labels  u8 (0 or 1)
//! N records   D × f32, then i32 label if has_labels
//! ```
//!
//! Little-endian throughout. The file length is exactly `13 + N·(4D + 4·has_labels)`.

use std::fs;
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{MneError, Result};
use crate::memory::ClassId;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"MNE1";
const HEADER_LEN: usize = 13;

/// Contents of an embedding file, widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<ClassId>>,
}

impl EmbeddingFile {
    pub fn new(dim: usize, features: Vec<Vec<f64>>, labels: Option<Vec<ClassId>>) -> Result<Self> {
        if let Some(i) = features.iter().position(|f| f.len() != dim) {
            return Err(MneError::shape(format!(
                "record {i} has length {}, expected {dim}",
                features[i].len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != features.len() {
                return Err(MneError::shape(format!(
                    "{} records but {} labels",
                    features.len(),
                    l.len()
                )));
            }
        }
        Ok(EmbeddingFile {
            dim,
            features,
            labels,
        })
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        EmbeddingFile {
            dim: d.dim(),
            features: d.features.clone(),
            labels: Some(d.labels.clone()),
        }
    }

    /// Fails when the file carries no labels.
    pub fn into_dataset(self) -> Result<Dataset> {
        let labels = self
            .labels
            .ok_or_else(|| MneError::Lookup("embedding file has no labels".into()))?;
        Dataset::new(self.features, labels)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Serializes at single precision. Values that are not finite `f32`s
    /// after narrowing are rejected.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n =
            u32::try_from(self.features.len()).map_err(|_| MneError::shape("too many records"))?;
        let d = u32::try_from(self.dim).map_err(|_| MneError::shape("dimension too large"))?;
        let has_labels = self.labels.is_some();
        let mut out =
            Vec::with_capacity(HEADER_LEN + self.len() * (4 * self.dim + 4 * has_labels as usize));
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
        out.push(has_labels as u8);
        for (i, f) in self.features.iter().enumerate() {
            if f.len() != self.dim {
                return Err(MneError::shape(format!(
                    "record {i} has length {}",
                    f.len()
                )));
            }
            for &v in f {
                let x = v as f32;
                if !x.is_finite() {
                    return Err(MneError::Numeric(format!(
                        "record {i} has non-finite value {v}"
                    )));
                }
                out.extend_from_slice(&x.to_le_bytes());
            }
            if let Some(labels) = &self.labels {
                let y = i32::try_from(labels[i]).map_err(|_| {
                    MneError::Numeric(format!("label {} does not fit in i32", labels[i]))
                })?;
                out.extend_from_slice(&y.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != EMBEDDING_MAGIC {
            return Err(MneError::format(0, "bad magic, expected \"MNE1\""));
        }
        if bytes.len() < HEADER_LEN {
            return Err(MneError::format(bytes.len() as u64, "truncated header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let n = u32_at(4) as usize;
        let dim = u32_at(8) as usize;
        let has_labels = match bytes[12] {
            0 => false,
            1 => true,
            b => {
                return Err(MneError::format(
                    12,
                    format!("label flag must be 0 or 1, got {b}"),
                ))
            }
        };
        let record = 4 * dim + 4 * has_labels as usize;
        let expected = (n as u128) * (record as u128) + HEADER_LEN as u128;
        if (bytes.len() as u128) < expected {
            let whole = (bytes.len() - HEADER_LEN) / record.max(1);
            let offset = HEADER_LEN + whole * record;
            return Err(MneError::format(
                offset as u64,
                format!(
                    "truncated: expected {expected} bytes, found {}",
                    bytes.len()
                ),
            ));
        }
        if bytes.len() as u128 > expected {
            return Err(MneError::format(
                expected as u64,
                format!("{} trailing bytes", bytes.len() as u128 - expected),
            ));
        }

        let mut features = Vec::with_capacity(n);
        let mut labels = has_labels.then(|| Vec::with_capacity(n));
        let mut pos = HEADER_LEN;
        for _ in 0..n {
            let mut f = Vec::with_capacity(dim);
            for _ in 0..dim {
                let x = f32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes"));
                if !x.is_finite() {
                    return Err(MneError::format(pos as u64, "non-finite float"));
                }
                f.push(x as f64);
                pos += 4;
            }
            features.push(f);
            if let Some(l) = labels.as_mut() {
                let y = i32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes"));
                if y < 0 {
                    return Err(MneError::format(pos as u64, format!("negative label {y}")));
                }
                l.push(y as ClassId);
                pos += 4;
            }
        }
        Ok(EmbeddingFile {
            dim,
            features,
            labels,
        })
    }
}

pub fn write_embeddings(path: impl AsRef<Path>, file: &EmbeddingFile) -> Result<()> {
    fs::write(path, file.to_bytes()?)?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    EmbeddingFile::from_bytes(&fs::read(path)?)
}

/// Reads a labeled file as a dataset.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_embeddings(path)?.into_dataset()
}
