//! Precomputed self-supervised speech representations and their pooling.
//!
//! On disk an embedding sequence is a raw little-endian `f32` matrix
//! (row-major, `count × dim`) next to a JSON sidecar:
//!
//! ```json
//! {"dim": 1024, "count": 312, "dtype": "f32le", "source_tag": "hubert-large"}
//! ```
//!
//! The sidecar of `x.f32` is `x.f32.json`. Pooled recording embeddings are
//! written in the same format with `count = 1`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of the final-layer representations of the large SSL models.
pub const SSL_DIM: usize = 1024;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("missing sidecar header {0}")]
    MissingHeader(String),
    #[error("missing embedding data {0}")]
    MissingData(String),
    #[error("bad header {path}: {reason}")]
    BadHeader { path: String, reason: String },
    #[error("{path}: expected {expected} bytes for {count}x{dim} f32 values, found {found}")]
    SizeMismatch {
        path: String,
        expected: usize,
        found: usize,
        count: usize,
        dim: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("cannot pool an empty sequence")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingHeader {
    pub dim: usize,
    pub count: usize,
    pub dtype: String,
    pub source_tag: String,
}

/// Frame-level representation matrix, `n_frames × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    data: Vec<f32>,
    dim: usize,
    source_tag: String,
}

impl EmbeddingSequence {
    pub fn new(data: Vec<f32>, dim: usize, source_tag: impl Into<String>) -> Result<Self, EmbeddingError> {
        if dim == 0 || data.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if data.len() % dim != 0 {
            return Err(EmbeddingError::DimMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        Ok(Self {
            data,
            dim,
            source_tag: source_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Utterance- or recording-level vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
}

pub fn header_path_for(data_path: &Path) -> PathBuf {
    let mut s = data_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn load_embedding_file(
    data_path: impl AsRef<Path>,
    header_path: impl AsRef<Path>,
) -> Result<EmbeddingSequence, EmbeddingError> {
    let (data_path, header_path) = (data_path.as_ref(), header_path.as_ref());
    let shown_header = header_path.display().to_string();
    if !header_path.exists() {
        return Err(EmbeddingError::MissingHeader(shown_header));
    }
    let header_text = fs::read_to_string(header_path).map_err(|source| EmbeddingError::Io {
        path: shown_header.clone(),
        source,
    })?;
    let header: EmbeddingHeader =
        serde_json::from_str(&header_text).map_err(|e| EmbeddingError::BadHeader {
            path: shown_header.clone(),
            reason: e.to_string(),
        })?;
    if header.dtype != "f32le" {
        return Err(EmbeddingError::BadHeader {
            path: shown_header,
            reason: format!("dtype must be \"f32le\", found \"{}\"", header.dtype),
        });
    }
    if header.dim == 0 || header.count == 0 {
        return Err(EmbeddingError::BadHeader {
            path: shown_header,
            reason: "dim and count must be positive".into(),
        });
    }
    let shown_data = data_path.display().to_string();
    if !data_path.exists() {
        return Err(EmbeddingError::MissingData(shown_data));
    }
    let bytes = fs::read(data_path).map_err(|source| EmbeddingError::Io {
        path: shown_data.clone(),
        source,
    })?;
    let expected = 4 * header.count * header.dim;
    if bytes.len() != expected {
        return Err(EmbeddingError::SizeMismatch {
            path: shown_data,
            expected,
            found: bytes.len(),
            count: header.count,
            dim: header.dim,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    EmbeddingSequence::new(data, header.dim, header.source_tag)
}

pub fn write_embedding_file(
    seq: &EmbeddingSequence,
    data_path: impl AsRef<Path>,
    header_path: impl AsRef<Path>,
) -> Result<(), EmbeddingError> {
    let (data_path, header_path) = (data_path.as_ref(), header_path.as_ref());
    let bytes: Vec<u8> = seq.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(data_path, bytes).map_err(|source| EmbeddingError::Io {
        path: data_path.display().to_string(),
        source,
    })?;
    let header = EmbeddingHeader {
        dim: seq.dim,
        count: seq.n_frames(),
        dtype: "f32le".into(),
        source_tag: seq.source_tag.clone(),
    };
    let text = serde_json::to_string(&header).expect("header serializes");
    fs::write(header_path, text).map_err(|source| EmbeddingError::Io {
        path: header_path.display().to_string(),
        source,
    })
}

/// Element-wise mean over frames, accumulated in `f64`.
pub fn pool_mean(seq: &EmbeddingSequence) -> Result<Embedding, EmbeddingError> {
    let n = seq.n_frames();
    if n == 0 {
        return Err(EmbeddingError::Empty);
    }
    let mut acc = vec![0.0f64; seq.dim];
    for row in seq.rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(Embedding { vector: acc })
}

/// Unweighted mean of segment embeddings: each segment counts once.
pub fn aggregate_recording(segments: &[Embedding]) -> Result<Embedding, EmbeddingError> {
    let first = segments.first().ok_or(EmbeddingError::Empty)?;
    let dim = first.vector.len();
    let mut acc = vec![0.0f64; dim];
    for seg in segments {
        if seg.vector.len() != dim {
            return Err(EmbeddingError::DimMismatch {
                expected: dim,
                found: seg.vector.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(&seg.vector) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= segments.len() as f64);
    Ok(Embedding { vector: acc })
}

impl Embedding {
    /// Single-row sequence for writing in the on-disk format.
    pub fn to_sequence(&self, source_tag: &str) -> Result<EmbeddingSequence, EmbeddingError> {
        EmbeddingSequence::new(
            self.vector.iter().map(|&v| v as f32).collect(),
            self.vector.len(),
            source_tag,
        )
    }
}
