//! Embedding tables, cosine similarity, nearest neighbours and association
//! tests.

mod knn;
mod similarity;
mod table;
mod weat;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use knn::{nearest_neighbors, NeighborResult};
pub use similarity::{average_similarity, cosine, similarity_matrix, word_cosine, AverageSimilarity, SimilarityMatrix};
pub use table::{EmbeddingFormat, EmbeddingTable};
pub use weat::{weat_association, weat_effect_size, WeatOptions, WeatResult, WeatSets};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: non-finite component in {token:?}")]
    NonFinite { line: usize, token: String },
    #[error("header declares {what} {declared}, file has {found}")]
    HeaderMismatch {
        what: &'static str,
        declared: usize,
        found: usize,
    },
    #[error("embedding table is empty")]
    Empty,
    #[error("{0:?} is not in the embedding table")]
    UnknownWord(String),
    #[error("{0:?} has a zero vector")]
    ZeroVector(String),
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no word of set {0:?} is in the embedding table")]
    NoResolvableWords(String),
    #[error("{0}")]
    InvalidArgument(String),
}

impl EmbeddingError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Reads an embedding file.
pub fn load_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingTable, EmbeddingError> {
    EmbeddingTable::load(path, format)
}
