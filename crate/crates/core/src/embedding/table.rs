use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use super::EmbeddingError;

/// Text layout of an embedding file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingFormat {
    /// `token v1 v2 ... vd` per line (GloVe).
    #[default]
    Plain,
    /// A `vocab_size dimension` header line, then plain lines (word2vec text).
    Headered,
}

impl FromStr for EmbeddingFormat {
    type Err = EmbeddingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" | "glove" => Ok(EmbeddingFormat::Plain),
            "headered" | "word2vec" => Ok(EmbeddingFormat::Headered),
            other => Err(EmbeddingError::InvalidArgument(format!("unknown embedding format {other:?}"))),
        }
    }
}

/// Immutable token → vector table. Vectors are stored as read; norms are
/// computed on first use and cached.
#[derive(Debug)]
pub struct EmbeddingTable {
    dimension: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    norms: OnceLock<Vec<f64>>,
}

impl EmbeddingTable {
    /// Builds a table from in-memory entries, enforcing the same invariants
    /// as the file loader.
    pub fn from_entries<I, S, V>(entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, V)>,
        S: Into<String>,
        V: AsRef<[f32]>,
    {
        let mut b = Builder::default();
        for (i, (tok, v)) in entries.into_iter().enumerate() {
            b.push(i + 1, tok.into(), v.as_ref())?;
        }
        b.finish()
    }

    pub fn load(path: &Path, format: EmbeddingFormat) -> Result<Self, EmbeddingError> {
        let f = File::open(path).map_err(|e| EmbeddingError::io(path, e))?;
        let mut b = Builder::default();
        let mut declared: Option<(usize, usize)> = None;
        let mut values = Vec::new();

        for (i, line) in BufReader::new(f).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| EmbeddingError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            if format == EmbeddingFormat::Headered && declared.is_none() {
                declared = Some(parse_header(&line, lineno)?);
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line has a field");
            values.clear();
            for field in fields {
                let v: f32 = field.parse().map_err(|_| EmbeddingError::Parse {
                    line: lineno,
                    message: format!("{field:?} is not a number"),
                })?;
                values.push(v);
            }
            b.push(lineno, token.to_string(), &values)?;
        }
        if format == EmbeddingFormat::Headered {
            let (vocab, dim) = declared.ok_or(EmbeddingError::Empty)?;
            if vocab != b.tokens.len() {
                return Err(EmbeddingError::HeaderMismatch {
                    what: "vocabulary size",
                    declared: vocab,
                    found: b.tokens.len(),
                });
            }
            if b.dimension.is_some_and(|d| d != dim) {
                return Err(EmbeddingError::HeaderMismatch {
                    what: "dimension",
                    declared: dim,
                    found: b.dimension.unwrap_or(0),
                });
            }
        }
        b.finish()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub(crate) fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub(crate) fn norms(&self) -> &[f64] {
        self.norms.get_or_init(|| {
            (0..self.tokens.len())
                .map(|i| super::similarity::l2_norm(self.row(i)))
                .collect()
        })
    }

    /// Vector and norm of a token usable in a cosine: present and non-zero.
    pub fn lookup(&self, token: &str) -> Result<(&[f32], f64), EmbeddingError> {
        let i = self
            .index_of(token)
            .ok_or_else(|| EmbeddingError::UnknownWord(token.to_string()))?;
        let norm = self.norms()[i];
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector(token.to_string()));
        }
        Ok((self.row(i), norm))
    }

    /// SHA-256 over tokens and vector bits, for pinning reports to a table.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dimension as u64).to_le_bytes());
        for (i, t) in self.tokens.iter().enumerate() {
            h.update(t.as_bytes());
            h.update([0]);
            for v in self.row(i) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn parse_header(line: &str, lineno: usize) -> Result<(usize, usize), EmbeddingError> {
    let bad = || EmbeddingError::Parse {
        line: lineno,
        message: format!("expected header \"vocab_size dimension\", found {line:?}"),
    };
    let mut f = line.split_whitespace();
    let vocab = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let dim = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if f.next().is_some() {
        return Err(bad());
    }
    Ok((vocab, dim))
}

#[derive(Default)]
struct Builder {
    dimension: Option<usize>,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl Builder {
    fn push(&mut self, line: usize, token: String, values: &[f32]) -> Result<(), EmbeddingError> {
        match self.dimension {
            None if values.is_empty() => {
                return Err(EmbeddingError::Parse {
                    line,
                    message: format!("token {token:?} has no vector components"),
                })
            }
            None => self.dimension = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EmbeddingError::DimensionMismatch {
                    line,
                    expected: d,
                    found: values.len(),
                })
            }
            Some(_) => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { line, token });
        }
        if self.index.contains_key(&token) {
            return Err(EmbeddingError::DuplicateToken { line, token });
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(values);
        Ok(())
    }

    fn finish(self) -> Result<EmbeddingTable, EmbeddingError> {
        let dimension = self.dimension.ok_or(EmbeddingError::Empty)?;
        Ok(EmbeddingTable {
            dimension,
            tokens: self.tokens,
            index: self.index,
            data: self.data,
            norms: OnceLock::new(),
        })
    }
}
