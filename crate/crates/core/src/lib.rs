//! Measurement of gender bias against non-binary identities in text corpora,
//! word embeddings, and masked language models.

pub mod corpus;
pub mod embedding;
pub mod lexicon;
pub mod subspace;
pub mod probe;
pub mod report;
