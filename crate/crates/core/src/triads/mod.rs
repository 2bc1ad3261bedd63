//! Triad mining from identity-labelled embeddings and the similarity-observer audit.

pub mod audit;
pub mod builder;
pub mod embedding;
pub mod similarity;

pub use audit::{simulate_algorithm_subject, AlgorithmAudit, TriadChoice};
pub use builder::{build_triads, index_triads, read_triads, write_triads, Triad, TriadConstraints};
pub use embedding::{read_embeddings, validate_corpus, write_embeddings_csv, EmbeddingRecord};
pub use similarity::{build_similarity, SimilarityMatrix, SimilarityMetric};
