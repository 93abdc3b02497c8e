//! File formats, synthetic data and the command-line driver.

pub mod cli;
pub mod embfile;
pub mod synth;

pub use embfile::{read_dataset, read_embeddings, write_embeddings, EmbeddingFile};
pub use synth::{generate_synthetic, split_by_class, SyntheticSpec};
