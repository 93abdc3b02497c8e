//! Memory-based neighbourhood embedding.
//!
//! Instances are embedded by growing a K-ary neighbourhood tree over an
//! episodic feature memory and folding it bottom-up with supervised
//! attention. The crate covers the memory, tree construction, aggregation
//! with hand-written gradients, training, and retrieval / few-shot evaluation.

pub mod asa;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod evalmetrics;
pub mod interface;
pub mod losses;
pub mod memory;
pub mod numeric;
pub mod trainer;
pub mod treegraph;

pub use dataset::{Dataset, Episode, EpisodeShape};
pub use embed::{batch_embed, neighbourhood_embed, AggregationMode};
pub use error::{MneError, Result};
pub use evalmetrics::{
    average_precision, evaluate_fewshot, evaluate_retrieval, EmbedConfig, FewShotReport,
};
pub use memory::{ClassId, EpisodicMemory, LabelSource, MemoryId};
pub use trainer::{Checkpoint, ModelParams, TrainConfig};
pub use treegraph::NeighbourhoodTree;
