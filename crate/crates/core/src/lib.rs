//! Adaptive visual-token reduction for multimodal LLMs.
//!
//! Tokens whose class-token attention is an upper IQR outlier are kept; each
//! kept token then absorbs its key-nearest neighbours through an
//! attention-weighted average. An optional spatially uniform sample widens
//! coverage. [`cost`] estimates what the shorter prompt saves in LLM prefill.

pub mod cli;
pub mod cost;
pub mod error;
pub mod format;
pub mod merging;
pub mod pipeline;
pub mod render;
pub mod selection;
pub mod synth;
pub mod tokens;

pub use error::{Error, FormatError, Result};
pub use merging::{token_supplement, Cluster, ClusterMode, MergeOptions, MergeResult};
pub use pipeline::{
    corpus_stats, reduce, reduce_corpus, run_prumerge, run_prumerge_plus, ClusterSize,
    CorpusSummary, ImageStats, Mode, PipelineConfig, ReducedTokenSet, SupplementRatio,
};
pub use selection::{FenceSides, Fences, SelectionMethod, SelectionResult};
pub use tokens::{
    class_attention, key_similarity, scaled_softmax, AttentionVector, SimilarityMatrix, TokenSet,
};
