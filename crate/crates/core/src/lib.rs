//! Readout influence sketching.
//!
//! Per-token forward-pass records of a language model (candidate logits, target,
//! final hidden state) are turned into two compact interaction signatures per
//! sample: a lexical channel built from the sparse softmax residual and a
//! semantic channel built from the residual projected through the LM head. Both
//! are compressed with seeded CountSketch operators, stored in a flat index, and
//! scored exhaustively against pooled query signatures.
//!
//! Module map:
//! - [`datamodel`]: domain types, binary file formats, synthetic data generator
//! - [`sketch`]: CountSketch hash families and dense/sparse application
//! - [`residual`]: truncated softmax, adaptive support, sparse residual, GH projection
//! - [`features`]: per-sample signature aggregation
//! - [`indexer`]: index construction, query pooling, scoring and ranking
//! - [`metrics`]: auPRC / auROC, per-K top/bottom protocol, unified score
//! - [`oracle`]: dense brute-force references
//! - [`analysis`]: residual-energy diagnostics and variance benches

pub mod analysis;
pub mod datamodel;
pub mod error;
pub mod features;
pub mod indexer;
pub mod metrics;
pub mod oracle;
pub mod residual;
pub mod sketch;

pub(crate) mod hashing;

pub use datamodel::{
    ChannelWeights, InfluenceIndex, ModelReadout, RiseConfig, SampleRecord, SampleSignature, SketchSpec, TokenRecord,
    TruncationConfig,
};
pub use error::{Result, RiseError};
pub use features::{signature_dims, sketch_aggregate, FactorNorm, SignatureDims, SketchFamilies};
pub use indexer::{build_index, mean_query_signature, score_all, PooledSignature, ScoredCandidate};
pub use sketch::HashFamily;
