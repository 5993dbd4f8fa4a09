//! Selective aggregation attention.
//!
//! Queries stay at full resolution while keys and values are compressed from
//! `N` tokens to `K` cluster representatives by density-driven token
//! aggregation, turning `N × N` self-attention into `N × K` cross-attention.
//!
//! Modules:
//! - [`tensor`]: token storage and shared kernels (cosine similarity, softmax,
//!   matmul, layer norm, Frobenius error);
//! - [`dta`]: the token compressor;
//! - [`attention`]: vanilla, window and selective aggregation attention, and
//!   analytic operation counts;
//! - [`oracles`]: exact density-peak clustering, k-means, timed comparisons;
//! - [`block`]: toy global/local transformer blocks;
//! - [`format`]: binary and CSV token files;
//! - [`synth`]: seeded token and weight generators.

pub mod attention;
pub mod block;
pub mod dta;
pub mod error;
pub mod format;
pub mod oracles;
pub mod synth;
pub mod tensor;

pub use attention::{
    analytic_speedup, estimate_flops, saa_attention, saa_attention_detailed, vanilla_attention, window_attention,
    AttentionSpec, FlopEstimate, SaaOutput, Variant,
};
pub use block::{ltb_forward, satb_forward, stack_forward, Block, BlockConfig, BlockKind, BlockStack};
pub use dta::{dta_compress, ClusterResult, DensityStats, DtaConfig, SubsamplePlan};
pub use error::{Error, Result};
pub use oracles::{compare_methods, dpc_knn_exact, kmeans_baseline, CompareOptions, Method, OracleReport};
pub use tensor::{FeatureMapShape, ProjectionWeights, TokenMatrix};
