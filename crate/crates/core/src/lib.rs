//! LightGCN collaborative filtering trained with BPR or in-batch sampled
//! softmax, scored at inference with test-time embedding normalization
//! (`cos(e_u, e_i) * ||e_i||^(1-p)`), plus the popularity-bias analyses
//! used to study it.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod scoring;
pub mod synthetic;
pub mod training;

pub use dataset::{assign_groups, compute_popularity, load_dataset, InteractionDataset, PopularityGroups, Split};
pub use error::{Error, Result};
pub use evaluation::{evaluate, p_sweep, EvalReport};
pub use graph::NormalizedAdjacency;
pub use matrix::Matrix;
pub use model::{backward, EmbeddingModel, FinalEmbeddings};
pub use scoring::{recommend_topk, tten_score, RankedList, TtenRanker};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use training::{train, LossKind, TrainConfig, TrainReport};
