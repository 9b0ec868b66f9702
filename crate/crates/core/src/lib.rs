//! Link prediction with anchor-distance node features, edge-aware
//! neighbor-sampled message passing and a Hadamard-MLP pair scorer.
//!
//! The pipeline:
//!
//! 1. [`graph`]: build an immutable CSR [`Graph`] from an edge list and load
//!    the train/valid/test [`EdgeSplit`].
//! 2. [`distance`]: pick `k` target nodes and encode every node by its hop
//!    distances to them.
//! 3. [`model`]: stacked message-passing layers produce node embeddings;
//!    an MLP over `h_u ⊙ h_v` scores pairs.
//! 4. [`train`]: negative-sampled BCE training with Adam and Hits@K
//!    evaluation.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix the
//! working precision.

pub mod dd;
pub mod diagnostics;
pub mod distance;
pub mod error;
pub mod graph;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod train;

pub use dd::DoubleDouble;
pub use distance::{encode_features, select_targets, FeatureMatrix, TargetKind, TargetStrategy};
pub use error::{ErrorKind, GdnnError, Result};
pub use graph::{load_edge_list, load_split, EdgeListFormat, EdgeSplit, Graph, NodeId};
pub use model::{EdgeMode, GdnnConfig, GdnnModel, UpdateRule};
pub use nn::{AdamConfig, AdamState, Matrix, ParamStore};
pub use scalar::Scalar;
pub use train::{hits_at_k, MetricsRecord, TrainConfig};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type ParamStore64 = ParamStore<f64>;
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type Model64 = GdnnModel<f64>;
pub type Model32 = GdnnModel<f32>;
