pub mod blockmodel;
pub mod cluster;
pub mod dense;
pub mod ecv;
pub mod error;
pub mod graphon;
pub mod holdout;
pub mod linalg;
pub mod lowrank;
pub mod metrics;
pub mod netgraph;
pub mod rng;
pub mod simgen;
pub mod sparse;

pub use blockmodel::{FittedBlockModel, ModelKind};
pub use cluster::CommunityAssignment;
pub use dense::DenseMatrix;
pub use error::{EcvError, Result};
pub use holdout::HoldoutMask;
pub use lowrank::{CompletedMatrix, SvdOptions};
pub use netgraph::AdjacencyMatrix;
