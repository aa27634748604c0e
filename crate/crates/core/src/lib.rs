//! Coresets for empirical risk minimization over acyclic joins, built
//! without materializing the join.

pub mod count;
pub mod aggtree;
pub mod cli;
pub mod cube;
pub mod error;
pub mod eval;
pub mod instance;
pub mod jointree;
pub mod kcenter;
pub mod loss;
pub mod materialize;
pub mod pipeline;
pub mod report;
pub mod points;
pub mod sample;
pub mod train;
pub mod schema;
pub mod seed;
pub mod synth;
pub mod weights;

pub use count::{join_size, pc_count, Counter, JoinIndex};
pub use cube::PseudoCube;
pub use error::{Error, Result};
pub use instance::JoinInstance;
pub use jointree::{check_acyclic, JoinTree};
pub use kcenter::{directed_hausdorff, gonzalez, CenterSet};
pub use materialize::{materialize, DesignMatrix};
pub use points::Points;
pub use sample::{uniform_sample, JoinSampler};
pub use schema::{FeaturePartition, JoinSpec, Table};
