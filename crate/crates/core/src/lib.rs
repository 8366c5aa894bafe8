//! Decision trajectories as paths through a shared state space.
//!
//! A [`StateDataset`] holds trajectories of encoded states. Distances come from
//! [`metrics`], 2-D layouts from [`embed`], and the pattern catalogue
//! (dense/sparse endpoint sets, bundles, direction, velocity, shape) from
//! [`analysis`]. [`geometry`] turns embedded trajectories into curves.

pub mod analysis;
pub mod distance;
pub mod embed;
pub mod exec;
pub mod geometry;
pub mod metrics;
pub mod model;

pub use distance::{
    distance_matrix, DistanceError, DistanceMatrix, DistanceRows, PairwiseDistances,
};
pub use embed::{
    embed_dataset, embed_distances, Diagnostics, EmbedError, EmbeddedDataset, EmbeddingConfig,
    Flow, Init, Method, ProgressSink, Snapshot,
};
pub use exec::Execution;
pub use metrics::{Metric, MetricError};
pub use model::{
    collapse_duplicates, Collapsed, DatasetError, Encoding, MetaValue, Metadata, State,
    StateDataset, StatePoint, Trajectory,
};
