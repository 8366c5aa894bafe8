//! Two-dimensional layouts: PCA, exact t-SNE, classical MDS and Isomap.

mod eigen;
mod isomap;
mod mds;
mod pca;
mod perplexity;
mod tsne;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{DistanceError, DistanceRows, PairwiseDistances};
use crate::exec::Execution;
use crate::metrics::Metric;
use crate::model::{collapse_duplicates, Collapsed, Encoding, StateDataset};

pub use eigen::{symmetric_top, TopEigen};
pub use isomap::{geodesic_distances, isomap, isomap_from_distances, knn_graph};
pub use mds::{classical_mds, Mds};
pub use pca::{pca, Pca};
pub use perplexity::{calibrate_row, conditional_probabilities, Calibration};
pub use tsne::{gradient_check, tsne, tsne_with, GradientCheck, JointProbabilities, TsneInput};

/// Layout coordinates, one `[x, y]` per point.
pub type Coords = Vec<[f64; 2]>;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("requested {requested} components but at most {max} are available")]
    TooManyComponents { requested: usize, max: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("perplexity {perplexity} unattainable for row {row}: all its distances are equal")]
    Perplexity { row: usize, perplexity: f64 },
    #[error("non-finite gradient at iteration {0}")]
    NonFinite(usize),
    #[error("only {positive} positive eigenvalues, {needed} needed")]
    Eigen { positive: usize, needed: usize },
    #[error("neighbour graph is disconnected; component sizes {0:?}")]
    Disconnected(Vec<usize>),
    #[error("{0} is not implemented")]
    Unsupported(String),
    #[error("dataset has no state vectors")]
    NoStates,
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    #[default]
    Tsne,
    Mds,
    Isomap,
    /// Accepted in configuration files; embedding requests fail.
    Umap,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    Pca,
    Random,
}

/// Embedding method and its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub method: Method,
    /// `None` means `sqrt(N)` over the embedded points.
    pub perplexity: Option<f64>,
    pub early_exaggeration: f64,
    pub early_iterations: usize,
    pub main_exaggeration: f64,
    pub total_iterations: usize,
    pub learning_rate: f64,
    pub init: Init,
    pub seed: u64,
    /// Isomap neighbourhood size.
    pub neighbors_k: usize,
    pub output_dims: usize,
    /// The KL objective is evaluated every this many iterations (and at phase ends).
    pub objective_every: usize,
    /// Above this many distinct points, t-SNE input affinities keep only the
    /// `3 * perplexity` nearest neighbours of each point.
    pub dense_limit: usize,
    /// Distance metric used by the dataset-level entry point.
    pub metric: Metric,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            method: Method::Tsne,
            perplexity: None,
            early_exaggeration: 12.0,
            early_iterations: 250,
            main_exaggeration: 1.0,
            total_iterations: 1000,
            learning_rate: 200.0,
            init: Init::Pca,
            seed: 0,
            neighbors_k: 12,
            output_dims: 2,
            objective_every: 50,
            dense_limit: 5000,
            metric: Metric::Euclidean,
        }
    }
}

impl EmbeddingConfig {
    pub fn tsne() -> Self {
        Self::default()
    }

    pub fn with_method(method: Method) -> Self {
        EmbeddingConfig {
            method,
            ..Self::default()
        }
    }

    /// Perplexity for `n` points.
    pub fn perplexity_for(&self, n: usize) -> f64 {
        self.perplexity.unwrap_or_else(|| (n as f64).sqrt())
    }

    /// Checks the configuration against `n` points.
    pub fn validate(&self, n: usize) -> Result<(), EmbedError> {
        let bad = |m: String| Err(EmbedError::Config(m));
        if self.output_dims != 2 {
            return bad(format!("output_dims must be 2, got {}", self.output_dims));
        }
        if self.method == Method::Umap {
            return Err(EmbedError::Unsupported("umap".into()));
        }
        if self.method == Method::Tsne {
            if n < 4 {
                return bad(format!("t-SNE needs at least 4 points, got {n}"));
            }
            let p = self.perplexity_for(n);
            if !(p.is_finite() && p > 0.0 && p < n as f64) {
                return bad(format!("perplexity {p} must lie in (0, {n})"));
            }
            if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
                return bad(format!(
                    "learning rate {} must be positive",
                    self.learning_rate
                ));
            }
            if !(self.early_exaggeration >= 1.0 && self.main_exaggeration >= 1.0) {
                return bad("exaggeration factors must be at least 1".into());
            }
            if self.early_iterations > self.total_iterations {
                return bad("early_iterations exceeds total_iterations".into());
            }
            if self.objective_every == 0 {
                return bad("objective_every must be positive".into());
            }
        }
        if self.method == Method::Isomap && self.neighbors_k == 0 {
            return bad("neighbors_k must be positive".into());
        }
        Ok(())
    }
}

/// One progress report from an iterative method.
#[derive(Clone, Copy, Debug)]
pub struct Snapshot<'a> {
    /// 1-based iteration just completed.
    pub iteration: usize,
    pub total: usize,
    /// Latest evaluated objective, if any so far.
    pub objective: Option<f64>,
    pub coords: &'a [[f64; 2]],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Receives snapshots; returning [`Flow::Stop`] cancels the run.
pub trait ProgressSink {
    fn snapshot(&mut self, snapshot: &Snapshot<'_>) -> Flow;
}

/// Ignores progress.
pub struct NoProgress;

impl ProgressSink for NoProgress {
    fn snapshot(&mut self, _: &Snapshot<'_>) -> Flow {
        Flow::Continue
    }
}

impl<F: FnMut(&Snapshot<'_>) -> Flow> ProgressSink for F {
    fn snapshot(&mut self, snapshot: &Snapshot<'_>) -> Flow {
        self(snapshot)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `(iteration, KL divergence)` pairs for t-SNE.
    pub objective: Vec<(usize, f64)>,
    pub iterations: usize,
    pub cancelled: bool,
    pub notes: Vec<String>,
}

/// Layout aligned 1:1 with the input points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedDataset {
    pub coords: Coords,
    pub config: EmbeddingConfig,
    pub diagnostics: Diagnostics,
}

impl EmbeddedDataset {
    /// Length of the bounding-box diagonal.
    pub fn extent(&self) -> f64 {
        crate::geometry::bounding_diagonal(&self.coords)
    }
}

/// Forwards snapshots with coordinates expanded from distinct states to points.
struct ExpandSink<'a> {
    inner: &'a mut dyn ProgressSink,
    collapsed: &'a Collapsed,
    buffer: Coords,
}

impl ProgressSink for ExpandSink<'_> {
    fn snapshot(&mut self, snapshot: &Snapshot<'_>) -> Flow {
        self.buffer.clear();
        self.buffer.extend(
            self.collapsed
                .representative_of
                .iter()
                .map(|&r| snapshot.coords[r]),
        );
        self.inner.snapshot(&Snapshot {
            coords: &self.buffer,
            ..*snapshot
        })
    }
}

/// Embeds every point of `dataset`.
///
/// Exact duplicate states are embedded once and share coordinates. For t-SNE
/// with random initialisation each point is optimised separately instead.
pub fn embed_dataset(
    dataset: &StateDataset,
    config: &EmbeddingConfig,
    exec: Execution,
    sink: &mut dyn ProgressSink,
) -> Result<EmbeddedDataset, EmbedError> {
    if dataset.encoding() == Encoding::Absent {
        return Err(EmbedError::NoStates);
    }
    let collapsed = collapse_duplicates(dataset);
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (units, multiplicity, spread) =
        if config.method == Method::Tsne && config.init == Init::Random {
            (all, vec![1.0; dataset.len()], false)
        } else {
            let m = collapsed
                .representatives
                .iter()
                .map(|r| collapsed.multiplicity[r] as f64)
                .collect();
            (collapsed.representatives.clone(), m, true)
        };
    let dim = dataset.dimension();
    let vectors = || {
        let mut out = Vec::with_capacity(units.len() * dim);
        for &u in &units {
            let p = dataset.point(u).expect("index in range");
            dataset.encoding().encode_into(&p.state, &mut out);
        }
        out
    };
    config.validate(if config.method == Method::Tsne {
        dataset.len()
    } else {
        units.len()
    })?;
    let mut diagnostics = Diagnostics::default();
    let coords = match config.method {
        Method::Pca => {
            let fit = pca(&vectors(), units.len(), dim, 2)?;
            to_pairs(&fit.coords)
        }
        Method::Mds => {
            let d = PairwiseDistances::new(dataset, config.metric)?.select(&units);
            let m = classical_mds(&d, 2, exec)?;
            diagnostics.notes.extend(m.notes.iter().cloned());
            m.pairs()
        }
        Method::Isomap => {
            let d = PairwiseDistances::new(dataset, config.metric)?.select(&units);
            let m = isomap_from_distances(&d, config.neighbors_k, 2, exec)?;
            diagnostics.notes.extend(m.notes.iter().cloned());
            m.pairs()
        }
        Method::Tsne => {
            let d = PairwiseDistances::new(dataset, config.metric)?.select(&units);
            let init = match config.init {
                Init::Pca => Some(tsne::pca_init(&vectors(), units.len(), dim)?),
                Init::Random => None,
            };
            let input = TsneInput {
                distances: &d,
                multiplicity: Some(&multiplicity),
                init,
            };
            let result = if spread {
                let mut expanding = ExpandSink {
                    inner: sink,
                    collapsed: &collapsed,
                    buffer: Vec::new(),
                };
                tsne_with(input, config, exec, &mut expanding)?
            } else {
                tsne_with(input, config, exec, sink)?
            };
            diagnostics = result.diagnostics;
            result.coords
        }
        Method::Umap => return Err(EmbedError::Unsupported("umap".into())),
    };
    let coords = if spread {
        collapsed.expand(&coords)
    } else {
        coords
    };
    if units.len() < dataset.len() && spread {
        diagnostics.notes.push(format!(
            "{} points embedded as {} distinct states",
            dataset.len(),
            units.len()
        ));
    }
    Ok(EmbeddedDataset {
        coords,
        config: config.clone(),
        diagnostics,
    })
}

/// Embeds directly from a distance source (no state vectors available).
pub fn embed_distances(
    distances: &dyn DistanceRows,
    config: &EmbeddingConfig,
    exec: Execution,
    sink: &mut dyn ProgressSink,
) -> Result<EmbeddedDataset, EmbedError> {
    config.validate(distances.len())?;
    let (coords, diagnostics) = match config.method {
        Method::Tsne => {
            let r = tsne(distances, config, exec, sink)?;
            (r.coords, r.diagnostics)
        }
        Method::Mds => {
            let m = classical_mds(distances, 2, exec)?;
            (
                m.pairs(),
                Diagnostics {
                    notes: m.notes,
                    ..Default::default()
                },
            )
        }
        Method::Isomap => {
            let m = isomap_from_distances(distances, config.neighbors_k, 2, exec)?;
            (
                m.pairs(),
                Diagnostics {
                    notes: m.notes,
                    ..Default::default()
                },
            )
        }
        Method::Pca => {
            return Err(EmbedError::Config(
                "PCA needs state vectors, not distances".into(),
            ))
        }
        Method::Umap => return Err(EmbedError::Unsupported("umap".into())),
    };
    Ok(EmbeddedDataset {
        coords,
        config: config.clone(),
        diagnostics,
    })
}

pub(crate) fn to_pairs(flat: &[f64]) -> Coords {
    flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}
