//! Pairwise distances over the points of a dataset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::metrics::{self, Metric, MetricError};
use crate::model::{Encoding, State, StateDataset};

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("point {index}: {source}")]
    AtPoint { index: usize, source: MetricError },
    #[error("distance matrix: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("distance matrix entry ({i}, {j}) = {value} is not a finite non-negative number")]
    InvalidEntry { i: usize, j: usize, value: f64 },
    #[error("distance matrix is not symmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },
    #[error("distance matrix has non-zero diagonal at {0}")]
    Diagonal(usize),
}

/// Source of distance rows. Implemented by full matrices and by lazy,
/// metric-backed views so large inputs never need the whole matrix in memory.
pub trait DistanceRows: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes distances from point `i` to every point into `out` (`out.len() == len()`).
    fn fill_row(&self, i: usize, out: &mut [f64]);
}

/// Symmetric `n x n` matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates a row-major matrix.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self, DistanceError> {
        if entries.len() != n * n {
            return Err(DistanceError::Shape {
                expected: n * n,
                got: entries.len(),
            });
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(DistanceError::Diagonal(i));
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(DistanceError::InvalidEntry { i, j, value: v });
                }
                if v != entries[j * n + i] {
                    return Err(DistanceError::Asymmetric { i, j });
                }
            }
        }
        Ok(DistanceMatrix { n, entries })
    }

    /// Euclidean distances between the rows of a row-major `n x dim` matrix.
    pub fn euclidean_from_points(points: &[f64], dim: usize) -> Self {
        let view = PairwiseDistances::from_real(Metric::Euclidean, points.to_vec(), dim)
            .expect("euclidean applies to real vectors");
        Self::materialize(&view, Execution::default())
    }

    /// Evaluates every row of `rows`.
    pub fn materialize(rows: &dyn DistanceRows, exec: Execution) -> Self {
        let n = rows.len();
        let mut entries = vec![0.0; n * n];
        if n > 0 {
            exec.for_each_row_mut(&mut entries, n, |i, row| rows.fill_row(i, row));
        }
        DistanceMatrix { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Restricts the matrix to the listed points, in the given order.
    pub fn subset(&self, indices: &[usize]) -> DistanceMatrix {
        let m = indices.len();
        let mut entries = Vec::with_capacity(m * m);
        for &i in indices {
            entries.extend(indices.iter().map(|&j| self.get(i, j)));
        }
        DistanceMatrix { n: m, entries }
    }
}

impl DistanceRows for DistanceMatrix {
    fn len(&self) -> usize {
        self.n
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(i));
    }
}

enum Storage {
    Real {
        data: Vec<f64>,
        dim: usize,
    },
    Symbols {
        data: Vec<u8>,
        length: usize,
        blank: Option<u8>,
    },
}

/// Lazily evaluated distances between the points of a dataset.
pub struct PairwiseDistances {
    metric: Metric,
    n: usize,
    storage: Storage,
}

impl PairwiseDistances {
    /// Prepares `metric` over the dataset's states, rejecting combinations
    /// where the metric does not apply (or cosine meets a zero vector).
    pub fn new(dataset: &StateDataset, metric: Metric) -> Result<Self, DistanceError> {
        match dataset.encoding() {
            Encoding::Real { dimension } => {
                let data = dataset.encoded_matrix();
                Self::from_real(metric, data, dimension)
            }
            Encoding::OneHot { length, blank, .. } => {
                let mut data = Vec::with_capacity(dataset.len() * length);
                for p in dataset.points() {
                    if let State::Symbols(s) = &p.state {
                        data.extend_from_slice(s);
                    }
                }
                Self::from_symbols(metric, data, length, blank)
            }
            Encoding::Absent => Err(MetricError::NotApplicable {
                metric,
                representation: "coordinate-only".into(),
            }
            .into()),
        }
    }

    pub fn from_real(metric: Metric, data: Vec<f64>, dim: usize) -> Result<Self, DistanceError> {
        if metric == Metric::Hamming {
            return Err(MetricError::NotApplicable {
                metric,
                representation: "real".into(),
            }
            .into());
        }
        let n = data.len().checked_div(dim).unwrap_or(0);
        if metric == Metric::Cosine {
            for (index, row) in data.chunks(dim.max(1)).enumerate() {
                if row.iter().all(|&x| x == 0.0) {
                    return Err(DistanceError::AtPoint {
                        index,
                        source: MetricError::ZeroVector,
                    });
                }
            }
        }
        Ok(PairwiseDistances {
            metric,
            n,
            storage: Storage::Real { data, dim },
        })
    }

    pub fn from_symbols(
        metric: Metric,
        data: Vec<u8>,
        length: usize,
        blank: Option<u8>,
    ) -> Result<Self, DistanceError> {
        let n = data.len().checked_div(length).unwrap_or(0);
        if metric == Metric::Cosine {
            for (index, row) in data.chunks(length.max(1)).enumerate() {
                if row.iter().all(|&c| Some(c) == blank) {
                    return Err(DistanceError::AtPoint {
                        index,
                        source: MetricError::ZeroVector,
                    });
                }
            }
        }
        Ok(PairwiseDistances {
            metric,
            n,
            storage: Storage::Symbols {
                data,
                length,
                blank,
            },
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Distances restricted to the listed points, renumbered `0..indices.len()`.
    pub fn select(&self, indices: &[usize]) -> PairwiseDistances {
        let storage = match &self.storage {
            Storage::Real { data, dim } => Storage::Real {
                data: indices
                    .iter()
                    .flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
                dim: *dim,
            },
            Storage::Symbols {
                data,
                length,
                blank,
            } => Storage::Symbols {
                data: indices
                    .iter()
                    .flat_map(|&i| data[i * length..(i + 1) * length].iter().copied())
                    .collect(),
                length: *length,
                blank: *blank,
            },
        };
        PairwiseDistances {
            metric: self.metric,
            n: indices.len(),
            storage,
        }
    }

    /// Distance between points `i` and `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match &self.storage {
            Storage::Real { data, dim } => {
                let (a, b) = (&data[i * dim..(i + 1) * dim], &data[j * dim..(j + 1) * dim]);
                metrics::real_distance(self.metric, a, b).expect("validated at construction")
            }
            Storage::Symbols {
                data,
                length,
                blank,
            } => {
                let (a, b) = (
                    &data[i * length..(i + 1) * length],
                    &data[j * length..(j + 1) * length],
                );
                metrics::symbol_distance(self.metric, a, b, *blank)
                    .expect("validated at construction")
            }
        }
    }
}

impl DistanceRows for PairwiseDistances {
    fn len(&self) -> usize {
        self.n
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        if let Storage::Symbols {
            data,
            length,
            blank,
        } = &self.storage
        {
            if matches!(self.metric, Metric::Euclidean | Metric::SqEuclideanHalf) && *length > 0 {
                let a = &data[i * length..(i + 1) * length];
                for (slot, b) in out.iter_mut().zip(data.chunks_exact(*length)) {
                    let bits = metrics::one_hot_changed_bits(a, b, *blank) as f64;
                    *slot = if self.metric == Metric::Euclidean {
                        bits.sqrt()
                    } else {
                        bits / 2.0
                    };
                }
                return;
            }
        }
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.get(i, j);
        }
    }
}

/// Full distance matrix of a dataset under `metric`.
pub fn distance_matrix(
    dataset: &StateDataset,
    metric: Metric,
    exec: Execution,
) -> Result<DistanceMatrix, DistanceError> {
    let view = PairwiseDistances::new(dataset, metric)?;
    Ok(DistanceMatrix::materialize(&view, exec))
}
