use super::eigen::symmetric_top;
use super::{Coords, EmbedError};
use crate::distance::DistanceRows;
use crate::exec::Execution;

/// Classical scaling result.
#[derive(Clone, Debug, PartialEq)]
pub struct Mds {
    /// Row-major `n x dims`.
    pub coords: Vec<f64>,
    pub dims: usize,
    pub eigenvalues: Vec<f64>,
    pub notes: Vec<String>,
}

impl Mds {
    /// First two coordinates of every point.
    pub fn pairs(&self) -> Coords {
        self.coords
            .chunks_exact(self.dims)
            .map(|c| [c[0], c.get(1).copied().unwrap_or(0.0)])
            .collect()
    }
}

/// Torgerson scaling: double-centre the squared distances and keep the top
/// `dims` eigenpairs. Negative eigenvalues elsewhere in the spectrum are
/// ignored and reported in `notes`.
pub fn classical_mds(
    distances: &dyn DistanceRows,
    dims: usize,
    exec: Execution,
) -> Result<Mds, EmbedError> {
    let n = distances.len();
    if n < dims + 1 {
        return Err(EmbedError::Config(format!(
            "classical MDS into {dims} dimensions needs at least {} points, got {n}",
            dims + 1
        )));
    }
    let mut b = vec![0.0; n * n];
    exec.for_each_row_mut(&mut b, n, |i, row| {
        distances.fill_row(i, row);
        row.iter_mut().for_each(|d| *d = *d * *d);
    });
    let row_mean: Vec<f64> = b
        .chunks_exact(n)
        .map(|r| r.iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    exec.for_each_row_mut(&mut b, n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = -0.5 * (*v - row_mean[i] - row_mean[j] + grand);
        }
    });
    let top = symmetric_top(&b, n, dims, exec);
    let scale = top.values.first().map_or(0.0, |v| v.abs());
    let positive = top
        .values
        .iter()
        .take_while(|&&v| v > scale * 1e-12 && v > 0.0)
        .count();
    if positive < dims {
        return Err(EmbedError::Eigen {
            positive,
            needed: dims,
        });
    }
    let mut coords = vec![0.0; n * dims];
    for (k, (lambda, v)) in top.values.iter().zip(&top.vectors).enumerate() {
        let s = lambda.sqrt();
        for i in 0..n {
            coords[i * dims + k] = s * v[i];
        }
    }
    let mut notes = Vec::new();
    if let (Some(count), Some(worst)) = (top.negative, top.most_negative) {
        if count > 0 {
            notes.push(format!(
                "{count} negative eigenvalue(s) clamped to zero (most negative {worst:.3e})"
            ));
        }
    }
    Ok(Mds {
        coords,
        dims,
        eigenvalues: top.values,
        notes,
    })
}
