use super::eigen::{canonical_sign, symmetric_top};
use super::EmbedError;
use crate::exec::Execution;

/// Principal-component fit.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// Row-major `n x dims` projections.
    pub coords: Vec<f64>,
    pub dims: usize,
    /// Variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// Unit directions, `dims` rows of length `d`.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl Pca {
    pub fn explained_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    /// Projects further vectors onto the fitted components.
    pub fn transform(&self, data: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        let mut out = Vec::with_capacity(data.len() / d.max(1) * self.dims);
        for row in data.chunks_exact(d) {
            for c in &self.components {
                out.push(
                    row.iter()
                        .zip(&self.mean)
                        .zip(c)
                        .map(|((x, m), v)| (x - m) * v)
                        .sum(),
                );
            }
        }
        out
    }
}

/// Mean-centred projection of the `n x d` row-major `data` onto its top `dims`
/// principal directions. Each direction's largest-magnitude entry is positive.
pub fn pca(data: &[f64], n: usize, d: usize, dims: usize) -> Result<Pca, EmbedError> {
    assert_eq!(data.len(), n * d, "data must be n x d");
    let max = n.saturating_sub(1).min(d);
    if dims == 0 || dims > max {
        return Err(EmbedError::TooManyComponents {
            requested: dims,
            max,
        });
    }
    let mut mean = vec![0.0; d];
    for row in data.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let total_variance: f64 = data
        .chunks_exact(d)
        .map(|row| {
            row.iter()
                .zip(&mean)
                .map(|(x, m)| (x - m).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / (n - 1) as f64;
    if total_variance == 0.0 {
        return Err(EmbedError::Degenerate("all vectors are identical".into()));
    }
    let (variances, components) = if d <= n {
        covariance_route(data, n, d, dims, &mean)
    } else {
        gram_route(data, n, d, dims, &mean)
    };
    let floor = total_variance * 1e-12;
    if let Some(r) = variances.iter().position(|&v| v <= floor) {
        return Err(EmbedError::Degenerate(format!(
            "only {r} direction(s) with non-zero variance, {dims} requested"
        )));
    }
    let mut fit = Pca {
        coords: Vec::new(),
        dims,
        explained_variance: variances,
        total_variance,
        components,
        mean,
    };
    fit.coords = fit.transform(data);
    Ok(fit)
}

fn covariance_route(
    data: &[f64],
    n: usize,
    d: usize,
    dims: usize,
    mean: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    // Sum of outer products over non-zero entries only; one-hot rows are very sparse.
    let mut scatter = vec![0.0; d * d];
    let mut nz = Vec::with_capacity(d);
    for row in data.chunks_exact(d) {
        nz.clear();
        nz.extend(
            row.iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(i, _)| i),
        );
        for &i in &nz {
            let xi = row[i];
            let out = &mut scatter[i * d..(i + 1) * d];
            for &j in &nz {
                out[j] += xi * row[j];
            }
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    for i in 0..d {
        for j in 0..d {
            scatter[i * d + j] = (scatter[i * d + j] - n as f64 * mean[i] * mean[j]) * scale;
        }
    }
    let top = symmetric_top(&scatter, d, dims, Execution::default());
    (top.values, top.vectors)
}

fn gram_route(
    data: &[f64],
    n: usize,
    d: usize,
    dims: usize,
    mean: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let centred: Vec<f64> = data
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(mean).map(|(x, m)| x - m))
        .collect();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = centred[i * d..(i + 1) * d]
                .iter()
                .zip(&centred[j * d..(j + 1) * d])
                .map(|(a, b)| a * b)
                .sum();
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    let top = symmetric_top(&gram, n, dims, Execution::default());
    let scale = 1.0 / (n - 1) as f64;
    let mut variances = Vec::with_capacity(dims);
    let mut components = Vec::with_capacity(dims);
    for (lambda, u) in top.values.iter().zip(&top.vectors) {
        variances.push(lambda * scale);
        let mut v = vec![0.0; d];
        for (i, ui) in u.iter().enumerate() {
            for (vk, x) in v.iter_mut().zip(&centred[i * d..(i + 1) * d]) {
                *vk += ui * x;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        components.push(canonical_sign(v));
    }
    (variances, components)
}
