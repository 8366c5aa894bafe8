use nalgebra::{DMatrix, SymmetricEigen};

use crate::exec::Execution;

/// Above this size the full decomposition is replaced by subspace iteration.
const FULL_LIMIT: usize = 1200;

/// Largest eigenpairs of a symmetric matrix, in descending eigenvalue order.
#[derive(Clone, Debug, PartialEq)]
pub struct TopEigen {
    pub values: Vec<f64>,
    /// Unit eigenvectors; the largest-magnitude entry of each is positive.
    pub vectors: Vec<Vec<f64>>,
    /// Number of negative eigenvalues, when the whole spectrum was computed.
    pub negative: Option<usize>,
    pub most_negative: Option<f64>,
}

/// Top `k` eigenpairs of the symmetric row-major `n x n` matrix.
pub fn symmetric_top(matrix: &[f64], n: usize, k: usize, exec: Execution) -> TopEigen {
    assert_eq!(matrix.len(), n * n);
    let k = k.min(n);
    if n <= FULL_LIMIT {
        full(matrix, n, k)
    } else {
        subspace(matrix, n, k, exec)
    }
}

fn full(matrix: &[f64], n: usize, k: usize) -> TopEigen {
    let m = DMatrix::from_row_slice(n, n, matrix);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = scale * 1e-12;
    let negatives: Vec<f64> = eig
        .eigenvalues
        .iter()
        .copied()
        .filter(|&v| v < -tiny)
        .collect();
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..k]
        .iter()
        .map(|&i| canonical_sign(eig.eigenvectors.column(i).iter().copied().collect()))
        .collect();
    TopEigen {
        values,
        vectors,
        negative: Some(negatives.len()),
        most_negative: negatives.iter().copied().reduce(f64::min),
    }
}

fn subspace(matrix: &[f64], n: usize, k: usize, exec: Execution) -> TopEigen {
    // Shift by the Gershgorin radius so the largest algebraic eigenvalues dominate.
    let shift = (0..n)
        .map(|i| {
            matrix[i * n..(i + 1) * n]
                .iter()
                .map(|v| v.abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let b = (k + 6).min(n);
    let mut x = DMatrix::<f64>::from_fn(n, b, |i, j| {
        // Deterministic, well-spread start vectors.
        let h = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (j as u64 + 1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    x = x.qr().q();
    let apply = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let rows = exec.map_range(n, |i| {
            let row = &matrix[i * n..(i + 1) * n];
            (0..b)
                .map(|j| {
                    let col = x.column(j);
                    row.iter().zip(col.iter()).map(|(a, c)| a * c).sum::<f64>() + shift * col[i]
                })
                .collect::<Vec<f64>>()
        });
        DMatrix::from_fn(n, b, |i, j| rows[i][j])
    };
    let mut values = vec![0.0; b];
    let mut vectors = x.clone();
    for _ in 0..3000 {
        let y = apply(&x);
        let t = x.transpose() * &y;
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
        let new_values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let rot = DMatrix::from_fn(b, b, |i, j| eig.eigenvectors[(i, order[j])]);
        vectors = &x * &rot;
        let converged = new_values[..k]
            .iter()
            .zip(&values[..k])
            .all(|(a, o)| (a - o).abs() <= 1e-14 * a.abs().max(1.0));
        values = new_values;
        if converged {
            break;
        }
        x = (&y * &rot).qr().q();
    }
    TopEigen {
        values: values[..k].iter().map(|v| v - shift).collect(),
        vectors: (0..k)
            .map(|j| canonical_sign(vectors.column(j).iter().copied().collect()))
            .collect(),
        negative: None,
        most_negative: None,
    }
}

/// Flips `v` so that its largest-magnitude entry is positive.
pub(crate) fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> Vec<f64> {
        // Symmetric with known structure: diag(1..n) plus a small coupling.
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = (i as f64 + 1.0) * if i % 3 == 0 { -1.0 } else { 1.0 };
            if i + 1 < n {
                m[i * n + i + 1] = 0.01;
                m[(i + 1) * n + i] = 0.01;
            }
        }
        m
    }

    #[test]
    fn picks_largest_algebraic_eigenvalues() {
        let t = symmetric_top(
            &[2.0, 0.0, 0.0, 0.0, -5.0, 0.0, 0.0, 0.0, 1.0],
            3,
            2,
            Execution::Sequential,
        );
        assert_eq!(t.values, vec![2.0, 1.0]);
        assert_eq!(t.vectors[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(t.negative, Some(1));
    }

    #[test]
    fn subspace_matches_full_decomposition() {
        let n = 60;
        let m = test_matrix(n);
        let a = full(&m, n, 3);
        let b = subspace(&m, n, 3, Execution::Sequential);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        for (u, v) in a.vectors.iter().zip(&b.vectors) {
            let dot: f64 = u.iter().zip(v).map(|(p, q)| p * q).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-6);
        }
    }
}
