use super::EmbedError;
use crate::distance::DistanceRows;
use crate::exec::Execution;

const MAX_STEPS: usize = 64;
/// Allowed deviation of the achieved perplexity from the target.
pub const PERPLEXITY_TOLERANCE: f64 = 1e-3;

/// Outcome of one row's bandwidth search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    /// Precision `1 / (2 sigma^2)` of the Gaussian kernel.
    pub beta: f64,
    /// Achieved perplexity `exp(H)`.
    pub perplexity: f64,
    /// Target lies outside the attainable range; the nearest extreme was used.
    pub clamped: bool,
}

fn kernel(sq: &[f64], counts: &[f64], beta: f64, d0: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for ((&s, &c), o) in sq.iter().zip(counts).zip(out.iter_mut()) {
        let w = (-beta * (s - d0)).exp();
        *o = w;
        sum += c * w;
        weighted += c * w * (s - d0);
    }
    let entropy = sum.ln() + beta * weighted / sum;
    out.iter_mut().for_each(|o| *o /= sum);
    entropy
}

/// Finds the Gaussian precision for one row.
///
/// `sq` holds squared distances to the candidate neighbours and `counts` how
/// many identical points each candidate stands for (all ones for plain data).
/// Returns the per-point conditional probability of each candidate.
pub fn calibrate_row(
    sq: &[f64],
    counts: &[f64],
    perplexity: f64,
    row: usize,
) -> Result<(Vec<f64>, Calibration), EmbedError> {
    let mut p = vec![0.0; sq.len()];
    let d0 = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let total: f64 = counts.iter().sum();
    if sq.iter().all(|&s| s == d0) {
        let h = kernel(sq, counts, 0.0, d0, &mut p);
        if (h.exp() - perplexity).abs() > PERPLEXITY_TOLERANCE {
            return Err(EmbedError::Perplexity { row, perplexity });
        }
        return Ok((
            p,
            Calibration {
                beta: 0.0,
                perplexity: total,
                clamped: false,
            },
        ));
    }
    let target = perplexity.ln();
    let tol = PERPLEXITY_TOLERANCE / perplexity;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    let mut h = kernel(sq, counts, beta, d0, &mut p);
    for _ in 0..MAX_STEPS {
        if (h - target).abs() < tol {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() {
                (beta + hi) / 2.0
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        h = kernel(sq, counts, beta, d0, &mut p);
    }
    let at_min: f64 = sq
        .iter()
        .zip(counts)
        .filter(|(s, _)| **s == d0)
        .map(|(_, c)| c)
        .sum();
    let clamped = perplexity < at_min || perplexity > total;
    Ok((
        p,
        Calibration {
            beta,
            perplexity: h.exp(),
            clamped,
        },
    ))
}

/// Row-major conditional probabilities `P(j|i)` with zero self-probability.
pub fn conditional_probabilities(
    distances: &dyn DistanceRows,
    perplexity: f64,
    exec: Execution,
) -> Result<(Vec<f64>, Vec<Calibration>), EmbedError> {
    let n = distances.len();
    if !(perplexity >= 1.0 && perplexity <= (n - 1) as f64) {
        return Err(EmbedError::Config(format!(
            "perplexity {perplexity} outside [1, {}]",
            n - 1
        )));
    }
    let counts = vec![1.0; n - 1];
    let rows = exec.map_range(n, |i| {
        let mut row = vec![0.0; n];
        distances.fill_row(i, &mut row);
        let sq: Vec<f64> = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, d)| d * d)
            .collect();
        calibrate_row(&sq, &counts, perplexity, i)
    });
    let mut out = vec![0.0; n * n];
    let mut cal = Vec::with_capacity(n);
    for (i, r) in rows.into_iter().enumerate() {
        let (p, c) = r?;
        let mut k = 0;
        for j in 0..n {
            if j != i {
                out[i * n + j] = p[k];
                k += 1;
            }
        }
        cal.push(c);
    }
    Ok((out, cal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::DistanceMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equidistant_points_get_uniform_probabilities() {
        let n = 4;
        let mut e = vec![1.0; n * n];
        (0..n).for_each(|i| e[i * n + i] = 0.0);
        let d = DistanceMatrix::new(n, e).unwrap();
        let (p, _) = conditional_probabilities(&d, 3.0, Execution::Sequential).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 0.0 } else { 1.0 / 3.0 };
                assert!((p[i * n + j] - expect).abs() < 1e-15);
            }
        }
        assert!(matches!(
            conditional_probabilities(&d, 2.0, Execution::Sequential),
            Err(EmbedError::Perplexity { row: 0, .. })
        ));
    }

    #[test]
    fn achieved_entropy_matches_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for row in 0..100 {
            let m = rng.random_range(20..80);
            let sq: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..50.0)).collect();
            let counts = vec![1.0; m];
            let target = rng.random_range(2.0..(m as f64 - 1.0));
            let (p, cal) = calibrate_row(&sq, &counts, target, row).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let h: f64 = -p
                .iter()
                .filter(|&&x| x > 0.0)
                .map(|x| x * x.log2())
                .sum::<f64>();
            assert!(
                (h.exp2() - target).abs() < PERPLEXITY_TOLERANCE,
                "row {row}: {} vs {target}",
                h.exp2()
            );
            assert!(!cal.clamped);
        }
    }

    #[test]
    fn weighted_row_equals_expanded_row() {
        let sq = [0.0, 1.0, 4.0];
        let counts = [2.0, 3.0, 1.0];
        let expanded = [0.0, 0.0, 1.0, 1.0, 1.0, 4.0];
        let (pw, cw) = calibrate_row(&sq, &counts, 3.5, 0).unwrap();
        let (pe, ce) = calibrate_row(&expanded, &[1.0; 6], 3.5, 0).unwrap();
        assert_eq!(cw.beta, ce.beta);
        assert!((pw[1] - pe[3]).abs() < 1e-15);
    }

    #[test]
    fn duplicates_beyond_perplexity_are_clamped() {
        let (p, cal) = calibrate_row(&[0.0, 5.0], &[30.0, 10.0], 5.0, 0).unwrap();
        assert!(cal.clamped);
        assert!((30.0 * p[0] - 1.0).abs() < 1e-9);
    }
}
