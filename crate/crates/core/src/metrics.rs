//! Distance metrics over state vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("metric '{metric}' does not apply to {representation} states")]
    NotApplicable {
        metric: Metric,
        representation: String,
    },
    #[error("unknown metric '{0}' (expected euclidean, sqeuclidean-half, hamming or cosine)")]
    Unknown(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "euclidean")]
    Euclidean,
    /// Squared Euclidean distance halved; equals symbol Hamming distance on
    /// one-hot encodings.
    #[serde(rename = "sqeuclidean-half")]
    SqEuclideanHalf,
    #[serde(rename = "hamming")]
    Hamming,
    #[serde(rename = "cosine")]
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Euclidean,
        Metric::SqEuclideanHalf,
        Metric::Hamming,
        Metric::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::SqEuclideanHalf => "sqeuclidean-half",
            Metric::Hamming => "hamming",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MetricError::Unknown(s.to_string()))
    }
}

fn check_len(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

pub(crate) fn squared_distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_len(a.len(), b.len())?;
    Ok(squared_distance_unchecked(a, b).sqrt())
}

pub fn squared_euclidean_half(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_len(a.len(), b.len())?;
    Ok(squared_distance_unchecked(a, b) / 2.0)
}

/// Number of positions at which two symbol sequences differ.
pub fn hamming_symbols<T: PartialEq>(a: &[T], b: &[T]) -> Result<usize, MetricError> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_len(a.len(), b.len())?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    let identical = a == b;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    if identical {
        return Ok(0.0);
    }
    let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// Distance between two real vectors under `metric`.
pub fn real_distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    match metric {
        Metric::Euclidean => euclidean(a, b),
        Metric::SqEuclideanHalf => squared_euclidean_half(a, b),
        Metric::Cosine => cosine_distance(a, b),
        Metric::Hamming => Err(MetricError::NotApplicable {
            metric,
            representation: "real".into(),
        }),
    }
}

/// Count of bits that differ between the one-hot encodings of two symbol
/// sequences, computed without expanding them. A blank symbol has no set bit.
pub fn one_hot_changed_bits(a: &[u8], b: &[u8], blank: Option<u8>) -> usize {
    let mut total = 0usize;
    for (ca, cb) in a.chunks(127).zip(b.chunks(127)) {
        let mut part = 0u8;
        match blank {
            Some(z) => {
                for (&x, &y) in ca.iter().zip(cb) {
                    let filled = u8::from(x != z) + u8::from(y != z);
                    part += if x != y { filled } else { 0 };
                }
            }
            None => {
                for (&x, &y) in ca.iter().zip(cb) {
                    part += if x != y { 2 } else { 0 };
                }
            }
        }
        total += usize::from(part);
    }
    total
}

/// Distance between two symbol sequences under `metric`, using their one-hot
/// encoding for the vector metrics.
pub fn symbol_distance(
    metric: Metric,
    a: &[u8],
    b: &[u8],
    blank: Option<u8>,
) -> Result<f64, MetricError> {
    check_len(a.len(), b.len())?;
    match metric {
        Metric::Hamming => Ok(hamming_symbols(a, b)? as f64),
        Metric::Euclidean => Ok((one_hot_changed_bits(a, b, blank) as f64).sqrt()),
        Metric::SqEuclideanHalf => Ok(one_hot_changed_bits(a, b, blank) as f64 / 2.0),
        Metric::Cosine => {
            let filled = |s: &[u8]| s.iter().filter(|&&c| Some(c) != blank).count() as f64;
            let (na, nb) = (filled(a), filled(b));
            if na == 0.0 || nb == 0.0 {
                return Err(MetricError::ZeroVector);
            }
            if a == b {
                return Ok(0.0);
            }
            let dot = a
                .iter()
                .zip(b)
                .filter(|(x, y)| x == y && Some(**x) != blank)
                .count() as f64;
            Ok(1.0 - (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
        }
    }
}
