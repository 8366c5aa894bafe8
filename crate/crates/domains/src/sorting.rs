//! Bubble sort and quicksort runs over every permutation of `1..=n`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajspace_core::{Encoding, MetaValue, Metadata, State, StateDataset, Trajectory};

/// Largest `n` accepted by [`all_permutations`].
pub const MAX_N: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum SortingError {
    #[error("n must be in 1..={MAX_N}, got {0}")]
    OutOfRange(usize),
    #[error("not a permutation of 1..={n}: {entries:?}")]
    Invalid { n: usize, entries: Vec<u8> },
    #[error(transparent)]
    Dataset(#[from] trajspace_core::DatasetError),
}

/// A rearrangement of `1..=n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Permutation(Vec<u8>);

impl Permutation {
    pub fn new(entries: Vec<u8>) -> Result<Self, SortingError> {
        let n = entries.len();
        let mut seen = vec![false; n + 1];
        for &e in &entries {
            let e = e as usize;
            if e == 0 || e > n || std::mem::replace(&mut seen[e], true) {
                return Err(SortingError::Invalid { n, entries });
            }
        }
        Ok(Permutation(entries))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((1..=n as u8).collect())
    }

    pub fn entries(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.0.windows(2).all(|w| w[0] < w[1])
    }

    pub fn inversions(&self) -> usize {
        let mut count = 0;
        for i in 0..self.0.len() {
            for j in i + 1..self.0.len() {
                if self.0[i] > self.0[j] {
                    count += 1;
                }
            }
        }
        count
    }

    /// Zero-based symbols, one per position.
    pub fn symbols(&self) -> Vec<u8> {
        self.0.iter().map(|e| e - 1).collect()
    }
}

impl TryFrom<Vec<u8>> for Permutation {
    type Error = SortingError;
    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<u8> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// All permutations of `1..=n` in lexicographic order.
pub fn all_permutations(n: usize) -> Result<Vec<Permutation>, SortingError> {
    if n == 0 || n > MAX_N {
        return Err(SortingError::OutOfRange(n));
    }
    let mut current: Vec<u8> = (1..=n as u8).collect();
    let mut out = vec![Permutation(current.clone())];
    // Next lexicographic permutation until the sequence is descending.
    loop {
        let Some(i) = (0..n - 1).rev().find(|&i| current[i] < current[i + 1]) else {
            return Ok(out);
        };
        let j = (i + 1..n)
            .rev()
            .find(|&j| current[j] > current[i])
            .expect("successor exists");
        current.swap(i, j);
        current[i + 1..].reverse();
        out.push(Permutation(current.clone()));
    }
}

/// Concatenated one-hot blocks: block `i` has its single 1 at `p[i] - 1`.
pub fn one_hot_permutation(p: &Permutation) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n * n];
    for (i, &e) in p.entries().iter().enumerate() {
        out[i * n + e as usize - 1] = 1.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bubble,
    Quick,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bubble => "bubble",
            Algorithm::Quick => "quick",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bubble" => Some(Algorithm::Bubble),
            "quick" | "quicksort" => Some(Algorithm::Quick),
            _ => None,
        }
    }

    pub fn trace(self, p: &Permutation) -> SortTrace {
        match self {
            Algorithm::Bubble => bubble_sort_trace(p),
            Algorithm::Quick => quicksort_trace(p),
        }
    }
}

/// Recorded array states of one sorting run, initial state first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SortTrace {
    pub algorithm: Algorithm,
    pub initial: Permutation,
    pub states: Vec<Permutation>,
}

impl SortTrace {
    /// Transitions between recorded states.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Records the array after every executed adjacent swap.
pub fn bubble_sort_trace(p: &Permutation) -> SortTrace {
    let mut a = p.entries().to_vec();
    let mut states = vec![p.clone()];
    let n = a.len();
    for pass in 0..n.saturating_sub(1) {
        let mut swapped = false;
        for j in 0..n - 1 - pass {
            if a[j] > a[j + 1] {
                a.swap(j, j + 1);
                states.push(Permutation(a.clone()));
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    SortTrace {
        algorithm: Algorithm::Bubble,
        initial: p.clone(),
        states,
    }
}

/// In-place quicksort, last element as pivot (Lomuto partition). The array
/// is recorded after every exchange that changes it.
pub fn quicksort_trace(p: &Permutation) -> SortTrace {
    fn exchange(a: &mut [u8], i: usize, j: usize, states: &mut Vec<Permutation>) {
        if a[i] != a[j] {
            a.swap(i, j);
            states.push(Permutation(a.to_vec()));
        }
    }
    fn sort(a: &mut [u8], lo: usize, hi: usize, states: &mut Vec<Permutation>) {
        if lo >= hi {
            return;
        }
        let pivot = a[hi];
        let mut i = lo;
        for j in lo..hi {
            if a[j] < pivot {
                exchange(a, i, j, states);
                i += 1;
            }
        }
        exchange(a, i, hi, states);
        if i > lo {
            sort(a, lo, i - 1, states);
        }
        sort(a, i + 1, hi, states);
    }
    let mut a = p.entries().to_vec();
    let mut states = vec![p.clone()];
    if !a.is_empty() {
        let hi = a.len() - 1;
        sort(&mut a, 0, hi, &mut states);
    }
    states.dedup();
    SortTrace {
        algorithm: Algorithm::Quick,
        initial: p.clone(),
        states,
    }
}

pub fn encoding(n: usize) -> Encoding {
    Encoding::OneHot {
        length: n,
        categories: n as u8,
        blank: None,
    }
}

/// Runs of the chosen algorithms over all permutations of `1..=n`, in that
/// order. Runs on an already sorted input hold a single state and are kept as
/// anchor trajectories.
pub fn sorting_dataset(n: usize, algorithms: &[Algorithm]) -> Result<StateDataset, SortingError> {
    let perms = all_permutations(n)?;
    let mut regular = Vec::new();
    let mut single = Vec::new();
    for &alg in algorithms {
        for p in &perms {
            let trace = alg.trace(p);
            let steps = trace.steps();
            let mut labels = Metadata::new();
            labels.insert("algorithm".into(), alg.name().into());
            labels.insert("initial".into(), MetaValue::Text(p.to_string()));
            labels.insert("steps".into(), steps.into());
            let points = trace.states.iter().enumerate().map(|(i, s)| {
                let mut meta = Metadata::new();
                meta.insert("permutation".into(), MetaValue::Text(s.to_string()));
                meta.insert("progress".into(), progress(i, steps).into());
                (State::Symbols(s.symbols()), meta)
            });
            let t = Trajectory::from_states(format!("{}:{}", alg.name(), p), labels, points);
            if t.len() < 2 {
                single.push(t);
            } else {
                regular.push(t);
            }
        }
    }
    let mut ds = StateDataset::build(format!("sorting-{n}"), encoding(n), regular)?;
    for t in single {
        ds = ds.with_anchor(t)?;
    }
    Ok(ds)
}

fn progress(i: usize, steps: usize) -> f64 {
    if steps == 0 {
        1.0
    } else {
        i as f64 / steps as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(v: &[u8]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    #[test]
    fn permutation_counts() {
        assert_eq!(all_permutations(1).unwrap(), vec![perm(&[1])]);
        assert_eq!(all_permutations(3).unwrap().len(), 6);
        assert_eq!(all_permutations(6).unwrap().len(), 720);
        assert_eq!(all_permutations(0), Err(SortingError::OutOfRange(0)));
        assert_eq!(all_permutations(9), Err(SortingError::OutOfRange(9)));
        let p4 = all_permutations(4).unwrap();
        assert!(p4.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn invalid_permutations_rejected() {
        assert!(Permutation::new(vec![1, 1]).is_err());
        assert!(Permutation::new(vec![0, 1]).is_err());
        assert!(Permutation::new(vec![1, 3]).is_err());
    }

    #[test]
    fn one_hot_blocks() {
        assert_eq!(
            one_hot_permutation(&perm(&[1, 2])),
            vec![1.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(
            one_hot_permutation(&perm(&[2, 1])),
            vec![0.0, 1.0, 1.0, 0.0]
        );
        for p in all_permutations(4).unwrap() {
            let v = one_hot_permutation(&p);
            assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 4);
            assert_eq!(v, encoding(4).encode(&State::Symbols(p.symbols())));
        }
    }

    #[test]
    fn bubble_hand_trace() {
        let t = bubble_sort_trace(&perm(&[3, 2, 1]));
        assert_eq!(
            t.states,
            vec![
                perm(&[3, 2, 1]),
                perm(&[2, 3, 1]),
                perm(&[2, 1, 3]),
                perm(&[1, 2, 3])
            ]
        );
        assert_eq!(bubble_sort_trace(&perm(&[1, 2, 3])).states.len(), 1);
    }

    #[test]
    fn bubble_swaps_equal_inversions() {
        for n in 1..=6 {
            for p in all_permutations(n).unwrap() {
                let t = bubble_sort_trace(&p);
                assert_eq!(t.steps(), p.inversions());
                assert!(t.states.last().unwrap().is_sorted());
            }
        }
    }

    #[test]
    fn quicksort_hand_trace() {
        assert_eq!(
            quicksort_trace(&perm(&[2, 1])).states,
            vec![perm(&[2, 1]), perm(&[1, 2])]
        );
        assert_eq!(quicksort_trace(&perm(&[1, 2, 3, 4])).states.len(), 1);
        // pivot 2: 3 stays, 1 is exchanged to the front, pivot swapped into place
        assert_eq!(
            quicksort_trace(&perm(&[3, 1, 2])).states,
            vec![perm(&[3, 1, 2]), perm(&[1, 3, 2]), perm(&[1, 2, 3])]
        );
    }

    #[test]
    fn both_algorithms_sort_everything() {
        for n in 1..=6 {
            for p in all_permutations(n).unwrap() {
                for alg in [Algorithm::Bubble, Algorithm::Quick] {
                    let t = alg.trace(&p);
                    assert!(t.states.last().unwrap().is_sorted());
                    assert!(t.states.windows(2).all(|w| w[0] != w[1]));
                    assert_eq!(t.states[0], p);
                }
            }
        }
    }

    #[test]
    fn bubble_mean_is_seven_and_a_half() {
        let perms = all_permutations(6).unwrap();
        let total: usize = perms.iter().map(|p| bubble_sort_trace(p).steps()).sum();
        assert_eq!(total * 2, 15 * 720);
    }

    #[test]
    fn dataset_keeps_every_run() {
        let ds = sorting_dataset(3, &[Algorithm::Bubble, Algorithm::Quick]).unwrap();
        assert_eq!(ds.trajectories().len(), 12);
        let sorted = State::Symbols(vec![0, 1, 2]);
        let ends = ds
            .trajectories()
            .iter()
            .filter(|t| t.points.last().unwrap().state == sorted)
            .count();
        assert_eq!(ends, 12);
    }
}
