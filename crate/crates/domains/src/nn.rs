//! Neural-network training traces: per-epoch weights of one layer and the
//! confusion matrix on a fixed test set.
//!
//! Trace files are JSON documents of the form
//! `{"runs": [{"id", "hyperparams": {..}, "epochs": [{"weights": [..], "confusion": [[..]]}]}]}`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajspace_core::embed::{pca, Pca};
use trajspace_core::{EmbedError, Encoding, MetaValue, Metadata, State, StateDataset, Trajectory};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("cannot read trace file: {0}")]
    Parse(String),
    #[error("run '{run}'{}: {reason}", epoch.map(|e| format!(" epoch {e}")).unwrap_or_default())]
    Run {
        run: String,
        epoch: Option<usize>,
        reason: String,
    },
    #[error("pre-reduction to {requested} dimensions impossible; at most {max}")]
    TooManyComponents { requested: usize, max: usize },
    #[error("class totals {given:?} do not match the dataset's {found:?}")]
    TotalsMismatch { given: Vec<u64>, found: Vec<u64> },
    #[error("dataset does not hold {0}x{0} confusion vectors")]
    NotConfusion(usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Dataset(#[from] trajspace_core::DatasetError),
}

/// `k x k` counts; entry `(i, j)` counts class-`i` instances predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl TryFrom<Vec<Vec<i64>>> for ConfusionMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self, String> {
        let k = rows.len();
        if k == 0 {
            return Err("empty confusion matrix".into());
        }
        let mut counts = Vec::with_capacity(k * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(format!(
                    "confusion row {i} has {} entries, expected {k}",
                    row.len()
                ));
            }
            for (j, &c) in row.iter().enumerate() {
                if c < 0 {
                    return Err(format!("negative count {c} at ({i}, {j})"));
                }
                counts.push(c as u64);
            }
        }
        Ok(ConfusionMatrix { k, counts })
    }
}

impl From<ConfusionMatrix> for Vec<Vec<i64>> {
    fn from(m: ConfusionMatrix) -> Self {
        m.counts
            .chunks(m.k)
            .map(|r| r.iter().map(|&c| c as i64).collect())
            .collect()
    }
}

impl ConfusionMatrix {
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), k * k, "counts must be k x k");
        ConfusionMatrix { k, counts }
    }

    /// Perfect classification: the class totals on the diagonal.
    pub fn perfect(totals: &[u64]) -> Self {
        let k = totals.len();
        let mut counts = vec![0; k * k];
        for (i, &t) in totals.iter().enumerate() {
            counts[i * k + i] = t;
        }
        ConfusionMatrix { k, counts }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k + j]
    }

    pub fn class_totals(&self) -> Vec<u64> {
        self.counts.chunks(self.k).map(|r| r.iter().sum()).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let total: u64 = self.counts.iter().sum();
        let correct: u64 = (0..self.k).map(|i| self.get(i, i)).sum();
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }

    /// Row-major counts.
    pub fn flatten(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Accuracy of a flattened `k x k` confusion vector.
pub fn accuracy_of(vector: &[f64]) -> Option<f64> {
    let k = (vector.len() as f64).sqrt().round() as usize;
    if k * k != vector.len() || k == 0 {
        return None;
    }
    let total: f64 = vector.iter().sum();
    let diagonal: f64 = (0..k).map(|i| vector[i * k + i]).sum();
    Some(if total == 0.0 { 0.0 } else { diagonal / total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub weights: Vec<f64>,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub id: String,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, MetaValue>,
    pub epochs: Vec<Epoch>,
}

impl TrainingRun {
    pub fn class_totals(&self) -> Vec<u64> {
        self.epochs
            .first()
            .map(|e| e.confusion.class_totals())
            .unwrap_or_default()
    }

    fn validate(&self) -> Result<(), NnError> {
        let fail = |epoch: Option<usize>, reason: String| NnError::Run {
            run: self.id.clone(),
            epoch,
            reason,
        };
        if self.epochs.len() < 2 {
            return Err(fail(
                None,
                format!("{} epochs, need at least 2", self.epochs.len()),
            ));
        }
        let first = &self.epochs[0];
        let totals = first.confusion.class_totals();
        for (e, epoch) in self.epochs.iter().enumerate() {
            if epoch.weights.len() != first.weights.len() {
                return Err(fail(
                    Some(e),
                    format!(
                        "{} weights, epoch 0 has {}",
                        epoch.weights.len(),
                        first.weights.len()
                    ),
                ));
            }
            if epoch.weights.iter().any(|w| !w.is_finite()) {
                return Err(fail(Some(e), "non-finite weight".into()));
            }
            if epoch.confusion.k() != first.confusion.k() {
                return Err(fail(
                    Some(e),
                    format!(
                        "{} classes, epoch 0 has {}",
                        epoch.confusion.k(),
                        first.confusion.k()
                    ),
                ));
            }
            let rows = epoch.confusion.class_totals();
            if rows != totals {
                return Err(fail(
                    Some(e),
                    format!("row sums {rows:?} differ from {totals:?}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TraceFile {
    runs: Vec<TrainingRun>,
}

/// Parses and validates a trace file. Errors name the run and epoch.
pub fn load_runs(text: &str) -> Result<Vec<TrainingRun>, NnError> {
    let file: TraceFile = serde_json::from_str(text).map_err(|e| NnError::Parse(e.to_string()))?;
    let mut seen = std::collections::BTreeSet::new();
    for run in &file.runs {
        if !seen.insert(run.id.as_str()) {
            return Err(NnError::Run {
                run: run.id.clone(),
                epoch: None,
                reason: "duplicate run id".into(),
            });
        }
        run.validate()?;
    }
    Ok(file.runs)
}

pub fn write_runs(runs: &[TrainingRun]) -> String {
    serde_json::to_string_pretty(&TraceFile {
        runs: runs.to_vec(),
    })
    .expect("runs serialize")
}

/// Principal components fitted jointly over every epoch of every run.
pub fn fit_prereduction(runs: &[TrainingRun], dims: usize) -> Result<Pca, NnError> {
    let d = runs
        .first()
        .and_then(|r| r.epochs.first())
        .map_or(0, |e| e.weights.len());
    let mut data = Vec::new();
    let mut n = 0usize;
    for run in runs {
        for (e, epoch) in run.epochs.iter().enumerate() {
            if epoch.weights.len() != d {
                return Err(NnError::Run {
                    run: run.id.clone(),
                    epoch: Some(e),
                    reason: format!("{} weights, other runs have {d}", epoch.weights.len()),
                });
            }
            data.extend_from_slice(&epoch.weights);
            n += 1;
        }
    }
    let max = n.saturating_sub(1).min(d);
    if dims == 0 || dims > max {
        return Err(NnError::TooManyComponents {
            requested: dims,
            max,
        });
    }
    Ok(pca(&data, n, d, dims)?)
}

fn labels(run: &TrainingRun) -> Metadata {
    let mut labels = run.hyperparams.clone();
    labels.insert("run".into(), MetaValue::Text(run.id.clone()));
    labels
}

fn epoch_meta(e: usize, epoch: &Epoch) -> Metadata {
    let mut meta = Metadata::new();
    meta.insert("epoch".into(), e.into());
    meta.insert("accuracy".into(), epoch.confusion.accuracy().into());
    meta
}

/// Weight vectors per epoch, projected onto `reduction` when given.
pub fn weight_states(run: &TrainingRun, reduction: Option<&Pca>) -> Trajectory {
    let states = run.epochs.iter().enumerate().map(|(e, epoch)| {
        let v = match reduction {
            Some(p) => p.transform(&epoch.weights),
            None => epoch.weights.clone(),
        };
        (State::Real(v), epoch_meta(e, epoch))
    });
    Trajectory::from_states(run.id.clone(), labels(run), states)
}

/// Row-major `k^2` count vectors per epoch.
pub fn confusion_states(run: &TrainingRun) -> Trajectory {
    let states = run
        .epochs
        .iter()
        .enumerate()
        .map(|(e, epoch)| (State::Real(epoch.confusion.flatten()), epoch_meta(e, epoch)));
    Trajectory::from_states(run.id.clone(), labels(run), states)
}

/// Weight-space dataset; `prereduce` fits one PCA over all runs.
pub fn weight_dataset(
    runs: &[TrainingRun],
    prereduce: Option<usize>,
) -> Result<StateDataset, NnError> {
    let reduction = prereduce.map(|d| fit_prereduction(runs, d)).transpose()?;
    let trajectories: Vec<Trajectory> = runs
        .iter()
        .map(|r| weight_states(r, reduction.as_ref()))
        .collect();
    let dimension = match &reduction {
        Some(p) => p.dims,
        None => runs
            .first()
            .and_then(|r| r.epochs.first())
            .map_or(0, |e| e.weights.len()),
    };
    Ok(StateDataset::build(
        "nn-weights",
        Encoding::Real { dimension },
        trajectories,
    )?)
}

pub fn confusion_dataset(runs: &[TrainingRun]) -> Result<StateDataset, NnError> {
    let k = runs
        .first()
        .and_then(|r| r.epochs.first())
        .map_or(0, |e| e.confusion.k());
    let trajectories = runs.iter().map(confusion_states).collect();
    Ok(StateDataset::build(
        "nn-confusion",
        Encoding::Real { dimension: k * k },
        trajectories,
    )?)
}

/// Adds a one-point trajectory `perfect` holding `diag(class_totals)`.
pub fn augment_perfect(
    dataset: StateDataset,
    class_totals: &[u64],
) -> Result<StateDataset, NnError> {
    let k = class_totals.len();
    if dataset.dimension() != k * k {
        return Err(NnError::NotConfusion(k));
    }
    for p in dataset.points() {
        let State::Real(v) = &p.state else {
            return Err(NnError::NotConfusion(k));
        };
        let found: Vec<u64> = v.chunks(k).map(|r| r.iter().sum::<f64>() as u64).collect();
        if found != class_totals {
            return Err(NnError::TotalsMismatch {
                given: class_totals.to_vec(),
                found,
            });
        }
    }
    let perfect = ConfusionMatrix::perfect(class_totals);
    let mut labels = Metadata::new();
    labels.insert("run".into(), "perfect".into());
    let mut meta = Metadata::new();
    meta.insert("accuracy".into(), 1.0.into());
    let anchor =
        Trajectory::from_states("perfect", labels, [(State::Real(perfect.flatten()), meta)]);
    Ok(dataset.with_anchor(anchor)?)
}

fn apportion(total: u64, shares: &[f64]) -> Vec<u64> {
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| total as f64 * s / sum).collect();
    let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let mut left = total - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// Weight vector length of synthetic runs (a 10 x 10 layer).
pub const SYNTH_WEIGHTS: usize = 100;

/// A plausible run: the error share of every class shrinks by
/// `improvement_rate` per epoch and the weights follow a damped random walk.
pub fn synth_run(seed: u64, epochs: usize, k: usize, improvement_rate: f64) -> TrainingRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let totals: Vec<u64> = (0..k).map(|_| rng.random_range(50..=150)).collect();
    synth_with(&mut rng, seed, epochs, &totals, improvement_rate)
}

/// `count` runs evaluated on one validation set, with improvement rates
/// 0.05, 0.10, ...
pub fn synth_runs(count: usize, epochs: usize, k: usize, seed: u64) -> Vec<TrainingRun> {
    let totals: Vec<u64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k).map(|_| rng.random_range(50..=150)).collect()
    };
    (0..count)
        .map(|i| {
            let run_seed = seed.wrapping_add(i as u64 + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            synth_with(&mut rng, run_seed, epochs, &totals, 0.05 * (i + 1) as f64)
        })
        .collect()
}

fn synth_with(
    rng: &mut ChaCha8Rng,
    seed: u64,
    epochs: usize,
    totals: &[u64],
    improvement_rate: f64,
) -> TrainingRun {
    let k = totals.len();
    let shares: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        rng.random_range(0.1..1.0)
                    }
                })
                .collect()
        })
        .collect();
    let initial_error = if k > 1 {
        (k - 1) as f64 / k as f64
    } else {
        0.0
    };
    let mut weights: Vec<f64> = (0..SYNTH_WEIGHTS)
        .map(|_| rng.random_range(-0.5..0.5))
        .collect();
    let mut out = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let error = initial_error * (1.0 - improvement_rate.clamp(0.0, 1.0)).powi(e as i32);
        let mut counts = vec![0u64; k * k];
        for i in 0..k {
            let wrong = ((totals[i] as f64) * error).round() as u64;
            let wrong = if k > 1 { wrong.min(totals[i]) } else { 0 };
            for (j, c) in apportion(wrong, &shares[i]).into_iter().enumerate() {
                counts[i * k + j] = c;
            }
            counts[i * k + i] = totals[i] - wrong;
        }
        out.push(Epoch {
            weights: weights.clone(),
            confusion: ConfusionMatrix::from_counts(k, counts),
        });
        let step = 0.1 / (1.0 + e as f64);
        for w in &mut weights {
            *w += step * rng.random_range(-1.0..1.0);
        }
    }
    let mut hyperparams = BTreeMap::new();
    hyperparams.insert("seed".into(), MetaValue::Number(seed as f64));
    hyperparams.insert("learning_rate".into(), MetaValue::Number(improvement_rate));
    hyperparams.insert("classes".into(), k.into());
    hyperparams.insert("note".into(), "synthetic".into());
    TrainingRun {
        id: format!("synth-{seed}"),
        hyperparams,
        epochs: out,
    }
}
