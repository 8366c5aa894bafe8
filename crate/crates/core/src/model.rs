//! Trajectories of high-dimensional states and the datasets that hold them.
//!
//! A [`StateDataset`] is an ordered list of [`Trajectory`] values. Every point
//! gets a global index: trajectories in insertion order, points in step order.
//! Timestamps, when a source has them, live in point metadata; only the step
//! index orders points.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Attribute map attached to points and trajectories.
pub type Metadata = BTreeMap<String, MetaValue>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Number(f64),
    Text(String),
}

impl MetaValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            MetaValue::Number(v) => Some(*v),
            MetaValue::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            MetaValue::Text(s) => Some(s),
            MetaValue::Number(_) => None,
        }
    }
}

impl fmt::Display for MetaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetaValue::Number(v) => write!(f, "{v}"),
            MetaValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for MetaValue {
    fn from(v: f64) -> Self {
        MetaValue::Number(v)
    }
}

impl From<usize> for MetaValue {
    fn from(v: usize) -> Self {
        MetaValue::Number(v as f64)
    }
}

impl From<i64> for MetaValue {
    fn from(v: i64) -> Self {
        MetaValue::Number(v as f64)
    }
}

impl From<bool> for MetaValue {
    fn from(v: bool) -> Self {
        MetaValue::Text(if v { "true" } else { "false" }.to_string())
    }
}

impl From<&str> for MetaValue {
    fn from(v: &str) -> Self {
        MetaValue::Text(v.to_string())
    }
}

impl From<String> for MetaValue {
    fn from(v: String) -> Self {
        MetaValue::Text(v)
    }
}

/// One state: either a real vector or a vector of category symbols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    Real(Vec<f64>),
    Symbols(Vec<u8>),
    /// Placeholder for datasets that only carry projected coordinates.
    Absent,
}

impl State {
    pub fn kind(&self) -> &'static str {
        match self {
            State::Real(_) => "real",
            State::Symbols(_) => "symbols",
            State::Absent => "absent",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            State::Real(v) => v.len(),
            State::Symbols(v) => v.len(),
            State::Absent => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Key for exact (bitwise) equality.
    pub(crate) fn bit_key(&self) -> StateKey {
        match self {
            State::Real(v) => StateKey::Real(v.iter().map(|x| x.to_bits()).collect()),
            State::Symbols(v) => StateKey::Symbols(v.clone()),
            State::Absent => StateKey::Absent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) enum StateKey {
    Real(Vec<u64>),
    Symbols(Vec<u8>),
    Absent,
}

/// How states of a dataset map to real vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoding {
    /// States are real vectors of the given dimension.
    Real { dimension: usize },
    /// States are `length` symbols in `0..categories`, one-hot encoded into
    /// `length * categories` entries. A `blank` symbol encodes as an all-zero
    /// slot instead of a set bit.
    OneHot {
        length: usize,
        categories: u8,
        blank: Option<u8>,
    },
    /// No high-dimensional states (coordinates-only data).
    Absent,
}

impl Encoding {
    /// Length of the encoded real vector.
    pub fn dimension(&self) -> usize {
        match *self {
            Encoding::Real { dimension } => dimension,
            Encoding::OneHot {
                length, categories, ..
            } => length * categories as usize,
            Encoding::Absent => 0,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, Encoding::OneHot { .. })
    }

    /// Checks that `state` fits this encoding; returns a reason otherwise.
    pub fn check(&self, state: &State) -> Result<(), String> {
        match (self, state) {
            (Encoding::Real { dimension }, State::Real(v)) => {
                if v.len() != *dimension {
                    return Err(format!("dimension {} (expected {dimension})", v.len()));
                }
                if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
                    return Err(format!("non-finite entry at position {pos}"));
                }
                Ok(())
            }
            (
                Encoding::OneHot {
                    length, categories, ..
                },
                State::Symbols(s),
            ) => {
                if s.len() != *length {
                    return Err(format!("dimension {} (expected {length})", s.len()));
                }
                if let Some(pos) = s.iter().position(|&c| c >= *categories) {
                    return Err(format!(
                        "symbol {} at position {pos} outside 0..{categories}",
                        s[pos]
                    ));
                }
                Ok(())
            }
            (Encoding::Absent, State::Absent) => Ok(()),
            (enc, st) => Err(format!(
                "state kind {} does not match encoding {enc:?}",
                st.kind()
            )),
        }
    }

    /// Expands a state into its real vector, appending to `out`.
    pub fn encode_into(&self, state: &State, out: &mut Vec<f64>) {
        match (self, state) {
            (Encoding::Real { .. }, State::Real(v)) => out.extend_from_slice(v),
            (
                Encoding::OneHot {
                    categories, blank, ..
                },
                State::Symbols(s),
            ) => {
                for &sym in s {
                    let start = out.len();
                    out.resize(start + *categories as usize, 0.0);
                    if Some(sym) != *blank {
                        out[start + sym as usize] = 1.0;
                    }
                }
            }
            _ => {}
        }
    }

    pub fn encode(&self, state: &State) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dimension());
        self.encode_into(state, &mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    pub trajectory_id: String,
    pub step_index: u64,
    pub state: State,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: Metadata,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub points: Vec<StatePoint>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: Metadata,
}

impl Trajectory {
    /// Builds a trajectory from states in visiting order; step indices count from 0.
    pub fn from_states<I>(id: impl Into<String>, labels: Metadata, states: I) -> Self
    where
        I: IntoIterator<Item = (State, Metadata)>,
    {
        let id = id.into();
        let points = states
            .into_iter()
            .enumerate()
            .map(|(i, (state, metadata))| StatePoint {
                trajectory_id: id.clone(),
                step_index: i as u64,
                state,
                metadata,
            })
            .collect();
        Trajectory { id, points, labels }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("dataset has no trajectories")]
    Empty,
    #[error("trajectory too short: '{id}' has {len} point(s), at least 2 required")]
    TooShort { id: String, len: usize },
    #[error("dimension mismatch in trajectory '{id}' at step {step}: {reason}")]
    DimensionMismatch {
        id: String,
        step: u64,
        reason: String,
    },
    #[error(
        "trajectory '{id}': step indices must strictly increase (step {step} follows {previous})"
    )]
    StepOrder {
        id: String,
        previous: u64,
        step: u64,
    },
    #[error("trajectory '{id}': point carries trajectory id '{found}'")]
    ForeignPoint { id: String, found: String },
    #[error("duplicate trajectory id '{0}'")]
    DuplicateId(String),
}

/// Immutable collection of trajectories sharing one state encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset", into = "RawDataset")]
pub struct StateDataset {
    representation_name: String,
    encoding: Encoding,
    trajectories: Vec<Trajectory>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawDataset {
    representation_name: String,
    encoding: Encoding,
    trajectories: Vec<Trajectory>,
}

impl TryFrom<RawDataset> for StateDataset {
    type Error = DatasetError;

    fn try_from(raw: RawDataset) -> Result<Self, Self::Error> {
        StateDataset::assemble(
            raw.representation_name,
            raw.encoding,
            raw.trajectories,
            true,
        )
    }
}

impl From<StateDataset> for RawDataset {
    fn from(ds: StateDataset) -> Self {
        RawDataset {
            representation_name: ds.representation_name,
            encoding: ds.encoding,
            trajectories: ds.trajectories,
        }
    }
}

impl StateDataset {
    /// Validates the trajectories and assigns global point indices.
    ///
    /// Every trajectory needs at least two points; see [`StateDataset::with_anchor`]
    /// for the single-point reference states.
    pub fn build(
        representation_name: impl Into<String>,
        encoding: Encoding,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self, DatasetError> {
        Self::assemble(representation_name.into(), encoding, trajectories, false)
    }

    fn assemble(
        representation_name: String,
        encoding: Encoding,
        trajectories: Vec<Trajectory>,
        allow_anchors: bool,
    ) -> Result<Self, DatasetError> {
        if trajectories.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = HashMap::new();
        for t in &trajectories {
            if seen.insert(t.id.as_str(), ()).is_some() {
                return Err(DatasetError::DuplicateId(t.id.clone()));
            }
            Self::check_trajectory(&encoding, t, allow_anchors && is_anchor(t))?;
        }
        let mut offsets = Vec::with_capacity(trajectories.len() + 1);
        let mut total = 0;
        for t in &trajectories {
            offsets.push(total);
            total += t.points.len();
        }
        offsets.push(total);
        Ok(StateDataset {
            representation_name,
            encoding,
            trajectories,
            offsets,
        })
    }

    fn check_trajectory(
        encoding: &Encoding,
        t: &Trajectory,
        anchor: bool,
    ) -> Result<(), DatasetError> {
        let min_len = if anchor { 1 } else { 2 };
        if t.points.len() < min_len {
            return Err(DatasetError::TooShort {
                id: t.id.clone(),
                len: t.points.len(),
            });
        }
        let mut previous: Option<u64> = None;
        for p in &t.points {
            if p.trajectory_id != t.id {
                return Err(DatasetError::ForeignPoint {
                    id: t.id.clone(),
                    found: p.trajectory_id.clone(),
                });
            }
            if let Some(prev) = previous {
                if p.step_index <= prev {
                    return Err(DatasetError::StepOrder {
                        id: t.id.clone(),
                        previous: prev,
                        step: p.step_index,
                    });
                }
            }
            previous = Some(p.step_index);
            encoding
                .check(&p.state)
                .map_err(|reason| DatasetError::DimensionMismatch {
                    id: t.id.clone(),
                    step: p.step_index,
                    reason,
                })?;
        }
        Ok(())
    }

    /// Adds a single-point reference trajectory (labelled `kind = anchor`).
    pub fn with_anchor(mut self, mut anchor: Trajectory) -> Result<Self, DatasetError> {
        anchor
            .labels
            .insert(ANCHOR_LABEL.into(), ANCHOR_VALUE.into());
        if self.trajectories.iter().any(|t| t.id == anchor.id) {
            return Err(DatasetError::DuplicateId(anchor.id));
        }
        Self::check_trajectory(&self.encoding, &anchor, true)?;
        let total = *self.offsets.last().unwrap_or(&0) + anchor.points.len();
        self.trajectories.push(anchor);
        self.offsets.push(total);
        Ok(self)
    }

    pub fn representation_name(&self) -> &str {
        &self.representation_name
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    /// Dimension of the encoded state vectors.
    pub fn dimension(&self) -> usize {
        self.encoding.dimension()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// Total number of points.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global index of the first point of each trajectory, plus the total at the end.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn global_index(&self, trajectory: usize, position: usize) -> usize {
        self.offsets[trajectory] + position
    }

    /// Maps a global index back to (trajectory index, position in trajectory).
    pub fn locate(&self, global: usize) -> Option<(usize, usize)> {
        if global >= self.len() {
            return None;
        }
        let t = self.offsets.partition_point(|&o| o <= global) - 1;
        Some((t, global - self.offsets[t]))
    }

    pub fn point(&self, global: usize) -> Option<&StatePoint> {
        self.locate(global)
            .map(|(t, p)| &self.trajectories[t].points[p])
    }

    /// All points in global index order.
    pub fn points(&self) -> impl Iterator<Item = &StatePoint> + '_ {
        self.trajectories.iter().flat_map(|t| t.points.iter())
    }

    /// Encoded vector of one point.
    pub fn encoded(&self, global: usize) -> Option<Vec<f64>> {
        self.point(global).map(|p| self.encoding.encode(&p.state))
    }

    /// Row-major `len() x dimension()` matrix of all encoded states.
    pub fn encoded_matrix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.dimension());
        for p in self.points() {
            self.encoding.encode_into(&p.state, &mut out);
        }
        out
    }

    /// Trajectory index of every point, in global order.
    pub fn trajectory_of_points(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for (t, traj) in self.trajectories.iter().enumerate() {
            out.extend(std::iter::repeat_n(t, traj.points.len()));
        }
        out
    }
}

pub const ANCHOR_LABEL: &str = "kind";
pub const ANCHOR_VALUE: &str = "anchor";

/// Single-point reference trajectories added after construction.
pub fn is_anchor(t: &Trajectory) -> bool {
    t.labels.get(ANCHOR_LABEL).and_then(MetaValue::as_str) == Some(ANCHOR_VALUE)
}

/// Result of merging exact duplicate states.
#[derive(Clone, Debug, PartialEq)]
pub struct Collapsed {
    /// Global indices of the surviving representatives, ascending.
    pub representatives: Vec<usize>,
    /// For each original point, its position in `representatives`.
    pub representative_of: Vec<usize>,
    /// Surviving global index -> number of points it stands for.
    pub multiplicity: BTreeMap<usize, usize>,
    /// Each trajectory as a list of surviving global indices, in step order.
    pub paths: Vec<Vec<usize>>,
}

impl Collapsed {
    /// Spreads per-representative values back to every original point.
    pub fn expand<T: Clone>(&self, per_representative: &[T]) -> Vec<T> {
        self.representative_of
            .iter()
            .map(|&r| per_representative[r].clone())
            .collect()
    }
}

/// Merges bitwise-identical states. The dataset itself is left untouched.
pub fn collapse_duplicates(dataset: &StateDataset) -> Collapsed {
    let states: Vec<&State> = dataset.points().map(|p| &p.state).collect();
    let (representatives, representative_of) = collapse_states(&states);
    let mut multiplicity = BTreeMap::new();
    for &r in &representative_of {
        *multiplicity.entry(representatives[r]).or_insert(0) += 1;
    }
    let paths = dataset
        .trajectories()
        .iter()
        .enumerate()
        .map(|(t, traj)| {
            (0..traj.points.len())
                .map(|p| representatives[representative_of[dataset.global_index(t, p)]])
                .collect()
        })
        .collect();
    Collapsed {
        representatives,
        representative_of,
        multiplicity,
        paths,
    }
}

/// First-occurrence deduplication over a list of states.
pub fn collapse_states(states: &[&State]) -> (Vec<usize>, Vec<usize>) {
    let mut first: HashMap<StateKey, usize> = HashMap::new();
    let mut representatives = Vec::new();
    let mut representative_of = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let slot = *first.entry(s.bit_key()).or_insert_with(|| {
            representatives.push(i);
            representatives.len() - 1
        });
        representative_of.push(slot);
    }
    (representatives, representative_of)
}
