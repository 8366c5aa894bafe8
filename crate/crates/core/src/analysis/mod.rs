//! Pattern detection on embedded trajectories.
//!
//! Start, intermediate and end points are each either dense or sparse
//! (patterns P1 to P6); runs of shared clusters form bundles (P7) whose
//! members may run in opposite directions (P8) or at different speeds (P9);
//! distant trajectories may still share a shape (P10).

mod bundles;
mod clusters;
mod fingerprint;
mod shape;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{bounding_diagonal, centroid};
use crate::model::{is_anchor, MetaValue, StateDataset};

pub use bundles::{
    cluster_traffic, compare_velocity, detect_bundles, visit_sequence, BundleDescriptor,
    BundleMember, Direction, Velocity, Visit,
};
pub use clusters::{density_clusters, ClusterLabeling};
pub use fingerprint::{fingerprint, DimensionSummary, Fingerprint};
pub use shape::{resample, shape_similarity, RESAMPLE_POINTS};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("dispersion needs at least two points")]
    Singleton,
    #[error("empty selection")]
    EmptySelection,
    #[error("fingerprints need categorical states, got {0}")]
    NotCategorical(&'static str),
    #[error("trajectory {0} is not a member of the bundle")]
    NotInBundle(usize),
    #[error("cluster {0} is not shared by the bundle")]
    ClusterNotShared(usize),
    #[error("{0}")]
    Degenerate(String),
    #[error("{coords} coordinates for {points} points")]
    Misaligned { coords: usize, points: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dispersion {
    Dense,
    Sparse,
}

/// Default dense/sparse threshold on mean pairwise distance over extent.
pub const DEFAULT_THETA: f64 = 0.05;

/// Mean pairwise distance of the set divided by `extent`.
pub fn dispersion_ratio(points: &[[f64; 2]], extent: f64) -> Result<f64, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::Singleton);
    }
    let mut sum = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            sum += (p[0] - q[0]).hypot(p[1] - q[1]);
        }
    }
    let pairs = points.len() * (points.len() - 1) / 2;
    let mean = sum / pairs as f64;
    Ok(if extent > 0.0 { mean / extent } else { 0.0 })
}

/// Dense iff mean pairwise distance / `extent` < `theta`.
pub fn classify_dispersion(
    points: &[[f64; 2]],
    extent: f64,
    theta: f64,
) -> Result<Dispersion, AnalysisError> {
    let r = dispersion_ratio(points, extent)?;
    Ok(if r < theta {
        Dispersion::Dense
    } else {
        Dispersion::Sparse
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    P8,
    P9,
    P10,
}

impl Pattern {
    pub fn describe(self) -> &'static str {
        match self {
            Pattern::P1 => "dense start points",
            Pattern::P2 => "dense intermediate points",
            Pattern::P3 => "dense end points",
            Pattern::P4 => "sparse start points",
            Pattern::P5 => "sparse intermediate points",
            Pattern::P6 => "sparse end points",
            Pattern::P7 => "trajectory bundle",
            Pattern::P8 => "bundle members in opposite directions",
            Pattern::P9 => "bundle members at different velocities",
            Pattern::P10 => "similar shapes in different regions",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Start,
    End,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Clustering radius; `None` means 2% of the bounding-box diagonal.
    pub radius: Option<f64>,
    pub min_points: usize,
    pub theta: f64,
    /// Trajectory label whose values split start/end points into groups.
    pub group_by: Option<String>,
    /// Number of P10 pairs to report.
    pub shape_pairs: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            radius: None,
            min_points: 5,
            theta: DEFAULT_THETA,
            group_by: None,
            shape_pairs: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointGroup {
    pub role: Role,
    pub group: String,
    /// Trajectory indices whose endpoint belongs to this group.
    pub trajectories: Vec<usize>,
    pub ratio: Option<f64>,
    pub dispersion: Option<Dispersion>,
    pub pattern: Option<Pattern>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntermediateSummary {
    pub pattern: Pattern,
    /// Clusters holding intermediate points of at least two trajectories.
    pub shared_clusters: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityNote {
    pub bundle: usize,
    pub faster: String,
    pub faster_steps: usize,
    pub slower: String,
    pub slower_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapePair {
    pub a: String,
    pub b: String,
    pub dissimilarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub radius: f64,
    pub min_points: usize,
    pub clusters: usize,
    pub noise: usize,
}

/// Everything detected on one embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub points: usize,
    pub trajectories: usize,
    pub extent: f64,
    pub theta: f64,
    pub clustering: ClusterSummary,
    pub endpoints: Vec<EndpointGroup>,
    pub intermediate: IntermediateSummary,
    pub bundles: Vec<BundleDescriptor>,
    pub velocities: Vec<VelocityNote>,
    /// P10 pairs are indicative only.
    pub shapes: Vec<ShapePair>,
    pub shapes_advisory: bool,
    #[serde(skip)]
    pub labeling: Option<ClusterLabeling>,
}

impl PatternReport {
    /// Patterns found, in catalogue order.
    pub fn patterns(&self) -> BTreeSet<Pattern> {
        let mut out: BTreeSet<Pattern> = self.endpoints.iter().filter_map(|g| g.pattern).collect();
        out.insert(self.intermediate.pattern);
        if !self.bundles.is_empty() {
            out.insert(Pattern::P7);
        }
        if self
            .bundles
            .iter()
            .any(|b| b.reversed_members() > 0 && b.reversed_members() < b.members.len())
        {
            out.insert(Pattern::P8);
        }
        if !self.velocities.is_empty() {
            out.insert(Pattern::P9);
        }
        if !self.shapes.is_empty() {
            out.insert(Pattern::P10);
        }
        out
    }

    pub fn endpoint(&self, role: Role, group: &str) -> Option<&EndpointGroup> {
        self.endpoints
            .iter()
            .find(|g| g.role == role && g.group == group)
    }
}

/// Paths (global point indices) of the dataset's non-anchor trajectories.
pub fn trajectory_paths(dataset: &StateDataset) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut which = Vec::new();
    let mut paths = Vec::new();
    for (t, traj) in dataset.trajectories().iter().enumerate() {
        if is_anchor(traj) {
            continue;
        }
        let start = dataset.offsets()[t];
        which.push(t);
        paths.push((start..start + traj.points.len()).collect());
    }
    (which, paths)
}

/// Runs the whole pattern catalogue over an embedding of `dataset`.
pub fn analyze(
    dataset: &StateDataset,
    coords: &[[f64; 2]],
    config: &AnalysisConfig,
) -> Result<PatternReport, AnalysisError> {
    if coords.len() != dataset.len() {
        return Err(AnalysisError::Misaligned {
            coords: coords.len(),
            points: dataset.len(),
        });
    }
    let extent = bounding_diagonal(coords);
    let radius = config
        .radius
        .unwrap_or(0.02 * extent)
        .max(f64::MIN_POSITIVE);
    let labeling = density_clusters(coords, radius, config.min_points);
    let (which, paths) = trajectory_paths(dataset);
    let ids: Vec<String> = which
        .iter()
        .map(|&t| dataset.trajectories()[t].id.clone())
        .collect();

    let group_of = |t: usize| -> String {
        match &config.group_by {
            None => "all".into(),
            Some(key) => dataset.trajectories()[t]
                .labels
                .get(key)
                .map(MetaValue::to_string)
                .unwrap_or_else(|| "(none)".into()),
        }
    };
    let mut endpoints = Vec::new();
    for role in [Role::Start, Role::End] {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for &t in &which {
            groups.entry(group_of(t)).or_default().push(t);
        }
        for (group, members) in groups {
            let pts: Vec<[f64; 2]> = members
                .iter()
                .map(|&t| {
                    let first = dataset.offsets()[t];
                    let last = dataset.offsets()[t + 1] - 1;
                    coords[if role == Role::Start { first } else { last }]
                })
                .collect();
            let ratio = dispersion_ratio(&pts, extent).ok();
            let dispersion = ratio.map(|r| {
                if r < config.theta {
                    Dispersion::Dense
                } else {
                    Dispersion::Sparse
                }
            });
            let pattern = dispersion.map(|d| match (role, d) {
                (Role::Start, Dispersion::Dense) => Pattern::P1,
                (Role::Start, Dispersion::Sparse) => Pattern::P4,
                (Role::End, Dispersion::Dense) => Pattern::P3,
                (Role::End, Dispersion::Sparse) => Pattern::P6,
            });
            endpoints.push(EndpointGroup {
                role,
                group,
                trajectories: members,
                ratio,
                dispersion,
                pattern,
            });
        }
    }

    let mut holders: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (k, path) in paths.iter().enumerate() {
        for &g in &path[1..path.len().saturating_sub(1)] {
            if let Some(c) = labeling.labels[g] {
                holders.entry(c).or_default().insert(k);
            }
        }
    }
    let shared_clusters: Vec<usize> = holders
        .into_iter()
        .filter(|(_, h)| h.len() >= 2)
        .map(|(c, _)| c)
        .collect();
    let intermediate = IntermediateSummary {
        pattern: if shared_clusters.is_empty() {
            Pattern::P5
        } else {
            Pattern::P2
        },
        shared_clusters,
    };

    let mut bundles = detect_bundles(&labeling, &paths, &ids);
    for b in &mut bundles {
        for m in &mut b.members {
            m.trajectory = which[m.trajectory];
        }
    }
    let velocities = bundles
        .iter()
        .enumerate()
        .filter_map(|(i, b)| {
            let fast = b
                .members
                .iter()
                .min_by_key(|m| (m.total_steps(), m.trajectory))?;
            let slow = b
                .members
                .iter()
                .max_by_key(|m| (m.total_steps(), std::cmp::Reverse(m.trajectory)))?;
            (fast.total_steps() < slow.total_steps()).then(|| VelocityNote {
                bundle: i,
                faster: fast.id.clone(),
                faster_steps: fast.total_steps(),
                slower: slow.id.clone(),
                slower_steps: slow.total_steps(),
            })
        })
        .collect();

    let shapes = shape_pairs(coords, &paths, &ids, extent, config.shape_pairs);
    Ok(PatternReport {
        points: dataset.len(),
        trajectories: paths.len(),
        extent,
        theta: config.theta,
        clustering: ClusterSummary {
            radius,
            min_points: config.min_points,
            clusters: labeling.clusters,
            noise: labeling.noise(),
        },
        endpoints,
        intermediate,
        bundles,
        velocities,
        shapes,
        shapes_advisory: true,
        labeling: Some(labeling),
    })
}

/// Most similar trajectory pairs whose centroids lie at least a quarter of
/// the extent apart.
fn shape_pairs(
    coords: &[[f64; 2]],
    paths: &[Vec<usize>],
    ids: &[String],
    extent: f64,
    limit: usize,
) -> Vec<ShapePair> {
    const MAX_TRAJECTORIES: usize = 400;
    const THRESHOLD: f64 = 0.1;
    if limit == 0 || paths.len() > MAX_TRAJECTORIES {
        return Vec::new();
    }
    let curves: Vec<Vec<[f64; 2]>> = paths
        .iter()
        .map(|p| p.iter().map(|&g| coords[g]).collect())
        .collect();
    let centres: Vec<[f64; 2]> = curves.iter().map(|c| centroid(c)).collect();
    let mut found = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let apart = (centres[i][0] - centres[j][0]).hypot(centres[i][1] - centres[j][1]);
            if apart < 0.25 * extent {
                continue;
            }
            if let Ok(d) = shape_similarity(&curves[i], &curves[j]) {
                if d < THRESHOLD {
                    found.push(ShapePair {
                        a: ids[i].clone(),
                        b: ids[j].clone(),
                        dissimilarity: d,
                    });
                }
            }
        }
    }
    found.sort_by(|x, y| x.dissimilarity.total_cmp(&y.dissimilarity));
    found.truncate(limit);
    found
}
