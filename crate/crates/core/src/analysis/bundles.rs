use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::clusters::ClusterLabeling;
use super::AnalysisError;

/// One visit of a trajectory to a cluster: positions of its first and last
/// point inside the cluster during that visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub cluster: usize,
    pub first: usize,
    pub last: usize,
}

/// Cluster visits of one path: noise dropped, consecutive repeats merged.
pub fn visit_sequence(labels: &[Option<usize>], path: &[usize]) -> Vec<Visit> {
    let mut out: Vec<Visit> = Vec::new();
    for (pos, &g) in path.iter().enumerate() {
        let Some(c) = labels[g] else { continue };
        match out.last_mut() {
            Some(v) if v.cluster == c => v.last = pos,
            _ => out.push(Visit {
                cluster: c,
                first: pos,
                last: pos,
            }),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMember {
    /// Index into the analysed paths.
    pub trajectory: usize,
    pub id: String,
    pub direction: Direction,
    /// Steps from leaving shared cluster `k` to entering shared cluster `k + 1`
    /// (in the bundle's cluster order); 1 means a direct transition.
    pub steps: Vec<usize>,
}

impl BundleMember {
    pub fn total_steps(&self) -> usize {
        self.steps.iter().sum()
    }
}

/// Trajectories sharing a run of consecutive cluster visits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleDescriptor {
    pub clusters: Vec<usize>,
    pub members: Vec<BundleMember>,
}

impl BundleDescriptor {
    pub fn member(&self, trajectory: usize) -> Option<&BundleMember> {
        self.members.iter().find(|m| m.trajectory == trajectory)
    }

    pub fn reversed_members(&self) -> usize {
        self.members
            .iter()
            .filter(|m| m.direction == Direction::Reverse)
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Velocity {
    AFaster,
    BFaster,
    Equal,
}

fn canonical(window: &[usize]) -> (Vec<usize>, Direction) {
    let rev: Vec<usize> = window.iter().rev().copied().collect();
    if rev.as_slice() < window {
        (rev, Direction::Reverse)
    } else {
        (window.to_vec(), Direction::Forward)
    }
}

/// First occurrence of a pattern in one trajectory.
#[derive(Clone, Copy)]
struct Occurrence {
    start: usize,
    direction: Direction,
}

type Level = BTreeMap<Vec<usize>, BTreeMap<usize, Occurrence>>;

/// Bundles over the given paths (lists of point indices into `labeling`).
///
/// Every contiguous run of at least two cluster visits that occurs in two or
/// more paths (in either direction) is a candidate; a candidate is reported
/// unless a one-cluster extension of it is shared by exactly the same paths.
pub fn detect_bundles(
    labeling: &ClusterLabeling,
    paths: &[Vec<usize>],
    ids: &[String],
) -> Vec<BundleDescriptor> {
    let visits: Vec<Vec<Visit>> = paths
        .iter()
        .map(|p| visit_sequence(&labeling.labels, p))
        .collect();
    let clusters: Vec<Vec<usize>> = visits
        .iter()
        .map(|v| v.iter().map(|x| x.cluster).collect())
        .collect();
    let mut levels: Vec<Level> = Vec::new();
    let mut len = 2;
    loop {
        let previous = levels.last();
        let mut level: Level = BTreeMap::new();
        for (t, seq) in clusters.iter().enumerate() {
            if seq.len() < len {
                continue;
            }
            for start in 0..=seq.len() - len {
                let window = &seq[start..start + len];
                if let Some(prev) = previous {
                    let left = canonical(&window[..len - 1]).0;
                    let right = canonical(&window[1..]).0;
                    if !prev.contains_key(&left) || !prev.contains_key(&right) {
                        continue;
                    }
                }
                let (key, direction) = canonical(window);
                level
                    .entry(key)
                    .or_default()
                    .entry(t)
                    .or_insert(Occurrence { start, direction });
            }
        }
        level.retain(|_, occ| occ.len() >= 2);
        if level.is_empty() {
            break;
        }
        levels.push(level);
        len += 1;
    }
    let mut maximal: Vec<BTreeSet<Vec<usize>>> =
        levels.iter().map(|l| l.keys().cloned().collect()).collect();
    for k in 1..levels.len() {
        for (key, occ) in &levels[k] {
            let members: BTreeSet<usize> = occ.keys().copied().collect();
            for sub in [&key[..key.len() - 1], &key[1..]] {
                let sub = canonical(sub).0;
                if let Some(sub_occ) = levels[k - 1].get(&sub) {
                    if sub_occ.keys().copied().collect::<BTreeSet<_>>() == members {
                        maximal[k - 1].remove(&sub);
                    }
                }
            }
        }
    }
    let mut bundles = Vec::new();
    for (k, level) in levels.iter().enumerate() {
        for (key, occ) in level {
            if !maximal[k].contains(key) {
                continue;
            }
            let members = occ
                .iter()
                .map(|(&t, o)| {
                    let v = &visits[t];
                    let span = key.len();
                    // Visits in the bundle's cluster order.
                    let ordered: Vec<Visit> = match o.direction {
                        Direction::Forward => v[o.start..o.start + span].to_vec(),
                        Direction::Reverse => {
                            v[o.start..o.start + span].iter().rev().copied().collect()
                        }
                    };
                    let steps = ordered
                        .windows(2)
                        .map(|w| match o.direction {
                            Direction::Forward => w[1].first - w[0].last,
                            Direction::Reverse => w[0].first - w[1].last,
                        })
                        .collect();
                    BundleMember {
                        trajectory: t,
                        id: ids.get(t).cloned().unwrap_or_else(|| t.to_string()),
                        direction: o.direction,
                        steps,
                    }
                })
                .collect();
            bundles.push(BundleDescriptor {
                clusters: key.clone(),
                members,
            });
        }
    }
    bundles.sort_by(|a, b| {
        b.members
            .len()
            .cmp(&a.members.len())
            .then(b.clusters.len().cmp(&a.clusters.len()))
            .then(a.clusters.cmp(&b.clusters))
    });
    bundles
}

/// Compares how many steps two bundle members need from cluster `x` to `y`.
pub fn compare_velocity(
    bundle: &BundleDescriptor,
    member_a: usize,
    member_b: usize,
    x: usize,
    y: usize,
) -> Result<Velocity, AnalysisError> {
    let a = bundle
        .member(member_a)
        .ok_or(AnalysisError::NotInBundle(member_a))?;
    let b = bundle
        .member(member_b)
        .ok_or(AnalysisError::NotInBundle(member_b))?;
    let pos = |c: usize| {
        bundle
            .clusters
            .iter()
            .position(|&k| k == c)
            .ok_or(AnalysisError::ClusterNotShared(c))
    };
    let (px, py) = (pos(x)?, pos(y)?);
    if px == py {
        return Err(AnalysisError::Degenerate(
            "velocity needs two distinct clusters".into(),
        ));
    }
    let (lo, hi) = (px.min(py), px.max(py));
    let sa: usize = a.steps[lo..hi].iter().sum();
    let sb: usize = b.steps[lo..hi].iter().sum();
    Ok(match sa.cmp(&sb) {
        std::cmp::Ordering::Less => Velocity::AFaster,
        std::cmp::Ordering::Greater => Velocity::BFaster,
        std::cmp::Ordering::Equal => Velocity::Equal,
    })
}

/// Shared clusters visited by paths, with the number of distinct paths per cluster.
pub fn cluster_traffic(labeling: &ClusterLabeling, paths: &[Vec<usize>]) -> HashMap<usize, usize> {
    let mut out = HashMap::new();
    for p in paths {
        let set: BTreeSet<usize> = p.iter().filter_map(|&g| labeling.labels[g]).collect();
        for c in set {
            *out.entry(c).or_insert(0) += 1;
        }
    }
    out
}
