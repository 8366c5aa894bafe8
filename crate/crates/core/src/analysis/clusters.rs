use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Flat density clustering of embedded points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    /// Cluster id per point, `None` for noise. Ids run from 0.
    pub labels: Vec<Option<usize>>,
    pub clusters: usize,
    pub radius: f64,
    pub min_points: usize,
}

impl ClusterLabeling {
    pub fn noise(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Point indices of each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }
}

struct Grid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn key(&self, p: [f64; 2]) -> (i64, i64) {
        (
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
        )
    }

    fn new(points: &[[f64; 2]], cell: f64) -> Self {
        let mut g = Grid {
            cell,
            cells: HashMap::new(),
        };
        for (i, &p) in points.iter().enumerate() {
            let k = g.key(p);
            g.cells.entry(k).or_default().push(i);
        }
        g
    }

    fn within(&self, points: &[[f64; 2]], i: usize, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let p = points[i];
        let (cx, cy) = self.key(p);
        let r2 = radius * radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &j in list {
                        let q = points[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 <= r2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
    }
}

/// Density clustering: a point is core when at least `min_points` points
/// (itself included) lie within `radius`; core points within `radius` of each
/// other share a cluster; other points within `radius` of a core point join
/// the cluster of the nearest such core point; the rest is noise.
///
/// The result depends only on the point set, not on its order: clusters are
/// numbered by their smallest member index and border ties are broken by the
/// core points' coordinates.
pub fn density_clusters(coords: &[[f64; 2]], radius: f64, min_points: usize) -> ClusterLabeling {
    assert!(radius > 0.0, "radius must be positive");
    // Coincident points are handled once, with a weight.
    let mut slot: HashMap<(u64, u64), usize> = HashMap::new();
    let mut unique: Vec<[f64; 2]> = Vec::new();
    let mut weight: Vec<usize> = Vec::new();
    let mut unique_of = Vec::with_capacity(coords.len());
    for &p in coords {
        let key = (p[0].to_bits(), p[1].to_bits());
        let u = *slot.entry(key).or_insert_with(|| {
            unique.push(p);
            weight.push(0);
            unique.len() - 1
        });
        weight[u] += 1;
        unique_of.push(u);
    }
    let grid = Grid::new(&unique, radius);
    let m = unique.len();
    let mut buf = Vec::new();
    let mut neighbours: Vec<Vec<usize>> = Vec::with_capacity(m);
    let mut core = vec![false; m];
    for u in 0..m {
        grid.within(&unique, u, radius, &mut buf);
        core[u] = buf.iter().map(|&v| weight[v]).sum::<usize>() >= min_points;
        neighbours.push(buf.clone());
    }
    // Connected components of core points.
    let mut comp = vec![usize::MAX; m];
    let mut components = 0;
    for s in 0..m {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        comp[s] = components;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &v in &neighbours[u] {
                if core[v] && comp[v] == usize::MAX {
                    comp[v] = components;
                    stack.push(v);
                }
            }
        }
        components += 1;
    }
    let mut assigned = comp.clone();
    for u in 0..m {
        if core[u] {
            continue;
        }
        let p = unique[u];
        let best = neighbours[u]
            .iter()
            .filter(|&&v| core[v])
            .min_by(|&&a, &&b| {
                let da = (p[0] - unique[a][0]).powi(2) + (p[1] - unique[a][1]).powi(2);
                let db = (p[0] - unique[b][0]).powi(2) + (p[1] - unique[b][1]).powi(2);
                da.total_cmp(&db)
                    .then(unique[a][0].total_cmp(&unique[b][0]))
                    .then(unique[a][1].total_cmp(&unique[b][1]))
            });
        if let Some(&v) = best {
            assigned[u] = comp[v];
        }
    }
    // Renumber clusters by their smallest original point index.
    let mut order = Vec::with_capacity(components);
    let mut renumber = vec![usize::MAX; components];
    for &u in &unique_of {
        let c = assigned[u];
        if c != usize::MAX && renumber[c] == usize::MAX {
            renumber[c] = order.len();
            order.push(c);
        }
    }
    let labels = unique_of
        .iter()
        .map(|&u| {
            let c = assigned[u];
            (c != usize::MAX).then(|| renumber[c])
        })
        .collect();
    ClusterLabeling {
        labels,
        clusters: order.len(),
        radius,
        min_points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blob(cx: f64, cy: f64, n: usize, spread: f64) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 2.399;
                let r = spread * ((i + 1) as f64 / n as f64).sqrt();
                [cx + r * a.cos(), cy + r * a.sin()]
            })
            .collect()
    }

    #[test]
    fn two_blobs_two_clusters() {
        let mut pts = blob(0.0, 0.0, 20, 1.0);
        pts.extend(blob(10.0, 0.0, 20, 1.0));
        let l = density_clusters(&pts, 1.0, 5);
        assert_eq!(l.clusters, 2);
        assert_eq!(l.noise(), 0);
        assert!(l.labels[..20].iter().all(|&c| c == Some(0)));
        assert!(l.labels[20..].iter().all(|&c| c == Some(1)));
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let l = density_clusters(&[[3.0, 3.0]; 12], 0.1, 5);
        assert_eq!(l.clusters, 1);
        assert_eq!(l.noise(), 0);
    }

    #[test]
    fn sparse_points_are_noise() {
        let pts: Vec<[f64; 2]> = (0..30).map(|i| [i as f64, (i * 7 % 5) as f64]).collect();
        let l = density_clusters(&pts, 0.01, 2);
        assert_eq!(l.clusters, 0);
        assert_eq!(l.noise(), 30);
    }

    fn canonical(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if let Some(c) = l {
                groups.entry(*c).or_default().push(i);
            }
        }
        let mut g: Vec<Vec<usize>> = groups.into_values().collect();
        g.sort();
        g
    }

    proptest! {
        #[test]
        fn invariant_under_reordering(
            pts in proptest::collection::vec((0u8..40, 0u8..40), 5..80),
            shift in 1usize..79,
        ) {
            let coords: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x as f64 * 0.25, y as f64 * 0.25]).collect();
            let n = coords.len();
            let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
            let mut seen = vec![false; n];
            let perm: Vec<usize> = perm.into_iter().filter(|&p| !std::mem::replace(&mut seen[p], true)).collect();
            prop_assume!(perm.len() == n);
            let shuffled: Vec<[f64; 2]> = perm.iter().map(|&p| coords[p]).collect();
            let a = density_clusters(&coords, 1.0, 3);
            let b = density_clusters(&shuffled, 1.0, 3);
            let mut back = vec![None; n];
            for (k, &p) in perm.iter().enumerate() {
                back[p] = b.labels[k];
            }
            prop_assert_eq!(canonical(&a.labels), canonical(&back));
        }
    }
}
