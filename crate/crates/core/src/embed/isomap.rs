use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::mds::{classical_mds, Mds};
use super::EmbedError;
use crate::distance::{DistanceMatrix, DistanceRows, PairwiseDistances};
use crate::exec::Execution;
use crate::metrics::Metric;

/// Undirected k-nearest-neighbour graph as adjacency lists `(neighbour, length)`.
pub fn knn_graph(
    distances: &dyn DistanceRows,
    k: usize,
    exec: Execution,
) -> Vec<Vec<(usize, f64)>> {
    let n = distances.len();
    let nearest = exec.map_range(n, |i| {
        let mut row = vec![0.0; n];
        distances.fill_row(i, &mut row);
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        order.truncate(k);
        order.into_iter().map(|j| (j, row[j])).collect::<Vec<_>>()
    });
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, list) in nearest.into_iter().enumerate() {
        for (j, d) in list {
            adj[i].push((j, d));
            adj[j].push((i, d));
        }
    }
    for list in &mut adj {
        list.sort_by_key(|e| e.0);
        list.dedup_by_key(|e| e.0);
    }
    adj
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::from([Entry(0.0, source)]);
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

fn component_sizes(adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let mut seen = vec![false; adj.len()];
    let mut sizes = Vec::new();
    for s in 0..adj.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut size = 0;
        while let Some(u) = stack.pop() {
            size += 1;
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// All-pairs shortest paths over the neighbour graph.
pub fn geodesic_distances(
    adj: &[Vec<(usize, f64)>],
    exec: Execution,
) -> Result<DistanceMatrix, EmbedError> {
    let sizes = component_sizes(adj);
    if sizes.len() > 1 {
        return Err(EmbedError::Disconnected(sizes));
    }
    let n = adj.len();
    let rows = exec.map_range(n, |s| dijkstra(adj, s));
    let mut entries = Vec::with_capacity(n * n);
    for r in &rows {
        entries.extend_from_slice(r);
    }
    // Path sums in opposite directions may differ in the last bit.
    for i in 0..n {
        for j in i + 1..n {
            let v = entries[i * n + j].min(entries[j * n + i]);
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix::new(n, entries)?)
}

/// Isomap over a distance source. Points at distance zero from an earlier
/// point are merged before the graph is built and share its coordinates.
pub fn isomap_from_distances(
    distances: &dyn DistanceRows,
    k: usize,
    dims: usize,
    exec: Execution,
) -> Result<Mds, EmbedError> {
    let n = distances.len();
    let firsts = exec.map_range(n, |i| {
        let mut row = vec![0.0; n];
        distances.fill_row(i, &mut row);
        row[..i].iter().position(|&d| d == 0.0).unwrap_or(i)
    });
    let mut reps = Vec::new();
    let mut slot = vec![0; n];
    for i in 0..n {
        if firsts[i] == i {
            slot[i] = reps.len();
            reps.push(i);
        } else {
            slot[i] = slot[firsts[i]];
        }
    }
    let sub = DistanceMatrix::materialize(
        &Subset {
            inner: distances,
            indices: &reps,
        },
        exec,
    );
    let adj = knn_graph(&sub, k, exec);
    let geo = geodesic_distances(&adj, exec)?;
    let mut m = classical_mds(&geo, dims, exec)?;
    if reps.len() < n {
        let expanded: Vec<f64> = slot
            .iter()
            .flat_map(|&s| m.coords[s * dims..(s + 1) * dims].to_vec())
            .collect();
        m.coords = expanded;
        m.notes.push(format!("{n} points, {} distinct", reps.len()));
    }
    Ok(m)
}

/// Isomap on Euclidean distances between the rows of an `n x d` matrix.
pub fn isomap(
    vectors: &[f64],
    d: usize,
    k: usize,
    dims: usize,
    exec: Execution,
) -> Result<Mds, EmbedError> {
    let dist = PairwiseDistances::from_real(Metric::Euclidean, vectors.to_vec(), d)?;
    isomap_from_distances(&dist, k, dims, exec)
}

struct Subset<'a> {
    inner: &'a dyn DistanceRows,
    indices: &'a [usize],
}

impl DistanceRows for Subset<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        let mut full = vec![0.0; self.inner.len()];
        self.inner.fill_row(self.indices[i], &mut full);
        for (o, &j) in out.iter_mut().zip(self.indices) {
            *o = full[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_graph_reduces_to_mds() {
        let flat: Vec<f64> = (0..15)
            .flat_map(|i| {
                let t = i as f64;
                [t.cos() * 2.0, (t * 1.3).sin(), t * 0.1]
            })
            .collect();
        let iso = isomap(&flat, 3, 14, 2, Execution::Sequential).unwrap();
        let d = DistanceMatrix::euclidean_from_points(&flat, 3);
        let mds = classical_mds(&d, 2, Execution::Sequential).unwrap();
        for (a, b) in iso.coords.iter().zip(&mds.coords) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn single_neighbour_disconnects_generic_points() {
        let flat = [0.0, 0.0, 1.0, 0.0, 10.0, 0.0, 11.5, 0.0];
        match isomap(&flat, 2, 1, 2, Execution::Sequential) {
            Err(EmbedError::Disconnected(sizes)) => assert_eq!(sizes, vec![2, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn curve_order_is_preserved() {
        // Points along a spiral arc: geodesic order = parameter order.
        let n = 60;
        let flat: Vec<f64> = (0..n)
            .flat_map(|i| {
                let t = 1.0 + i as f64 * 0.08;
                [t * t.cos(), t * t.sin()]
            })
            .collect();
        let m = isomap(&flat, 2, 4, 2, Execution::Sequential).unwrap();
        let first: Vec<f64> = m.pairs().iter().map(|c| c[0]).collect();
        let increasing = first.windows(2).all(|w| w[1] > w[0]);
        let decreasing = first.windows(2).all(|w| w[1] < w[0]);
        assert!(increasing || decreasing);
    }

    #[test]
    fn duplicates_share_coordinates() {
        let flat = [0.0, 0.0, 1.0, 0.2, 1.0, 0.2, 2.0, 0.1, 3.0, 0.5];
        let m = isomap(&flat, 2, 2, 2, Execution::Sequential).unwrap();
        let c = m.pairs();
        assert_eq!(c[1], c[2]);
    }
}
