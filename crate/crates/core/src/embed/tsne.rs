//! Exact t-SNE.
//!
//! Points may carry a multiplicity: a unit of weight `m` behaves exactly like
//! `m` coincident copies of one point. With PCA initialisation duplicates start
//! (and therefore stay) coincident, so embedding the distinct states with their
//! counts gives the same layout as embedding every copy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::mds::classical_mds;
use super::pca::pca;
use super::perplexity::calibrate_row;
use super::{
    Coords, Diagnostics, EmbedError, EmbeddedDataset, EmbeddingConfig, Flow, Init, ProgressSink,
    Snapshot,
};
use crate::distance::DistanceRows;
use crate::exec::Execution;

const LANES: usize = 8;
const INIT_STD: f64 = 1e-4;

/// Inputs beyond the configuration.
pub struct TsneInput<'a> {
    pub distances: &'a dyn DistanceRows,
    /// Copies represented by each point; `None` means one each.
    pub multiplicity: Option<&'a [f64]>,
    /// Starting layout; computed from the config when `None`.
    pub init: Option<Coords>,
}

/// Symmetrised input affinities `p_ij` between single copies of two points.
#[derive(Clone, Debug, PartialEq)]
pub enum JointProbabilities {
    Dense {
        n: usize,
        values: Vec<f64>,
    },
    Sparse {
        offsets: Vec<usize>,
        columns: Vec<u32>,
        values: Vec<f64>,
    },
}

impl JointProbabilities {
    /// Calibrates every row to `perplexity` and symmetrises.
    ///
    /// Rows whose duplicates alone exceed the perplexity cannot reach it; they
    /// use the sharpest kernel and are counted in the returned notes.
    pub fn build(
        distances: &dyn DistanceRows,
        multiplicity: &[f64],
        perplexity: f64,
        dense_limit: usize,
        exec: Execution,
    ) -> Result<(Self, Vec<String>), EmbedError> {
        let n = distances.len();
        let total: f64 = multiplicity.iter().sum();
        let mut notes = Vec::new();
        let row_counts = |a: usize, b: usize| multiplicity[b] - if a == b { 1.0 } else { 0.0 };
        if n <= dense_limit {
            let rows = exec.map_range(n, |a| {
                let mut row = vec![0.0; n];
                distances.fill_row(a, &mut row);
                let cand: Vec<usize> = (0..n).filter(|&b| row_counts(a, b) > 0.0).collect();
                let sq: Vec<f64> = cand.iter().map(|&b| row[b] * row[b]).collect();
                let counts: Vec<f64> = cand.iter().map(|&b| row_counts(a, b)).collect();
                let (p, cal) = calibrate_row(&sq, &counts, perplexity, a)?;
                row.iter_mut().for_each(|v| *v = 0.0);
                for (&b, pb) in cand.iter().zip(p) {
                    row[b] = pb;
                }
                Ok::<_, EmbedError>((row, cal.clamped))
            });
            let mut values = Vec::with_capacity(n * n);
            let mut clamped = 0;
            for r in rows {
                let (row, c) = r?;
                values.extend_from_slice(&row);
                clamped += c as usize;
            }
            let scale = 1.0 / (2.0 * total);
            for a in 0..n {
                for b in a..n {
                    let v = (values[a * n + b] + values[b * n + a]) * scale;
                    values[a * n + b] = v;
                    values[b * n + a] = v;
                }
            }
            if clamped > 0 {
                notes.push(format!(
                    "{clamped} row(s) could not reach perplexity {perplexity}"
                ));
            }
            return Ok((JointProbabilities::Dense { n, values }, notes));
        }
        let wanted = (3.0 * perplexity).ceil().min(total - 1.0);
        let rows = exec.map_range(n, |a| {
            let mut row = vec![0.0; n];
            distances.fill_row(a, &mut row);
            let mut order: Vec<usize> = (0..n).filter(|&b| row_counts(a, b) > 0.0).collect();
            let by_distance = |x: &usize, y: &usize| row[*x].total_cmp(&row[*y]).then(x.cmp(y));
            let head = wanted as usize + 1;
            if head < order.len() {
                order.select_nth_unstable_by(head, by_distance);
            }
            let mut sorted = head.min(order.len());
            order[..sorted].sort_by(by_distance);
            let mut cand: Vec<usize> = Vec::new();
            let mut seen = 0.0;
            let mut k = 0;
            while k < order.len() {
                let flat = cand
                    .first()
                    .is_none_or(|&c| row[c] == row[*cand.last().expect("non-empty")]);
                if seen >= wanted && !flat {
                    break;
                }
                if k == sorted {
                    order[sorted..].sort_by(by_distance);
                    sorted = order.len();
                }
                let b = order[k];
                seen += row_counts(a, b);
                cand.push(b);
                k += 1;
            }
            let sq: Vec<f64> = cand.iter().map(|&b| row[b] * row[b]).collect();
            let counts: Vec<f64> = cand.iter().map(|&b| row_counts(a, b)).collect();
            let (p, cal) = calibrate_row(&sq, &counts, perplexity.min(seen), a)?;
            Ok::<_, EmbedError>((cand, p, cal.clamped))
        });
        let mut triplets: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        let mut clamped = 0;
        for (a, r) in rows.into_iter().enumerate() {
            let (cand, p, c) = r?;
            clamped += c as usize;
            for (b, pb) in cand.into_iter().zip(p) {
                triplets[a].push((b as u32, pb));
                triplets[b].push((a as u32, pb));
            }
        }
        let scale = 1.0 / (2.0 * total);
        let mut offsets = vec![0];
        let mut columns = Vec::new();
        let mut values = Vec::new();
        for mut row in triplets {
            row.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
            let mut i = 0;
            while i < row.len() {
                let col = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == col {
                    v += row[i].1;
                    i += 1;
                }
                columns.push(col);
                values.push(v * scale);
            }
            offsets.push(columns.len());
        }
        notes.push(format!(
            "input affinities restricted to the {wanted} nearest neighbours of each point"
        ));
        if clamped > 0 {
            notes.push(format!(
                "{clamped} row(s) could not reach perplexity {perplexity}"
            ));
        }
        Ok((
            JointProbabilities::Sparse {
                offsets,
                columns,
                values,
            },
            notes,
        ))
    }

    pub fn len(&self) -> usize {
        match self {
            JointProbabilities::Dense { n, .. } => *n,
            JointProbabilities::Sparse { offsets, .. } => offsets.len() - 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visits the stored entries `(column, p)` of row `a`.
    fn for_row(&self, a: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            JointProbabilities::Dense { n, values } => {
                for (b, &p) in values[a * n..(a + 1) * n].iter().enumerate() {
                    if p > 0.0 {
                        f(b, p);
                    }
                }
            }
            JointProbabilities::Sparse {
                offsets,
                columns,
                values,
            } => {
                for k in offsets[a]..offsets[a + 1] {
                    f(columns[k] as usize, values[k]);
                }
            }
        }
    }
}

struct Layout {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

/// Per-row sums of `m_b k_ab`, `m_b k_ab^2 (y_a - y_b)` over all points.
fn repulsion_row(l: &Layout, a: usize) -> (f64, f64, f64) {
    let (xa, ya) = (l.xs[a], l.ys[a]);
    let mut z = [0.0; LANES];
    let mut rx = [0.0; LANES];
    let mut ry = [0.0; LANES];
    let n = l.xs.len();
    let body = n / LANES * LANES;
    for ((xc, yc), mc) in l.xs[..body]
        .chunks_exact(LANES)
        .zip(l.ys[..body].chunks_exact(LANES))
        .zip(l.ms[..body].chunks_exact(LANES))
    {
        for i in 0..LANES {
            let dx = xa - xc[i];
            let dy = ya - yc[i];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            let mk = mc[i] * k;
            z[i] += mk;
            rx[i] += mk * k * dx;
            ry[i] += mk * k * dy;
        }
    }
    let (mut zs, mut rxs, mut rys) = (0.0, 0.0, 0.0);
    for i in 0..LANES {
        zs += z[i];
        rxs += rx[i];
        rys += ry[i];
    }
    for b in body..n {
        let dx = xa - l.xs[b];
        let dy = ya - l.ys[b];
        let k = 1.0 / (1.0 + dx * dx + dy * dy);
        let mk = l.ms[b] * k;
        zs += mk;
        rxs += mk * k * dx;
        rys += mk * k * dy;
    }
    (zs, rxs, rys)
}

fn attraction_row(p: &JointProbabilities, l: &Layout, a: usize) -> (f64, f64) {
    let (xa, ya) = (l.xs[a], l.ys[a]);
    let (mut ax, mut ay) = (0.0, 0.0);
    p.for_row(a, |b, pab| {
        let dx = xa - l.xs[b];
        let dy = ya - l.ys[b];
        let w = pab * l.ms[b] / (1.0 + dx * dx + dy * dy);
        ax += w * dx;
        ay += w * dy;
    });
    (ax, ay)
}

/// KL gradient per point (for one copy), with `p` scaled by `exaggeration`.
fn gradient(
    p: &JointProbabilities,
    l: &Layout,
    exaggeration: f64,
    exec: Execution,
) -> Vec<[f64; 2]> {
    let n = l.xs.len();
    let rows = exec.map_range(n, |a| {
        let (z, rx, ry) = repulsion_row(l, a);
        let (ax, ay) = attraction_row(p, l, a);
        (z, rx, ry, ax, ay)
    });
    let mut z_total = 0.0;
    for (a, r) in rows.iter().enumerate() {
        z_total += l.ms[a] * (r.0 - 1.0);
    }
    rows.iter()
        .map(|&(_, rx, ry, ax, ay)| {
            [
                4.0 * (exaggeration * ax - rx / z_total),
                4.0 * (exaggeration * ay - ry / z_total),
            ]
        })
        .collect()
}

/// `KL(P || Q)` over all copies.
fn kl_divergence(p: &JointProbabilities, l: &Layout, exec: Execution) -> f64 {
    let n = l.xs.len();
    let rows = exec.map_range(n, |a| {
        let (z, _, _) = repulsion_row(l, a);
        let mut s = 0.0;
        p.for_row(a, |b, pab| {
            let dx = l.xs[a] - l.xs[b];
            let dy = l.ys[a] - l.ys[b];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            let copies = l.ms[b] - if a == b { 1.0 } else { 0.0 };
            s += copies * pab * (pab / k).ln();
        });
        (z, s)
    });
    let mut z_total = 0.0;
    let mut kl = 0.0;
    let mut mass = 0.0;
    for (a, (z, s)) in rows.into_iter().enumerate() {
        z_total += l.ms[a] * (z - 1.0);
        kl += l.ms[a] * s;
    }
    // sum_ij p_ij ln(p_ij / (k_ij / Z)) = sum p ln(p / k) + ln Z * sum p
    p_mass(p, l, &mut mass);
    kl + mass * z_total.ln()
}

fn p_mass(p: &JointProbabilities, l: &Layout, mass: &mut f64) {
    for a in 0..l.xs.len() {
        p.for_row(a, |b, pab| {
            let copies = l.ms[b] - if a == b { 1.0 } else { 0.0 };
            *mass += l.ms[a] * copies * pab;
        });
    }
}

/// PCA layout rescaled so the first coordinate has standard deviation 1e-4.
pub(crate) fn pca_init(vectors: &[f64], n: usize, d: usize) -> Result<Coords, EmbedError> {
    let coords = match pca(vectors, n, d, 2) {
        Ok(fit) => super::to_pairs(&fit.coords),
        Err(EmbedError::Degenerate(_)) if n >= 2 => {
            let fit = pca(vectors, n, d, 1)?;
            fit.coords.iter().map(|&x| [x, 0.0]).collect()
        }
        Err(e) => return Err(e),
    };
    Ok(rescale(coords))
}

fn rescale(mut coords: Coords) -> Coords {
    let n = coords.len() as f64;
    let mean = coords.iter().map(|c| c[0]).sum::<f64>() / n;
    let std = (coords.iter().map(|c| (c[0] - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std > 0.0 {
        let s = INIT_STD / std;
        coords.iter_mut().for_each(|c| *c = [c[0] * s, c[1] * s]);
    }
    coords
}

fn random_init(n: usize, seed: u64) -> Coords {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid deviation");
    (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect()
}

/// t-SNE over a plain distance source (every point counted once).
pub fn tsne(
    distances: &dyn DistanceRows,
    config: &EmbeddingConfig,
    exec: Execution,
    sink: &mut dyn ProgressSink,
) -> Result<EmbeddedDataset, EmbedError> {
    tsne_with(
        TsneInput {
            distances,
            multiplicity: None,
            init: None,
        },
        config,
        exec,
        sink,
    )
}

/// t-SNE with optional multiplicities and starting layout.
///
/// A snapshot goes to `sink` after every iteration; [`Flow::Stop`] ends the
/// run and the last snapshot becomes the result.
pub fn tsne_with(
    input: TsneInput<'_>,
    config: &EmbeddingConfig,
    exec: Execution,
    sink: &mut dyn ProgressSink,
) -> Result<EmbeddedDataset, EmbedError> {
    let n = input.distances.len();
    let ones;
    let ms = match input.multiplicity {
        Some(m) => m,
        None => {
            ones = vec![1.0; n];
            &ones
        }
    };
    let total: f64 = ms.iter().sum();
    config.validate(total as usize)?;
    let perplexity = config.perplexity_for(total as usize);
    let (p, mut notes) =
        JointProbabilities::build(input.distances, ms, perplexity, config.dense_limit, exec)?;
    let init = match (input.init, config.init) {
        (Some(c), _) => c,
        (None, Init::Random) => random_init(n, config.seed),
        (None, Init::Pca) => rescale(classical_mds(input.distances, 2, exec)?.pairs()),
    };
    let mut layout = Layout {
        xs: init.iter().map(|c| c[0]).collect(),
        ys: init.iter().map(|c| c[1]).collect(),
        ms: ms.to_vec(),
    };
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut diagnostics = Diagnostics::default();
    let mut last_objective = None;
    let mut coords: Coords = init;
    for it in 0..config.total_iterations {
        let early = it < config.early_iterations;
        let exaggeration = if early {
            config.early_exaggeration
        } else {
            config.main_exaggeration
        };
        let momentum = if early { 0.5 } else { 0.8 };
        let grad = gradient(&p, &layout, exaggeration, exec);
        for a in 0..n {
            for k in 0..2 {
                let g = grad[a][k];
                if !g.is_finite() {
                    return Err(EmbedError::NonFinite(it + 1));
                }
                let gain = &mut gains[a][k];
                *gain = if (g > 0.0) != (update[a][k] > 0.0) {
                    *gain + 0.2
                } else {
                    *gain * 0.8
                };
                *gain = gain.max(0.01);
                update[a][k] = momentum * update[a][k] - config.learning_rate * *gain * g;
            }
            layout.xs[a] += update[a][0];
            layout.ys[a] += update[a][1];
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for a in 0..n {
            cx += ms[a] * layout.xs[a];
            cy += ms[a] * layout.ys[a];
        }
        let (cx, cy) = (cx / total, cy / total);
        layout.xs.iter_mut().for_each(|x| *x -= cx);
        layout.ys.iter_mut().for_each(|y| *y -= cy);
        let done = it + 1;
        if done % config.objective_every == 0
            || done == config.early_iterations
            || done == config.total_iterations
        {
            let kl = kl_divergence(&p, &layout, exec);
            diagnostics.objective.push((done, kl));
            last_objective = Some(kl);
        }
        for (a, c) in coords.iter_mut().enumerate() {
            *c = [layout.xs[a], layout.ys[a]];
        }
        diagnostics.iterations = done;
        let flow = sink.snapshot(&Snapshot {
            iteration: done,
            total: config.total_iterations,
            objective: last_objective,
            coords: &coords,
        });
        if flow == Flow::Stop {
            diagnostics.cancelled = true;
            break;
        }
    }
    notes.insert(
        0,
        format!(
            "perplexity {perplexity:.4}, momentum 0.5 then 0.8, learning rate {}",
            config.learning_rate
        ),
    );
    diagnostics.notes = notes;
    Ok(EmbeddedDataset {
        coords,
        config: config.clone(),
        diagnostics,
    })
}

/// Analytic versus numerical KL gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    /// `max |analytic - numeric|` over all coordinates, divided by the largest
    /// analytic component.
    pub max_relative_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

/// Compares the analytic gradient at `coords` with central differences of step `h`.
pub fn gradient_check(
    distances: &dyn DistanceRows,
    perplexity: f64,
    coords: &[[f64; 2]],
    h: f64,
) -> Result<GradientCheck, EmbedError> {
    let n = distances.len();
    let ms = vec![1.0; n];
    let (p, _) = JointProbabilities::build(
        distances,
        &ms,
        perplexity,
        usize::MAX,
        Execution::Sequential,
    )?;
    let mut layout = Layout {
        xs: coords.iter().map(|c| c[0]).collect(),
        ys: coords.iter().map(|c| c[1]).collect(),
        ms,
    };
    let analytic = gradient(&p, &layout, 1.0, Execution::Sequential);
    let mut max_diff = 0.0f64;
    let mut max_a = 0.0f64;
    let mut max_n = 0.0f64;
    for a in 0..n {
        for k in 0..2 {
            fn coord(l: &mut Layout, a: usize, k: usize) -> &mut f64 {
                if k == 0 {
                    &mut l.xs[a]
                } else {
                    &mut l.ys[a]
                }
            }
            let orig = *coord(&mut layout, a, k);
            *coord(&mut layout, a, k) = orig + h;
            let up = kl_divergence(&p, &layout, Execution::Sequential);
            *coord(&mut layout, a, k) = orig - h;
            let down = kl_divergence(&p, &layout, Execution::Sequential);
            *coord(&mut layout, a, k) = orig;
            let numeric = (up - down) / (2.0 * h);
            max_diff = max_diff.max((analytic[a][k] - numeric).abs());
            max_a = max_a.max(analytic[a][k].abs());
            max_n = max_n.max(numeric.abs());
        }
    }
    Ok(GradientCheck {
        max_relative_error: if max_a > 0.0 {
            max_diff / max_a
        } else {
            max_diff
        },
        max_abs_analytic: max_a,
        max_abs_numeric: max_n,
    })
}
