//! One line per acceptance criterion; exits non-zero if any fails.
//! Criterion numbers given as arguments restrict the run to those.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;
use trajspace_cli::pipeline::{self, NnRepresentation};
use trajspace_cli::service::{build_router, AppState, LoadedDataset};
use trajspace_core::analysis::{analyze, shape_similarity, AnalysisConfig, Pattern, Role};
use trajspace_core::distance::DistanceMatrix;
use trajspace_core::embed::{classical_mds, gradient_check, isomap, tsne, NoProgress};
use trajspace_core::geometry::{bounding_diagonal, centroid, procrustes};
use trajspace_core::metrics::{euclidean, hamming_symbols, squared_euclidean_half};
use trajspace_core::{
    embed_dataset, EmbeddingConfig, Encoding, Execution, Init, Metadata, State, StateDataset,
    Trajectory,
};
use trajspace_domains::{chess, rubik, sorting};

type Outcome = Result<String, String>;
type Check = Box<dyn FnOnce() -> Outcome>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.1?}, limit {limit:?}"))
}

fn one_hot_identity() -> Outcome {
    let start = Instant::now();
    let mut pairs = 0usize;
    for n in 1..=4 {
        let perms = sorting::all_permutations(n).map_err(|e| e.to_string())?;
        let vecs: Vec<Vec<f64>> = perms.iter().map(sorting::one_hot_permutation).collect();
        for (p, a) in perms.iter().zip(&vecs) {
            for (q, b) in perms.iter().zip(&vecs) {
                let half = squared_euclidean_half(a, b).map_err(|e| e.to_string())?;
                let ham = hamming_symbols(p.entries(), q.entries()).map_err(|e| e.to_string())?;
                ensure(
                    half == ham as f64,
                    format!("{p:?} vs {q:?}: {half} != {ham}"),
                )?;
                pairs += 1;
            }
        }
    }
    within(start, Duration::from_secs(1))?;
    Ok(format!("{pairs} ordered pairs, n = 1..4, exact equality"))
}

fn bubble_average() -> Outcome {
    let start = Instant::now();
    let perms = sorting::all_permutations(6).map_err(|e| e.to_string())?;
    ensure(perms.len() == 720, "expected 720 permutations")?;
    let swaps: usize = perms
        .iter()
        .map(|p| sorting::bubble_sort_trace(p).steps())
        .sum();
    let bubble_states: usize = perms
        .iter()
        .map(|p| sorting::bubble_sort_trace(p).states.len())
        .sum();
    let quick_states: usize = perms
        .iter()
        .map(|p| sorting::quicksort_trace(p).states.len())
        .sum();
    ensure(
        swaps * 2 == 15 * 720,
        format!("mean swaps {} != 7.5", swaps as f64 / 720.0),
    )?;
    ensure(
        quick_states < bubble_states,
        format!(
            "quicksort mean states {} not below bubble {}",
            quick_states as f64 / 720.0,
            bubble_states as f64 / 720.0
        ),
    )?;
    within(start, Duration::from_secs(5))?;
    Ok(format!(
        "mean swaps {} ; mean recorded states bubble {:.4}, quicksort {:.4}",
        swaps as f64 / 720.0,
        bubble_states as f64 / 720.0,
        quick_states as f64 / 720.0
    ))
}

fn chess_distances() -> Outcome {
    let start = Instant::now();
    let pgn = std::fs::read_to_string(common::fixture("games.pgn")).map_err(|e| e.to_string())?;
    let parsed = chess::parse_pgn(&pgn);
    ensure(
        parsed.games.len() >= 100,
        format!("only {} games parsed", parsed.games.len()),
    )?;
    let enc = chess::encoding();
    let mut half_moves = 0usize;
    let mut kinds = BTreeSet::new();
    for (g, game) in parsed.games.iter().enumerate() {
        let traj = chess::game_trace(game, "g").map_err(|e| e.to_string())?;
        let moves = chess::move_kinds(game).map_err(|e| e.to_string())?;
        let vecs: Vec<Vec<f64>> = traj.points.iter().map(|p| enc.encode(&p.state)).collect();
        for (i, kind) in moves.iter().enumerate() {
            let d = euclidean(&vecs[i], &vecs[i + 1]).map_err(|e| e.to_string())?;
            let expected = kind.distance();
            ensure(
                (d - expected).abs() <= 1e-9,
                format!(
                    "game {g} half-move {}: {:?} at distance {d}, expected {expected}",
                    i + 1,
                    kind
                ),
            )?;
            kinds.insert(kind.name());
            half_moves += 1;
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "{} games, {half_moves} half-moves, kinds seen: {}",
        parsed.games.len(),
        kinds.into_iter().collect::<Vec<_>>().join(" ")
    ))
}

fn rubik_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for k in 0..1000u64 {
        let (a, _) = rubik::scramble(2 * k, rng.random_range(1..30)).map_err(|e| e.to_string())?;
        let (b, _) =
            rubik::scramble(2 * k + 1, rng.random_range(1..30)).map_err(|e| e.to_string())?;
        let (va, vb) = (rubik::encode_cube(&a), rubik::encode_cube(&b));
        let bits = va.iter().zip(&vb).filter(|(x, y)| x != y).count();
        let d = euclidean(&va, &vb).map_err(|e| e.to_string())?;
        worst = worst.max((d - (bits as f64).sqrt()).abs());
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    let solved = rubik::encode_cube(&rubik::Cube::solved());
    let mut quarter = 0;
    for m in rubik::Move::all().filter(|m| m.turns != 2) {
        let d = euclidean(
            &solved,
            &rubik::encode_cube(&rubik::Cube::solved().apply(m)),
        )
        .map_err(|e| e.to_string())?;
        ensure(
            (d - 24f64.sqrt()).abs() <= 1e-9,
            format!("{m:?}: distance {d}"),
        )?;
        quarter += 1;
    }
    Ok(format!(
        "1000 pairs, max deviation {worst:e}; {quarter} quarter turns at sqrt(24)"
    ))
}

fn solvers() -> Outcome {
    let start = Instant::now();
    let (mut beginner, mut advanced, mut solved) = (0usize, 0usize, 0usize);
    for seed in 0..100 {
        let (cube, _) = rubik::scramble(seed, 25).map_err(|e| e.to_string())?;
        let a = rubik::solve_beginner(&cube).map_err(|e| e.to_string())?;
        let b = rubik::solve_advanced(&cube).map_err(|e| e.to_string())?;
        if a.states.last().is_some_and(rubik::Cube::is_solved)
            && b.states.last().is_some_and(rubik::Cube::is_solved)
        {
            solved += 1;
        }
        let ia = a
            .checkpoint(rubik::Stage::SecondLayer)
            .ok_or("beginner trace lacks checkpoint 2")?;
        let ib = b
            .checkpoint(rubik::Stage::SecondLayer)
            .ok_or("advanced trace lacks checkpoint 2")?;
        ensure(
            rubik::first_two_layer_facets(&a.states[ia])
                == rubik::first_two_layer_facets(&b.states[ib]),
            format!("seed {seed}: first two layers differ at checkpoint 2"),
        )?;
        beginner += a.moves.len();
        advanced += b.moves.len();
    }
    ensure(solved == 100, format!("{solved}/100 solved by both"))?;
    ensure(
        advanced < beginner,
        format!("advanced {advanced} moves not below beginner {beginner}"),
    )?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "100/100 solved; mean moves beginner {:.1}, advanced {:.1}; F2L facets equal at checkpoint 2",
        beginner as f64 / 100.0,
        advanced as f64 / 100.0
    ))
}

fn random_points(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn tsne_checks() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let d = DistanceMatrix::euclidean_from_points(&random_points(8, 5, seed), 5);
        let coords: Vec<[f64; 2]> = random_points(8, 2, 100 + seed)
            .chunks(2)
            .map(|c| [c[0], c[1]])
            .collect();
        let g = gradient_check(&d, 3.0, &coords, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(g.max_relative_error);
    }
    ensure(worst < 1e-4, format!("gradient relative error {worst:e}"))?;

    let d = DistanceMatrix::euclidean_from_points(&random_points(60, 10, 7), 10);
    let config = EmbeddingConfig {
        perplexity: Some(10.0),
        total_iterations: 600,
        early_iterations: 200,
        objective_every: 50,
        ..EmbeddingConfig::default()
    };
    let e = tsne(&d, &config, Execution::default(), &mut NoProgress).map_err(|e| e.to_string())?;
    let early = e
        .diagnostics
        .objective
        .iter()
        .find(|(i, _)| *i == 200)
        .map(|p| p.1)
        .ok_or("no objective at 200")?;
    let last = e
        .diagnostics
        .objective
        .last()
        .map(|p| p.1)
        .ok_or("no objective")?;
    ensure(
        last < early,
        format!("KL {last} at end not below {early} after the early phase"),
    )?;

    let ds = sorting::sorting_dataset(6, &[sorting::Algorithm::Bubble, sorting::Algorithm::Quick])
        .map_err(|e| e.to_string())?;
    let config = trajspace_cli::presets::load("sorting-fig2").map_err(|e| e.to_string())?;
    let emb = embed_dataset(&ds, &config, Execution::default(), &mut NoProgress)
        .map_err(|e| e.to_string())?;
    let (radius6, _) = end_spread(&ds, &emb.coords);
    ensure(
        radius6 <= 0.1,
        format!("n = 6 end states lie up to {radius6:.4} of the diagonal from their centroid"),
    )?;

    let ds5 = sorting::sorting_dataset(5, &[sorting::Algorithm::Bubble, sorting::Algorithm::Quick])
        .map_err(|e| e.to_string())?;
    let random = EmbeddingConfig {
        init: Init::Random,
        perplexity: Some(30.0),
        seed: 3,
        ..EmbeddingConfig::default()
    };
    let emb = embed_dataset(&ds5, &random, Execution::default(), &mut NoProgress)
        .map_err(|e| e.to_string())?;
    let (radius5, diameter5) = end_spread(&ds5, &emb.coords);
    ensure(
        radius5 <= 0.1,
        format!(
            "n = 5 per-point end states lie up to {radius5:.4} of the diagonal from their centroid"
        ),
    )?;
    within(start, Duration::from_secs(120))?;
    Ok(format!(
        "gradient error {worst:.2e}; KL {early:.4} -> {last:.4}; end states within {radius6:.2e} of their centroid (n=6, merged); n=5 per point with random init: radius {radius5:.4}, diameter {diameter5:.4} (fractions of the diagonal)"
    ))
}

/// Largest distance of an end state from the end states' centroid, and the
/// largest distance between two end states, both over the bounding-box diagonal.
fn end_spread(ds: &StateDataset, coords: &[[f64; 2]]) -> (f64, f64) {
    let ends: Vec<[f64; 2]> = (0..ds.trajectories().len())
        .map(|t| coords[ds.offsets()[t + 1] - 1])
        .collect();
    let c = centroid(&ends);
    let radius = ends
        .iter()
        .map(|p| (p[0] - c[0]).hypot(p[1] - c[1]))
        .fold(0.0, f64::max);
    let mut diameter = 0.0f64;
    for a in &ends {
        for b in &ends {
            diameter = diameter.max((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    let diag = bounding_diagonal(coords);
    (radius / diag, diameter / diag)
}

fn mds_isomap() -> Outcome {
    let mut worst_mds = 0.0f64;
    let mut worst_iso = 0.0f64;
    for seed in 0..5 {
        let n = 10 + 5 * seed as usize;
        let flat: Vec<f64> = random_points(n, 2, 50 + seed)
            .iter()
            .map(|v| v * 10.0)
            .collect();
        let pts: Vec<[f64; 2]> = flat.chunks(2).map(|c| [c[0], c[1]]).collect();
        let d = DistanceMatrix::euclidean_from_points(&flat, 2);
        let m = classical_mds(&d, 2, Execution::Sequential).map_err(|e| e.to_string())?;
        worst_mds = worst_mds.max(procrustes(&pts, &m.pairs(), true).rms);
        let iso = isomap(&flat, 2, n - 1, 2, Execution::Sequential).map_err(|e| e.to_string())?;
        for (a, b) in iso.coords.iter().zip(&m.coords) {
            worst_iso = worst_iso.max((a - b).abs());
        }
    }
    ensure(
        worst_mds < 1e-9,
        format!("MDS Procrustes residual {worst_mds:e}"),
    )?;
    ensure(
        worst_iso < 1e-9,
        format!("complete-graph Isomap differs from MDS by {worst_iso:e}"),
    )?;
    Ok(format!(
        "5 configurations; MDS residual {worst_mds:.1e}; Isomap vs MDS {worst_iso:.1e}"
    ))
}

/// Dataset whose layout is given directly; states are the coordinates.
fn planted(trajs: &[Vec<[f64; 2]>]) -> (StateDataset, Vec<[f64; 2]>) {
    let trajectories = trajs
        .iter()
        .enumerate()
        .map(|(i, pts)| {
            Trajectory::from_states(
                format!("t{i}"),
                Metadata::new(),
                pts.iter()
                    .map(|p| (State::Real(p.to_vec()), Metadata::new())),
            )
        })
        .collect();
    let ds = StateDataset::build("planted", Encoding::Real { dimension: 2 }, trajectories)
        .expect("valid dataset");
    let coords = trajs.iter().flatten().copied().collect();
    (ds, coords)
}

fn pattern_suite() -> Outcome {
    const TRIALS: u64 = 20;
    let config = AnalysisConfig {
        radius: Some(1.0),
        min_points: 5,
        ..AnalysisConfig::default()
    };
    let mut hits = [0u64; 5];
    for seed in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |c: [f64; 2]| {
            [
                c[0] + rng.random_range(-0.1..0.1),
                c[1] + rng.random_range(-0.1..0.1),
            ]
        };

        // Dense start: ten trajectories leave one spot and fan out.
        let trajs: Vec<Vec<[f64; 2]>> = (0..10)
            .map(|i| {
                let a = i as f64 * 0.6;
                vec![
                    jitter([0.0, 0.0]),
                    [20.0 * a.cos(), 20.0 * a.sin()],
                    [50.0 * a.cos(), 50.0 * a.sin()],
                ]
            })
            .collect();
        let (ds, coords) = planted(&trajs);
        let report = analyze(&ds, &coords, &config).map_err(|e| e.to_string())?;
        if report.endpoint(Role::Start, "all").and_then(|g| g.pattern) == Some(Pattern::P1) {
            hits[0] += 1;
        }

        // Bundle through A, B, C: t0 fast, t1 slow, t2 reversed, t3 elsewhere.
        let (a, b, c) = ([10.0, 0.0], [20.0, 0.0], [30.0, 0.0]);
        let fast = vec![
            jitter(a),
            jitter(a),
            jitter(b),
            jitter(b),
            jitter(c),
            jitter(c),
        ];
        let mut slow = vec![jitter(a), jitter(a)];
        slow.extend([[12.0, 5.0], [14.0, 5.0], [16.0, 5.0]]);
        slow.extend([jitter(b), jitter(b)]);
        slow.extend([[22.0, 5.0], [24.0, 5.0], [26.0, 5.0]]);
        slow.extend([jitter(c), jitter(c)]);
        let reversed = vec![
            jitter(c),
            jitter(c),
            jitter(b),
            jitter(b),
            jitter(a),
            jitter(a),
        ];
        let decoy: Vec<[f64; 2]> = (0..6).map(|k| [3.0 * k as f64, -10.0]).collect();
        let (ds, coords) = planted(&[fast, slow, reversed, decoy]);
        let report = analyze(&ds, &coords, &config).map_err(|e| e.to_string())?;
        let labels = report.labeling.as_ref().ok_or("no labeling")?;
        let cluster_of = |g: usize| labels.labels[g];
        let abc: BTreeSet<Option<usize>> = [cluster_of(0), cluster_of(2), cluster_of(4)].into();
        let bundle = report.bundles.iter().find(|bd| {
            let cs: BTreeSet<Option<usize>> = bd.clusters.iter().map(|&k| Some(k)).collect();
            cs == abc && bd.clusters.len() == 3
        });
        if let Some(bd) = bundle {
            let members: BTreeSet<usize> = bd.members.iter().map(|m| m.trajectory).collect();
            if members == BTreeSet::from([0, 1, 2]) {
                hits[1] += 1;
            }
            let rev = bd.member(2).map(|m| m.direction);
            let fwd = bd.member(0).map(|m| m.direction);
            if rev.is_some()
                && fwd.is_some()
                && rev != fwd
                && report.patterns().contains(&Pattern::P8)
            {
                hits[2] += 1;
            }
            let idx = report
                .bundles
                .iter()
                .position(|x| std::ptr::eq(x, bd))
                .expect("bundle index");
            if report
                .velocities
                .iter()
                .any(|v| v.bundle == idx && v.slower == "t1")
            {
                hits[3] += 1;
            }
        }

        // Shape: a rotated, translated copy far away.
        let base: Vec<[f64; 2]> = (0..12)
            .map(|k| {
                let t = k as f64 * 0.5;
                [t * 3.0, (t * 1.7).sin() * 4.0 + t * t * 0.2]
            })
            .map(&mut jitter)
            .collect();
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, co) = angle.sin_cos();
        let shift = [
            rng.random_range(200.0..300.0),
            rng.random_range(-100.0..100.0),
        ];
        let copy: Vec<[f64; 2]> = base
            .iter()
            .map(|p| {
                [
                    co * p[0] - s * p[1] + shift[0],
                    s * p[0] + co * p[1] + shift[1],
                ]
            })
            .collect();
        let direct = shape_similarity(&base, &copy).map_err(|e| e.to_string())?;
        let (ds, coords) = planted(&[base, copy]);
        let report = analyze(&ds, &coords, &config).map_err(|e| e.to_string())?;
        if direct < 1e-9 && report.shapes.iter().any(|p| p.dissimilarity < 1e-9) {
            hits[4] += 1;
        }
    }
    let names = [
        "P1 start",
        "bundle membership",
        "P8 reversal",
        "P9 slower member",
        "P10 shape",
    ];
    let summary: Vec<String> = names
        .iter()
        .zip(hits)
        .map(|(n, h)| format!("{n} {h}/{TRIALS}"))
        .collect();
    ensure(hits.iter().all(|&h| h == TRIALS), summary.join(", "))?;
    Ok(summary.join(", "))
}

fn end_to_end() -> Outcome {
    let pgn = std::fs::read_to_string(common::fixture("games.pgn")).map_err(|e| e.to_string())?;
    let games = chess::filter_games(
        &chess::parse_pgn(&pgn).games,
        2000,
        &["d3".into(), "Nf3".into()],
    );
    ensure(
        games.len() >= 200,
        format!("only {} games pass the filter", games.len()),
    )?;
    let games: Vec<_> = games.into_iter().take(200).collect();
    let ds = chess::chess_dataset(&games).map_err(|e| e.to_string())?;
    let config = EmbeddingConfig {
        perplexity: Some(30.0),
        total_iterations: 500,
        early_iterations: 125,
        ..EmbeddingConfig::default()
    };
    let e = embed_dataset(&ds, &config, Execution::default(), &mut NoProgress)
        .map_err(|e| e.to_string())?;
    let report = analyze(&ds, &e.coords, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
    let start = report
        .endpoint(Role::Start, "all")
        .ok_or("no start group")?;
    ensure(
        start.pattern == Some(Pattern::P1),
        format!("chess start states {:?}", start.pattern),
    )?;
    let labels = report.labeling.as_ref().ok_or("no labeling")?;
    let start_cluster = labels.labels[0].ok_or("start state is noise")?;
    let from_start = report
        .bundles
        .iter()
        .filter(|b| {
            b.clusters.first() == Some(&start_cluster) || b.clusters.last() == Some(&start_cluster)
        })
        .count();
    ensure(
        from_start >= 2,
        format!("{from_start} bundles leave the start cluster"),
    )?;
    let opening_clusters: BTreeSet<Option<usize>> = ds
        .trajectories()
        .iter()
        .enumerate()
        .map(|(t, _)| labels.labels[ds.offsets()[t] + 1])
        .collect();

    let rds = rubik::rubik_dataset(
        100,
        &[rubik::Method::Beginner, rubik::Method::Advanced],
        1,
        25,
    )
    .map_err(|e| e.to_string())?;
    let rconfig = EmbeddingConfig {
        perplexity: Some(30.0),
        total_iterations: 300,
        early_iterations: 75,
        ..EmbeddingConfig::default()
    };
    let re = embed_dataset(&rds, &rconfig, Execution::default(), &mut NoProgress)
        .map_err(|e| e.to_string())?;
    let rr = analyze(&rds, &re.coords, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
    let rs = rr.endpoint(Role::Start, "all").ok_or("no start group")?;
    let rend = rr.endpoint(Role::End, "all").ok_or("no end group")?;
    ensure(
        rend.pattern == Some(Pattern::P3),
        format!("rubik end states {:?}", rend.pattern),
    )?;
    ensure(
        rs.pattern == Some(Pattern::P4),
        format!("rubik start states {:?}", rs.pattern),
    )?;
    Ok(format!(
        "chess: {} points, start P1 (ratio {:.4}), {from_start} of {} bundles leave the start cluster, first moves land in {} cluster(s); rubik: {} points, start P4 (ratio {:.4}), end P3 (ratio {:.4})",
        ds.len(),
        start.ratio.unwrap_or(f64::NAN),
        report.bundles.len(),
        opening_clusters.len(),
        rds.len(),
        rs.ratio.unwrap_or(f64::NAN),
        rend.ratio.unwrap_or(f64::NAN),
    ))
}

fn csv_round_trips() -> Outcome {
    let pgn = std::fs::read_to_string(common::fixture("games.pgn")).map_err(|e| e.to_string())?;
    let trace = pipeline::synth_trace(3, 10, 5, 2);
    let sets = [
        pipeline::sorting_dataset(5, "bubble,quick").map_err(|e| e.to_string())?,
        pipeline::rubik_dataset(20, "beginner,advanced", 9, 25).map_err(|e| e.to_string())?,
        pipeline::chess_dataset(&pgn, None, "", Some(60))
            .map_err(|e| e.to_string())?
            .dataset,
        pipeline::nn_dataset(&trace, NnRepresentation::Confusion, None, true)
            .map_err(|e| e.to_string())?,
    ];
    let config = EmbeddingConfig {
        total_iterations: 100,
        early_iterations: 50,
        perplexity: Some(10.0),
        ..EmbeddingConfig::default()
    };
    let mut done = Vec::new();
    for ds in &sets {
        let e = embed_dataset(ds, &config, Execution::default(), &mut NoProgress)
            .map_err(|e| e.to_string())?;
        let diffs = common::csv_round_trip(ds, &e.coords);
        ensure(
            diffs.is_empty(),
            format!("{}: {}", ds.representation_name(), diffs.join("; ")),
        )?;
        done.push(format!("{} ({} rows)", ds.representation_name(), ds.len()));
    }
    Ok(format!("bit-exact: {}", done.join(", ")))
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> Result<(StatusCode, Value), String> {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .map_err(|e| e.to_string())?;
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .map_err(|e| e.to_string())?
        .to_bytes();
    Ok((
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    ))
}

async fn poll_until(
    app: &Router,
    id: &str,
    stop: impl Fn(&Value) -> bool,
) -> Result<(Value, Vec<u64>), String> {
    let start = Instant::now();
    let mut seen = Vec::new();
    loop {
        let (_, st) = call(app, "GET", &format!("/jobs/{id}"), None).await?;
        seen.push(st["iteration"].as_u64().ok_or("status without iteration")?);
        if stop(&st) {
            return Ok((st, seen));
        }
        ensure(
            start.elapsed() < Duration::from_secs(120),
            format!("job {id} stalled"),
        )?;
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
}

fn terminal(st: &Value) -> bool {
    matches!(st["state"].as_str(), Some("done" | "cancelled" | "failed"))
}

async fn service_contract() -> Outcome {
    let ds = sorting::sorting_dataset(5, &[sorting::Algorithm::Bubble, sorting::Algorithm::Quick])
        .map_err(|e| e.to_string())?;
    let ends: Vec<usize> = (0..2).map(|t| ds.offsets()[t + 1] - 1).collect();
    let state = AppState::new(
        vec![LoadedDataset::new("sorting", ds, None)],
        EmbeddingConfig::default(),
        Some(1),
        Execution::default(),
    );
    let app = build_router(Arc::new(state));

    let config = json!({ "perplexity": 30.0, "total_iterations": 400, "early_iterations": 100 });
    let (s, job) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "sorting", "config": config })),
    )
    .await?;
    ensure(s == StatusCode::CREATED, format!("job start returned {s}"))?;
    let id = job["id"].as_str().ok_or("no job id")?.to_string();
    let (done, seen) = poll_until(&app, &id, terminal).await?;
    ensure(
        done["state"] == "done",
        format!("job ended {}", done["state"]),
    )?;
    ensure(
        seen.windows(2).all(|w| w[0] <= w[1]),
        "iterations went backwards",
    )?;
    let distinct: BTreeSet<u64> = seen.iter().copied().collect();
    ensure(
        done["iteration"] == 400,
        format!("finished at iteration {}", done["iteration"]),
    )?;

    let long =
        json!({ "perplexity": 30.0, "total_iterations": 1_000_000, "early_iterations": 100 });
    let (_, job) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "sorting", "config": long })),
    )
    .await?;
    let id = job["id"].as_str().ok_or("no job id")?.to_string();
    let (before, _) =
        poll_until(&app, &id, |st| st["iteration"].as_u64().unwrap_or(0) >= 5).await?;
    let (s, _) = call(&app, "DELETE", &format!("/jobs/{id}"), None).await?;
    ensure(s == StatusCode::OK, format!("cancel returned {s}"))?;
    let (cancelled, _) = poll_until(&app, &id, terminal).await?;
    ensure(
        cancelled["state"] == "cancelled",
        format!("cancelled job ended {}", cancelled["state"]),
    )?;
    let kept = cancelled["snapshot"].as_array().map_or(0, Vec::len);
    ensure(
        kept == 1198,
        format!("cancelled job kept {kept} coordinates"),
    )?;
    let it = cancelled["iteration"].as_u64().unwrap_or(0);
    ensure(
        it >= before["iteration"].as_u64().unwrap_or(0) && it < 1_000_000,
        format!("cancelled at iteration {it}"),
    )?;
    let (again, _) = poll_until(&app, &id, terminal).await?;
    ensure(
        again == cancelled,
        "terminal status changed after cancellation",
    )?;

    let (s, fp) = call(
        &app,
        "POST",
        "/fingerprint",
        Some(json!({ "dataset": "sorting", "points": ends })),
    )
    .await?;
    ensure(s == StatusCode::OK, format!("fingerprint returned {s}"))?;
    ensure(
        fp["constant_fraction"] == 1.0,
        format!("fingerprint constant fraction {}", fp["constant_fraction"]),
    )?;
    Ok(format!(
        "done after {} polls ({} distinct iterations, monotone); cancelled at iteration {it} with {kept}-point snapshot; identical-state fingerprint all constant",
        seen.len(),
        distinct.len()
    ))
}

fn main() {
    let criteria: Vec<(&str, Check)> = vec![
        (
            "one-hot squared distance / 2 equals Hamming distance",
            Box::new(one_hot_identity),
        ),
        (
            "bubble sort averages 7.5 swaps on S6, quicksort records fewer states",
            Box::new(bubble_average),
        ),
        (
            "chess consecutive-state distances follow the move kind",
            Box::new(chess_distances),
        ),
        (
            "cube distance is the root of the changed-bit count",
            Box::new(rubik_identity),
        ),
        (
            "both cube solvers succeed, advanced is shorter, F2L agrees",
            Box::new(solvers),
        ),
        (
            "t-SNE gradient, objective decrease and duplicate proximity",
            Box::new(tsne_checks),
        ),
        (
            "MDS recovers planar layouts, complete-graph Isomap equals MDS",
            Box::new(mds_isomap),
        ),
        ("planted patterns are detected", Box::new(pattern_suite)),
        (
            "chess and cube pipelines show the expected patterns",
            Box::new(end_to_end),
        ),
        ("CSV export/import is bit-exact", Box::new(csv_round_trips)),
        (
            "service job lifecycle, cancellation and fingerprints",
            Box::new(|| {
                tokio::runtime::Runtime::new()
                    .map_err(|e| e.to_string())?
                    .block_on(service_contract())
            }),
        ),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let total = if only.is_empty() {
        criteria.len()
    } else {
        only.len()
    };
    let mut passed = 0;
    for (i, (title, check)) in criteria.into_iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("criterion {:>2} PASS [{secs:.1}s] {title}: {detail}", i + 1);
            }
            Err(why) => println!("criterion {:>2} FAIL [{secs:.1}s] {title}: {why}", i + 1),
        }
    }
    println!("{passed}/{total} criteria passed");
    if passed != total {
        std::process::exit(1);
    }
}
