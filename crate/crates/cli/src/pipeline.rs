//! Generate or ingest, embed, analyze, export.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use trajspace_core::analysis::{analyze, AnalysisConfig, PatternReport, Role};
use trajspace_core::embed::NoProgress;
use trajspace_core::{
    collapse_duplicates, embed_dataset, EmbeddedDataset, EmbeddingConfig, Execution, ProgressSink,
    StateDataset,
};
use trajspace_domains::{chess, nn, rubik, sorting};

use crate::projection::export_csv;

/// What flows between pipeline stages: a dataset and, once embedded, its layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact {
    pub dataset: StateDataset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddedDataset>,
}

impl Artifact {
    pub fn new(dataset: StateDataset) -> Self {
        Artifact {
            dataset,
            embedding: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifact serializes")
    }
}

fn split_list(list: &str) -> impl Iterator<Item = &str> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty())
}

pub fn sorting_dataset(n: usize, algorithms: &str) -> Result<StateDataset> {
    let algs = split_list(algorithms)
        .map(|a| {
            sorting::Algorithm::parse(a)
                .with_context(|| format!("unknown algorithm '{a}' (bubble, quick)"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sorting::sorting_dataset(n, &algs)?)
}

pub fn rubik_dataset(
    count: usize,
    methods: &str,
    seed: u64,
    scramble_length: usize,
) -> Result<StateDataset> {
    let methods = split_list(methods)
        .map(|m| {
            rubik::Method::parse(m)
                .with_context(|| format!("unknown method '{m}' (beginner, advanced)"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rubik::rubik_dataset(
        count,
        &methods,
        seed,
        scramble_length,
    )?)
}

/// Parsed games after filtering, with the parser's diagnostics.
pub struct ChessIngest {
    pub dataset: StateDataset,
    pub games: usize,
    pub diagnostics: Vec<chess::PgnDiagnostic>,
}

pub fn chess_dataset(
    pgn: &str,
    min_rating: Option<i64>,
    openings: &str,
    limit: Option<usize>,
) -> Result<ChessIngest> {
    let parsed = chess::parse_pgn(pgn);
    let openings: Vec<String> = split_list(openings).map(str::to_string).collect();
    let mut games = match min_rating {
        Some(r) => chess::filter_games(&parsed.games, r, &openings),
        None => chess::filter_games(&parsed.games, i64::MIN, &openings),
    };
    if let Some(l) = limit {
        games.truncate(l);
    }
    if games.is_empty() {
        bail!(
            "no games left after filtering ({} parsed)",
            parsed.games.len()
        );
    }
    Ok(ChessIngest {
        games: games.len(),
        dataset: chess::chess_dataset(&games)?,
        diagnostics: parsed.diagnostics,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NnRepresentation {
    Weights,
    Confusion,
}

impl std::str::FromStr for NnRepresentation {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weights" => Ok(NnRepresentation::Weights),
            "confusion" => Ok(NnRepresentation::Confusion),
            _ => bail!("unknown representation '{s}' (weights, confusion)"),
        }
    }
}

pub fn nn_dataset(
    trace: &str,
    representation: NnRepresentation,
    prereduce: Option<usize>,
    augment_perfect: bool,
) -> Result<StateDataset> {
    let runs = nn::load_runs(trace)?;
    match representation {
        NnRepresentation::Weights => {
            if augment_perfect {
                bail!("--augment-perfect applies to the confusion representation only");
            }
            Ok(nn::weight_dataset(&runs, prereduce)?)
        }
        NnRepresentation::Confusion => {
            let ds = nn::confusion_dataset(&runs)?;
            if augment_perfect {
                let totals = runs
                    .first()
                    .map(nn::TrainingRun::class_totals)
                    .unwrap_or_default();
                Ok(nn::augment_perfect(ds, &totals)?)
            } else {
                Ok(ds)
            }
        }
    }
}

pub fn synth_trace(runs: usize, epochs: usize, classes: usize, seed: u64) -> String {
    nn::write_runs(&nn::synth_runs(runs, epochs, classes, seed))
}

pub fn embed(
    artifact: Artifact,
    config: &EmbeddingConfig,
    exec: Execution,
    sink: &mut dyn ProgressSink,
) -> Result<Artifact> {
    let embedding = embed_dataset(&artifact.dataset, config, exec, sink)?;
    Ok(Artifact {
        dataset: artifact.dataset,
        embedding: Some(embedding),
    })
}

pub fn analyze_artifact(artifact: &Artifact, config: &AnalysisConfig) -> Result<PatternReport> {
    let Some(e) = &artifact.embedding else {
        bail!("input has no embedding; run `embed` first");
    };
    Ok(analyze(&artifact.dataset, &e.coords, config)?)
}

pub fn write_csv(artifact: &Artifact, path: &Path) -> Result<()> {
    let Some(e) = &artifact.embedding else {
        bail!("input has no embedding; run `embed` first");
    };
    let file =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    export_csv(std::io::BufWriter::new(file), &artifact.dataset, &e.coords)?;
    Ok(())
}

/// Counts and pattern classifications, one fact per line.
pub fn summary(artifact: &Artifact, report: Option<&PatternReport>) -> String {
    let ds = &artifact.dataset;
    let distinct = collapse_duplicates(ds).representatives.len();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "dataset {}: {} points, {} trajectories, {} distinct states",
        ds.representation_name(),
        ds.len(),
        ds.trajectories().len(),
        distinct
    );
    if let Some(e) = &artifact.embedding {
        let _ = writeln!(
            s,
            "embedding: {:?}, {} iterations",
            e.config.method, e.diagnostics.iterations
        );
        if let Some((it, kl)) = e.diagnostics.objective.last() {
            let _ = writeln!(s, "objective at iteration {it}: {kl:.6}");
        }
        for note in &e.diagnostics.notes {
            let _ = writeln!(s, "note: {note}");
        }
    }
    if let Some(r) = report {
        let _ = writeln!(
            s,
            "clusters {} (radius {:.4}), noise {}, bundles {}",
            r.clustering.clusters,
            r.clustering.radius,
            r.clustering.noise,
            r.bundles.len()
        );
        for g in &r.endpoints {
            let role = if g.role == Role::Start {
                "start"
            } else {
                "end"
            };
            match (g.ratio, g.pattern) {
                (Some(ratio), Some(p)) => {
                    let _ = writeln!(
                        s,
                        "{role} states [{}]: {:?}, ratio {ratio:.4}, {}",
                        g.group,
                        p,
                        p.describe()
                    );
                }
                _ => {
                    let _ = writeln!(s, "{role} states [{}]: single trajectory", g.group);
                }
            }
        }
        let patterns: Vec<String> = r.patterns().iter().map(|p| format!("{p:?}")).collect();
        let _ = writeln!(s, "patterns: {}", patterns.join(" "));
    }
    s
}

/// Which generator feeds `run`.
#[derive(Clone, Debug)]
pub enum Source {
    Sorting {
        n: usize,
        algorithms: String,
    },
    Rubik {
        count: usize,
        methods: String,
        scramble_length: usize,
    },
    Chess {
        pgn: String,
        min_rating: Option<i64>,
        openings: String,
        limit: Option<usize>,
    },
    Nn {
        trace: String,
        representation: NnRepresentation,
        prereduce: Option<usize>,
        augment_perfect: bool,
    },
}

pub fn build_source(source: &Source, seed: u64) -> Result<StateDataset> {
    match source {
        Source::Sorting { n, algorithms } => sorting_dataset(*n, algorithms),
        Source::Rubik {
            count,
            methods,
            scramble_length,
        } => rubik_dataset(*count, methods, seed, *scramble_length),
        Source::Chess {
            pgn,
            min_rating,
            openings,
            limit,
        } => Ok(chess_dataset(pgn, *min_rating, openings, *limit)?.dataset),
        Source::Nn {
            trace,
            representation,
            prereduce,
            augment_perfect,
        } => nn_dataset(trace, *representation, *prereduce, *augment_perfect),
    }
}

/// Runs every stage and writes `artifact.json`, `projection.csv` and
/// `report.json` into `out_dir`. Returns the printed summary.
pub fn run_pipeline(
    source: &Source,
    config: &EmbeddingConfig,
    analysis: &AnalysisConfig,
    out_dir: &Path,
    exec: Execution,
) -> Result<String> {
    let dataset = build_source(source, config.seed)?;
    let artifact = embed(Artifact::new(dataset), config, exec, &mut NoProgress)?;
    let report = analyze_artifact(&artifact, analysis)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("artifact.json"), artifact.to_json())?;
    write_csv(&artifact, &out_dir.join("projection.csv"))?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(summary(&artifact, Some(&report)))
}
