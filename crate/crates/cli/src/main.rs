use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use trajspace_cli::pipeline::{self, Artifact, NnRepresentation, Source};
use trajspace_cli::presets;
use trajspace_cli::service::{self, AppState};
use trajspace_core::analysis::AnalysisConfig;
use trajspace_core::embed::NoProgress;
use trajspace_core::{EmbeddingConfig, Execution, Flow, Method, Snapshot};

#[derive(Parser)]
#[command(
    name = "trajspace",
    version,
    about = "Decision trajectories embedded in two dimensions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs of bubble sort and quicksort over every permutation of 1..=n.
    GenerateSorting {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value = "bubble,quick")]
        algorithms: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Seeded scrambles solved by the chosen methods.
    SolveRubik {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value = "beginner,advanced")]
        methods: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        scramble_length: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Replays the games of a PGN file (`-` for stdin).
    ParseChess {
        input: PathBuf,
        /// Both players rated strictly above this.
        #[arg(long)]
        min_rating: Option<i64>,
        /// Comma-separated first moves to keep.
        #[arg(long, default_value = "")]
        openings: String,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Reads a training trace (JSON) into weight or confusion space.
    IngestNn {
        input: PathBuf,
        #[arg(long, default_value = "confusion")]
        representation: NnRepresentation,
        #[arg(long)]
        prereduce: Option<usize>,
        #[arg(long)]
        augment_perfect: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Writes a synthetic training trace.
    SynthNn {
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Embeds a dataset artifact.
    Embed {
        /// Artifact JSON, `-` for stdin.
        #[arg(default_value = "-")]
        input: PathBuf,
        #[command(flatten)]
        embedding: EmbedArgs,
        /// Reports progress on stderr.
        #[arg(long)]
        progress: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Detects patterns on an embedded artifact and prints a summary.
    Analyze {
        #[arg(default_value = "-")]
        input: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Writes the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Writes the projection CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generates, embeds, analyzes and writes artifact.json, projection.csv and report.json.
    Run {
        #[command(flatten)]
        embedding: EmbedArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(subcommand)]
        source: RunSource,
    },
    /// Serves the datasets of a directory over HTTP on localhost.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = ".")]
        data_dir: PathBuf,
        /// Configuration for jobs that name neither a preset nor a config.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Args)]
struct EmbedArgs {
    /// Built-in preset name or TOML file.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disables the data-parallel loops.
    #[arg(long)]
    sequential: bool,
}

impl EmbedArgs {
    fn config(&self) -> Result<EmbeddingConfig> {
        let mut c = match &self.preset {
            Some(p) => presets::load(p)?,
            None => EmbeddingConfig::default(),
        };
        if let Some(m) = &self.method {
            c.method = serde_json::from_value(serde_json::Value::String(m.clone()))
                .with_context(|| format!("unknown method '{m}' (pca, tsne, mds, isomap)"))?;
        }
        if self.perplexity.is_some() {
            c.perplexity = self.perplexity;
        }
        if let Some(it) = self.iterations {
            c.total_iterations = it;
            c.early_iterations = c.early_iterations.min(it);
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        Ok(c)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }
}

#[derive(Args)]
struct AnalysisArgs {
    /// Trajectory label that splits start and end states into groups.
    #[arg(long)]
    group_by: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    min_points: Option<usize>,
}

impl AnalysisArgs {
    fn config(&self) -> AnalysisConfig {
        let d = AnalysisConfig::default();
        AnalysisConfig {
            radius: self.radius,
            min_points: self.min_points.unwrap_or(d.min_points),
            theta: self.theta.unwrap_or(d.theta),
            group_by: self.group_by.clone(),
            ..d
        }
    }
}

#[derive(Subcommand)]
enum RunSource {
    Sorting {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value = "bubble,quick")]
        algorithms: String,
    },
    Rubik {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value = "beginner,advanced")]
        methods: String,
        #[arg(long, default_value_t = 25)]
        scramble_length: usize,
    },
    Chess {
        input: PathBuf,
        #[arg(long)]
        min_rating: Option<i64>,
        #[arg(long, default_value = "")]
        openings: String,
        #[arg(long)]
        limit: Option<usize>,
    },
    Nn {
        input: PathBuf,
        #[arg(long, default_value = "confusion")]
        representation: NnRepresentation,
        #[arg(long)]
        prereduce: Option<usize>,
        #[arg(long)]
        augment_perfect: bool,
    },
}

fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .context("reading stdin")?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn emit(path: Option<&Path>, artifact: &Artifact) -> Result<()> {
    write_output(path, &artifact.to_json())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenerateSorting {
            n,
            algorithms,
            output,
        } => emit(
            output.as_deref(),
            &Artifact::new(pipeline::sorting_dataset(n, &algorithms)?),
        ),
        Command::SolveRubik {
            count,
            methods,
            seed,
            scramble_length,
            output,
        } => emit(
            output.as_deref(),
            &Artifact::new(pipeline::rubik_dataset(
                count,
                &methods,
                seed,
                scramble_length,
            )?),
        ),
        Command::ParseChess {
            input,
            min_rating,
            openings,
            limit,
            output,
        } => {
            let ingest =
                pipeline::chess_dataset(&read_input(&input)?, min_rating, &openings, limit)?;
            for d in &ingest.diagnostics {
                eprintln!("skipped game {} (byte {}): {}", d.game, d.offset, d.message);
            }
            eprintln!("{} games kept", ingest.games);
            emit(output.as_deref(), &Artifact::new(ingest.dataset))
        }
        Command::IngestNn {
            input,
            representation,
            prereduce,
            augment_perfect,
            output,
        } => emit(
            output.as_deref(),
            &Artifact::new(pipeline::nn_dataset(
                &read_input(&input)?,
                representation,
                prereduce,
                augment_perfect,
            )?),
        ),
        Command::SynthNn {
            runs,
            epochs,
            classes,
            seed,
            output,
        } => write_output(
            output.as_deref(),
            &pipeline::synth_trace(runs, epochs, classes, seed),
        ),
        Command::Embed {
            input,
            embedding,
            progress,
            output,
        } => {
            let config = embedding.config()?;
            let artifact =
                Artifact::parse(&read_input(&input)?).context("parsing input artifact")?;
            let every = config.objective_every.max(1);
            let mut report = |s: &Snapshot<'_>| {
                if s.iteration.is_multiple_of(every) || s.iteration == s.total {
                    match s.objective {
                        Some(kl) => {
                            eprintln!("iteration {}/{}: objective {kl:.6}", s.iteration, s.total)
                        }
                        None => eprintln!("iteration {}/{}", s.iteration, s.total),
                    }
                }
                Flow::Continue
            };
            let embedded = if progress && config.method == Method::Tsne {
                pipeline::embed(artifact, &config, embedding.exec(), &mut report)?
            } else {
                pipeline::embed(artifact, &config, embedding.exec(), &mut NoProgress)?
            };
            emit(output.as_deref(), &embedded)
        }
        Command::Analyze {
            input,
            analysis,
            report,
            csv,
        } => {
            let artifact =
                Artifact::parse(&read_input(&input)?).context("parsing input artifact")?;
            let r = pipeline::analyze_artifact(&artifact, &analysis.config())?;
            if let Some(p) = report {
                std::fs::write(&p, serde_json::to_string_pretty(&r)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(p) = csv {
                pipeline::write_csv(&artifact, &p)?;
            }
            print!("{}", pipeline::summary(&artifact, Some(&r)));
            Ok(())
        }
        Command::Run {
            embedding,
            analysis,
            out,
            source,
        } => {
            let source = match source {
                RunSource::Sorting { n, algorithms } => Source::Sorting { n, algorithms },
                RunSource::Rubik {
                    count,
                    methods,
                    scramble_length,
                } => Source::Rubik {
                    count,
                    methods,
                    scramble_length,
                },
                RunSource::Chess {
                    input,
                    min_rating,
                    openings,
                    limit,
                } => Source::Chess {
                    pgn: read_input(&input)?,
                    min_rating,
                    openings,
                    limit,
                },
                RunSource::Nn {
                    input,
                    representation,
                    prereduce,
                    augment_perfect,
                } => Source::Nn {
                    trace: read_input(&input)?,
                    representation,
                    prereduce,
                    augment_perfect,
                },
            };
            let summary = pipeline::run_pipeline(
                &source,
                &embedding.config()?,
                &analysis.config(),
                &out,
                embedding.exec(),
            )?;
            print!("{summary}");
            Ok(())
        }
        Command::Serve {
            port,
            data_dir,
            preset,
            seed,
            sequential,
        } => {
            let config = match &preset {
                Some(p) => presets::load(p)?,
                None => EmbeddingConfig::default(),
            };
            let datasets = service::load_data_dir(&data_dir)?;
            eprintln!("{} datasets from {}", datasets.len(), data_dir.display());
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::default()
            };
            let state = AppState::new(datasets, config, seed, exec);
            tokio::runtime::Runtime::new()?.block_on(service::serve(port, state))
        }
    }
}
