use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use avd::anomaly::{profile_vertices, rank_vertices, MetaFeature, SortOrder, DEFAULT_THRESHOLD};
use avd::config::ExperimentConfig;
use avd::evaluation::run_experiment;
use avd::forest::{train_forest, ForestParams};
use avd::graph::{Direction, Graph, Label, VertexId};
use avd::io::{
    load_edge_list, load_labels, load_vertex_list, parse_profiles, write_edge_list, write_file,
    write_injection_record, write_labels, write_profiles, write_test_set, LinkModel,
};
use avd::sampling::{
    build_link_training_set, generate_ba, inject_anomalies, injection_count, sample_test_vertices,
};
use avd::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "avd", version, about = "Anomalous vertex detection from graph topology")]
struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GraphArgs {
    /// Edge list file.
    #[arg(long)]
    graph: PathBuf,
    /// Treat edges as directed.
    #[arg(long)]
    directed: bool,
}

impl GraphArgs {
    fn load(&self) -> Result<Graph, Error> {
        let (g, report) = load_edge_list(&self.graph, self.directed)?;
        if report.self_loops + report.duplicates > 0 {
            warn!("dropped {} self-loops and {} duplicate edges", report.self_loops, report.duplicates);
        }
        Ok(g)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Barabási–Albert edge list.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add anomalous vertices with randomly wired edges.
    Inject {
        #[command(flatten)]
        graph: GraphArgs,
        /// Share of anomalous vertices in the resulting graph.
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels_out: PathBuf,
        /// Optional CSV listing each injected vertex with its targets.
        #[arg(long)]
        record_out: Option<PathBuf>,
    },
    /// Sample a labelled test set of well-connected vertices.
    Sample {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 100)]
        positives: usize,
        #[arg(long, default_value_t = 900)]
        negatives: usize,
        #[arg(long, default_value_t = 3)]
        min_friends: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Test set CSV (also usable as a vertex list for `score`).
        #[arg(long)]
        out: PathBuf,
        /// Every endpoint of a test edge, for `train-link --exclude`.
        #[arg(long)]
        exclusion_out: Option<PathBuf>,
    },
    /// Train the link classifier and write it as JSON.
    TrainLink {
        #[command(flatten)]
        graph: GraphArgs,
        /// Vertex list whose members are kept out of every training pair.
        #[arg(long)]
        exclude: Option<PathBuf>,
        /// Training pairs per class.
        #[arg(long, default_value_t = 5000)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Compute meta-feature profiles for a list of vertices.
    Score {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        model: PathBuf,
        /// Vertex list; every vertex when omitted.
        #[arg(long)]
        vertices: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Edges to score on directed graphs: out, in or all.
        #[arg(long, default_value = "out")]
        direction: Direction,
        #[arg(long)]
        out: PathBuf,
    },
    /// Order profiled vertices by one meta-feature.
    Rank {
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long, default_value = "abnormality_probability")]
        by: MetaFeature,
        /// Number of vertices to list; all when omitted.
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        ascending: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment described by a configuration file.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Configuration override, `key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Defaults to `precision_at_k.csv` next to the report.
        #[arg(long)]
        precision_out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::Parameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e),
        }
    }
}

fn out_or_stdout<F>(path: Option<&Path>, f: F) -> Result<(), Error>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    match path {
        Some(p) => write_file(p, |w| f(w)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).and_then(|_| lock.flush()).map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
        }
    }
}

fn resolve(g: &Graph, names: &[String]) -> Result<Vec<VertexId>, Error> {
    names.iter().map(|n| g.vertex_id(n)).collect()
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { n, m, seed, out } => {
            let g = generate_ba(n, m, seed)?;
            out_or_stdout(out.as_deref(), |w| write_edge_list(&g, w))?;
        }
        Command::Inject { graph, fraction, seed, out, labels_out, record_out } => {
            let host = graph.load()?;
            let n = injection_count(host.vertex_count(), fraction)?;
            let (g, record) = inject_anomalies(&host, n, seed)?;
            info!("injected {n} vertices into {} host vertices", host.vertex_count());
            write_file(&out, |w| write_edge_list(&g, w))?;
            write_file(&labels_out, |w| write_labels(&g, w))?;
            if let Some(p) = record_out {
                write_file(&p, |w| write_injection_record(&g, &record, w))?;
            }
        }
        Command::Sample { graph, labels, positives, negatives, min_friends, seed, out, exclusion_out } => {
            let g = graph.load()?.with_named_labels(&load_labels(&labels)?);
            let mut test = sample_test_vertices(&g, positives, Some(Label::Anomalous), min_friends, seed)?;
            test.extend(sample_test_vertices(&g, negatives, Some(Label::Normal), min_friends, seed.wrapping_add(1))?);
            write_file(&out, |w| write_test_set(&g, &test, w))?;
            if let Some(p) = exclusion_out {
                let mut ends: Vec<VertexId> = test.endpoints().into_iter().collect();
                ends.sort_unstable();
                write_file(&p, |w| {
                    writeln!(w, "vertex")?;
                    ends.iter().try_for_each(|&v| writeln!(w, "{}", g.name(v)))
                })?;
            }
        }
        Command::TrainLink { graph, exclude, size, seed, trees, model_out } => {
            let g = graph.load()?;
            let excluded: HashSet<VertexId> = match exclude {
                Some(p) => resolve(&g, &load_vertex_list(&p)?)?.into_iter().collect(),
                None => HashSet::new(),
            };
            let set = build_link_training_set(&g, &excluded, size, seed)?;
            let params = ForestParams { tree_count: trees, ..Default::default() };
            let forest = train_forest(&set.examples, &params, seed)?;
            LinkModel::new(forest, g.is_directed()).save(&model_out)?;
        }
        Command::Score { graph, model, vertices, threshold, direction, out } => {
            let g = graph.load()?;
            let model = LinkModel::load(&model)?;
            if model.directed != g.is_directed() {
                return Err(Failure::Usage(format!(
                    "model was trained on a {} graph",
                    if model.directed { "directed" } else { "undirected" }
                )));
            }
            let targets = match vertices {
                Some(p) => resolve(&g, &load_vertex_list(&p)?)?,
                None => g.vertices().collect(),
            };
            let batch = profile_vertices(&model.forest, &g, &targets, threshold, direction)?;
            if !batch.isolated.is_empty() {
                warn!("{} vertices have no edges to score and were skipped", batch.isolated.len());
            }
            write_file(&out, |w| write_profiles(&g, &batch.profiles, w))?;
        }
        Command::Rank { profiles, by, top, ascending, out } => {
            let file = std::fs::File::open(&profiles).map_err(|e| Error::Io {
                path: profiles.display().to_string(),
                source: e,
            })?;
            let (names, rows) = parse_profiles(std::io::BufReader::new(file))?;
            let order = if ascending { SortOrder::Ascending } else { SortOrder::Descending };
            let ranked = rank_vertices(&rows, by, order);
            let take = top.unwrap_or(ranked.len()).min(ranked.len());
            out_or_stdout(out.as_deref(), |w| {
                writeln!(w, "rank,vertex,{}", by.name())?;
                for (i, &v) in ranked[..take].iter().enumerate() {
                    writeln!(w, "{},{},{}", i + 1, names[v as usize], rows[v as usize].get(by))?;
                }
                Ok(())
            })?;
        }
        Command::Evaluate { config, overrides, out, precision_out } => {
            let mut cfg = ExperimentConfig::from_file(&config)
                .map_err(|e| Failure::Usage(format!("cannot read configuration: {e}")))?;
            cfg.apply_overrides(&overrides).map_err(|e| Failure::Usage(e.to_string()))?;
            info!("resolved configuration:\n{}", cfg.to_text());
            let report = run_experiment(&cfg)?;
            write_file(&out, |w| w.write_all(report.to_json().as_bytes()))?;
            let csv = precision_out
                .unwrap_or_else(|| out.parent().unwrap_or(Path::new("")).join("precision_at_k.csv"));
            write_file(&csv, |w| w.write_all(report.precision_csv().as_bytes()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Usage(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Ok(Err(Failure::Data(e))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
