//! `gma`: batch runner for the morphological analysis pipeline.
//!
//! Exit codes: 0 success, 2 invalid arguments or input documents, 3 a stage
//! failed while running.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gma_core::assess::ExpertiseWeights;
use gma_core::cca::{constraints_from_judgments, read_judgments_csv};
use gma_core::graph::{build_graph, read_matrix_csv, CorrelationAxis, EdgeMode, EntityLevel};
use gma_core::pipeline::{analyze_network, files, Bundle, InputSpec, PipelineConfig, ProfileSource};
use gma_core::space::{count_consistent_configurations_with, count_cross_dimension_pairs};
use gma_core::Execution;
use gma_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "gma", version, about = "General morphological analysis pipeline")]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count configurations, optionally with pins and judgments.
    Count(CountArgs),
    /// Cross-dimension pair census; with --out, writes the pairs stage.
    Pairs(PairsArgs),
    /// Threshold graph of a correlation matrix, or the network stage of a bundle.
    Network(NetworkArgs),
    /// k-means stage of a bundle.
    Cluster(StageArgs),
    /// Scenario stage of a bundle; also writes the manifest.
    Scenarios(StageArgs),
    /// Every stage into one bundle.
    Run(RunArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Built-in field name (bundled, bundled-superintelligence, two-dim-4x4) or a field JSON path.
    #[arg(long, default_value = "bundled")]
    field: String,
    /// Aggregate scores CSV.
    #[arg(long, conflicts_with = "responses")]
    scores: Option<PathBuf>,
    /// Raw survey responses CSV.
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long)]
    impact_scale: Option<PathBuf>,
    #[arg(long)]
    likelihood_scale: Option<PathBuf>,
    /// Cross-consistency judgments CSV.
    #[arg(long)]
    judgments: Option<PathBuf>,
}

impl InputArgs {
    fn spec(&self) -> InputSpec {
        InputSpec {
            field: self.field.clone(),
            scores: self.scores.clone(),
            responses: self.responses.clone(),
            impact_scale: self.impact_scale.clone(),
            likelihood_scale: self.likelihood_scale.clone(),
            judgments: self.judgments.clone(),
        }
    }
}

/// Overrides on top of the defaults (or of the configuration a bundle
/// already records).
#[derive(Args, Default)]
struct ConfigArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Edge threshold; repeat for several graphs.
    #[arg(long = "threshold")]
    thresholds: Vec<f64>,
    #[arg(long)]
    edge_mode: Option<EdgeMode>,
    #[arg(long)]
    graph_axis: Option<CorrelationAxis>,
    #[arg(long)]
    profile_source: Option<ProfileSource>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    weight_basic: Option<f64>,
    #[arg(long)]
    weight_intermediate: Option<f64>,
    #[arg(long)]
    weight_expert: Option<f64>,
}

impl ConfigArgs {
    fn apply(&self, mut c: PipelineConfig) -> PipelineConfig {
        c.k = self.k.unwrap_or(c.k);
        c.seed = self.seed.unwrap_or(c.seed);
        c.n_init = self.n_init.unwrap_or(c.n_init);
        c.max_iter = self.max_iter.unwrap_or(c.max_iter);
        c.tol = self.tol.unwrap_or(c.tol);
        if !self.thresholds.is_empty() {
            c.thresholds = self.thresholds.clone();
        }
        c.edge_mode = self.edge_mode.unwrap_or(c.edge_mode);
        c.graph_axis = self.graph_axis.unwrap_or(c.graph_axis);
        c.profile_source = self.profile_source.unwrap_or(c.profile_source);
        c.bins = self.bins.unwrap_or(c.bins);
        c.weights.basic = self.weight_basic.unwrap_or(c.weights.basic);
        c.weights.intermediate = self.weight_intermediate.unwrap_or(c.weights.intermediate);
        c.weights.expert = self.weight_expert.unwrap_or(c.weights.expert);
        c
    }
}

#[derive(Args)]
struct CountArgs {
    #[arg(long, default_value = "bundled")]
    field: String,
    #[arg(long)]
    judgments: Option<PathBuf>,
    /// Condition to fix, as dimension.condition; repeatable.
    #[arg(long = "pin")]
    pins: Vec<String>,
}

#[derive(Args)]
struct PairsArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Bundle directory to write the pairs stage into.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NetworkArgs {
    /// Correlation matrix CSV (`entity,<ids...>`).
    #[arg(long, conflicts_with = "out", required_unless_present = "out")]
    matrix: Option<PathBuf>,
    /// Label for the matrix entities.
    #[arg(long, default_value = "condition")]
    level: EntityLevel,
    /// Print the full analysis as JSON instead of the edge list.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Overrides GMA_BIND.
    #[arg(long)]
    bind: Option<std::net::SocketAddr>,
    /// Overrides GMA_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Overrides GMA_COMPUTE_BUDGET.
    #[arg(long)]
    compute_budget: Option<u64>,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(e: impl std::fmt::Display) -> Self {
        Failure { code: 2, message: e.to_string() }
    }

    fn stage(stage: &str, e: impl std::fmt::Display) -> Self {
        Failure {
            code: 3,
            message: format!("stage `{stage}` failed: {e}"),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match dispatch(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command, exec: Execution) -> Outcome {
    match command {
        Command::Count(a) => count(a, exec),
        Command::Pairs(a) => pairs(a, exec),
        Command::Network(a) => network(a, exec),
        Command::Cluster(a) => cluster(a, exec),
        Command::Scenarios(a) => scenarios(a),
        Command::Run(a) => run(a, exec),
        Command::Serve(a) => serve(a),
    }
}

fn out() -> io::StdoutLock<'static> {
    io::stdout().lock()
}

fn count(a: CountArgs, exec: Execution) -> Outcome {
    let field = InputSpec::builtin(&a.field).load(&ExpertiseWeights::default()).map_err(Failure::invalid)?.field;
    let judgments = match &a.judgments {
        Some(p) => read_judgments_csv(File::open(p).map_err(|e| Failure::invalid(format!("{}: {e}", p.display())))?)
            .map_err(Failure::invalid)?,
        None => Vec::new(),
    };
    let mut constraints = constraints_from_judgments(&field, &judgments).map_err(Failure::invalid)?;
    let mut pinned: Vec<usize> = Vec::new();
    for pin in &a.pins {
        let idx = field.resolve_or_err(pin).map_err(Failure::invalid)?;
        if let Some(&other) = pinned.iter().find(|&&o| field.dimension_of(o) == field.dimension_of(idx) && o != idx) {
            return Err(Failure::invalid(format!(
                "pins `{}` and `{pin}` are in the same dimension",
                field.qualified_id(other)
            )));
        }
        pinned.push(idx);
        constraints.pin_index(&field, idx).map_err(Failure::invalid)?;
    }
    let n = count_consistent_configurations_with(&field, &constraints, exec).map_err(|e| Failure::stage("count", e))?;
    let _ = writeln!(out(), "{n}");
    Ok(())
}

fn pairs(a: PairsArgs, exec: Execution) -> Outcome {
    let config = a.config.apply(PipelineConfig::default());
    config.validate().map_err(Failure::invalid)?;
    let inputs = a.inputs.spec().load(&config.weights).map_err(Failure::invalid)?;
    let census = count_cross_dimension_pairs(&inputs.field).map_err(Failure::invalid)?;
    let mut o = out();
    let _ = writeln!(o, "{census}");
    if let Some(r) = inputs.field.metadata().get("reference-pair-count") {
        let _ = writeln!(o, "reference total {r}");
    }
    let stage = match (&a.out, &inputs.scores) {
        (Some(dir), _) => {
            let bundle = Bundle::new(dir).map_err(Failure::invalid)?;
            Some(bundle.write_pairs_stage(&inputs, &config, exec).map_err(|e| Failure::stage("pairs", e))?)
        }
        (None, Some(scores)) => Some(
            gma_core::pipeline::run_pairs(&inputs.field, scores, &inputs.judgments, exec)
                .map_err(|e| Failure::stage("pairs", e))?,
        ),
        (None, None) => None,
    };
    if let Some(s) = stage {
        let _ = writeln!(o, "generated {}, consistent {}", s.generated, s.survivors);
        if !s.skipped.is_empty() {
            eprintln!("warning: skipped unassessed conditions: {}", s.skipped.join(", "));
        }
    }
    Ok(())
}

fn network(a: NetworkArgs, exec: Execution) -> Outcome {
    if let Some(dir) = &a.out {
        let bundle = Bundle::new(dir).map_err(Failure::invalid)?;
        let config = a.config.apply(bundle.load_config().map_err(|e| Failure::stage("network", e))?);
        config.validate().map_err(Failure::invalid)?;
        let stage = bundle.write_network_stage(&config, exec).map_err(|e| Failure::stage("network", e))?;
        let mut o = out();
        for n in &stage.analyses {
            let _ = writeln!(
                o,
                "{:?} graph at {:.2}: {} nodes, {} edges, {} communities (Q = {:.4}), {} maximal cliques, largest {}",
                n.level,
                n.threshold,
                n.nodes.len(),
                n.edges.len(),
                n.communities.len(),
                n.modularity,
                n.cliques.count,
                n.cliques.largest_size
            );
        }
        return Ok(());
    }
    let path = a.matrix.expect("clap requires --matrix without --out");
    let file = File::open(&path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let config = a.config.apply(PipelineConfig::default());
    let matrix = read_matrix_csv(file, config.graph_axis).map_err(Failure::invalid)?;
    let threshold = match config.thresholds.as_slice() {
        [t] => *t,
        _ if a.config.thresholds.is_empty() => {
            return Err(Failure::invalid("--threshold is required with --matrix"));
        }
        _ => return Err(Failure::invalid("give a single --threshold with --matrix")),
    };
    let mut o = out();
    if a.json {
        let analysis = analyze_network(&matrix, a.level, threshold, config.edge_mode, exec).map_err(Failure::invalid)?;
        let _ = writeln!(o, "{}", serde_json::to_string_pretty(&analysis).expect("analysis serializes"));
    } else {
        let graph = build_graph(&matrix, threshold, config.edge_mode).map_err(Failure::invalid)?;
        graph.write_edges_csv(&mut o).map_err(|e| Failure::stage("network", e))?;
    }
    Ok(())
}

fn stage_config(bundle: &Bundle, args: &ConfigArgs, stage: &str) -> Result<PipelineConfig, Failure> {
    let config = args.apply(bundle.load_config().map_err(|e| Failure::stage(stage, e))?);
    config.validate().map_err(Failure::invalid)?;
    Ok(config)
}

fn cluster(a: StageArgs, exec: Execution) -> Outcome {
    let bundle = Bundle::new(&a.out).map_err(Failure::invalid)?;
    let config = stage_config(&bundle, &a.config, "cluster")?;
    let c = bundle.write_cluster_stage(&config, exec).map_err(|e| Failure::stage("cluster", e))?;
    let mut o = out();
    for s in &c.summaries {
        let _ = writeln!(
            o,
            "cluster {}: {} pairs, mean impact {:.3}, mean likelihood {:.3}",
            s.cluster + 1,
            s.size,
            s.mean_impact,
            s.mean_likelihood
        );
    }
    let _ = writeln!(o, "inertia {:.6}", c.model.inertia);
    Ok(())
}

fn print_summary(bundle: &Bundle) -> Outcome {
    let text = std::fs::read_to_string(bundle.path(files::SUMMARY)).map_err(|e| Failure::stage("scenarios", e))?;
    let mut o = out();
    let _ = o.write_all(text.as_bytes());
    let _ = writeln!(o, "manifest: {}", bundle.path(files::MANIFEST).display());
    Ok(())
}

fn scenarios(a: StageArgs) -> Outcome {
    let bundle = Bundle::new(&a.out).map_err(Failure::invalid)?;
    let config = stage_config(&bundle, &a.config, "scenarios")?;
    bundle.write_scenario_stage(&config).map_err(|e| Failure::stage("scenarios", e))?;
    bundle.write_manifest().map_err(|e| Failure::stage("manifest", e))?;
    print_summary(&bundle)
}

fn run(a: RunArgs, exec: Execution) -> Outcome {
    let config = a.config.apply(PipelineConfig::default());
    config.validate().map_err(Failure::invalid)?;
    let inputs = a.inputs.spec().load(&config.weights).map_err(Failure::invalid)?;
    if inputs.scores.is_none() {
        return Err(Failure::invalid(format!(
            "field `{}` has no scores; pass --scores or --responses",
            inputs.field.id()
        )));
    }
    let bundle = Bundle::new(&a.out).map_err(Failure::invalid)?;
    let manifest = bundle
        .run_all(&inputs, &config, exec)
        .map_err(|e| Failure::stage(e.stage, e.error))?;
    if !manifest.headline.skipped_conditions.is_empty() {
        eprintln!(
            "warning: skipped unassessed conditions: {}",
            manifest.headline.skipped_conditions.join(", ")
        );
    }
    print_summary(&bundle)
}

fn serve(a: ServeArgs) -> Outcome {
    let mut config = ServiceConfig::from_env().map_err(Failure::invalid)?;
    if let Some(b) = a.bind {
        config.bind = b;
    }
    if let Some(d) = a.data_dir {
        config.data_dir = d;
    }
    if let Some(n) = a.compute_budget {
        config.compute_budget = n;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::stage("serve", e))?;
    runtime
        .block_on(gma_service::serve(config))
        .map_err(|e| Failure::stage("serve", e))
}
