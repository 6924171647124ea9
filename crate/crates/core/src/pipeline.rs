//! The staged workflow shared by the command line and the service:
//! ingest → pairs/CCA → network → clusters → scenarios.
//!
//! Every stage exists as a pure in-memory function and as a bundle step that
//! reads the previous stages' files from an output directory and writes its
//! own. A full run is exactly the bundle steps in sequence.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assess::{read_responses_csv, ExpertiseWeights, Scales, ScoreTable, SurveyResponse};
use crate::cca::{
    apply_judgments, constraints_from_judgments, generate_pairs, read_judgments_csv, write_judgments_csv,
    write_pairs_csv, ConsistencyJudgment, ScenarioPair,
};
use crate::cluster::{cluster_pairs, KMeansParams, PairClustering};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::MorphologicalField;
use crate::graph::{
    betweenness_centrality, build_graph, connected_components, correlation_matrix, greedy_modularity_communities,
    maximal_cliques, pair_profiles, respondent_profiles, CorrelationAxis, CorrelationMatrix, EdgeMode, EntityLevel,
};
use crate::report::{
    assemble_scenarios, condition_affinities, condition_points, risk_matrix_plot_data, scorecard_concordance,
    write_scenario_csv, write_scorecard_csv, AffinityTable, Concordance, PlotData, Scenario,
};
use crate::space::{count_configurations, count_consistent_configurations_with, count_cross_dimension_pairs};
use crate::{dataset, reference};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Where correlation observations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileSource {
    /// Combined pair values between each entity and every other condition.
    #[default]
    PairProfile,
    /// Per-respondent means; needs raw survey responses.
    Respondent,
}

impl std::str::FromStr for ProfileSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair-profile" => Ok(ProfileSource::PairProfile),
            "respondent" => Ok(ProfileSource::Respondent),
            other => Err(Error::parameter("profile-source", format!("unknown source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub n_init: usize,
    pub thresholds: Vec<f64>,
    pub edge_mode: EdgeMode,
    pub graph_axis: CorrelationAxis,
    pub profile_source: ProfileSource,
    pub bins: usize,
    pub weights: ExpertiseWeights,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 4,
            seed: 42,
            max_iter: 300,
            tol: 1e-9,
            n_init: KMeansParams::DEFAULT_N_INIT,
            thresholds: vec![0.6, 0.7],
            edge_mode: EdgeMode::SignedAbs,
            graph_axis: CorrelationAxis::Combined,
            profile_source: ProfileSource::PairProfile,
            bins: 10,
            weights: ExpertiseWeights::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=10).contains(&self.k) {
            return Err(Error::parameter("k", format!("{} is outside [2, 10]", self.k)));
        }
        if self.max_iter == 0 {
            return Err(Error::parameter("max-iter", "must be at least 1"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::parameter("tol", "must be positive"));
        }
        if self.n_init == 0 {
            return Err(Error::parameter("n-init", "must be at least 1"));
        }
        if self.thresholds.is_empty() {
            return Err(Error::parameter("thresholds", "at least one threshold is needed"));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::parameter("thresholds", format!("{t} is outside [0, 1]")));
        }
        if self.bins == 0 {
            return Err(Error::parameter("bins", "must be at least 1"));
        }
        Ok(())
    }

    pub fn kmeans(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            n_init: self.n_init,
        }
    }
}

// ---------------------------------------------------------------------------
// In-memory stages

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsStage {
    pub configurations: String,
    pub consistent_configurations: String,
    pub cross_dimension_pairs: u64,
    pub generated: usize,
    pub survivors: usize,
    pub skipped: Vec<String>,
    pub pairs: Vec<ScenarioPair>,
}

/// Pair generation plus judgments, with configuration counts.
pub fn run_pairs(
    field: &MorphologicalField,
    scores: &ScoreTable,
    judgments: &[ConsistencyJudgment],
    exec: Execution,
) -> Result<PairsStage> {
    let constraints = constraints_from_judgments(field, judgments)?;
    let mut generation = generate_pairs(field, scores)?;
    let summary = apply_judgments(field, &mut generation.pairs, judgments)?;
    Ok(PairsStage {
        configurations: count_configurations(field).to_string(),
        consistent_configurations: count_consistent_configurations_with(field, &constraints, exec)?.to_string(),
        cross_dimension_pairs: count_cross_dimension_pairs(field)?,
        generated: summary.generated,
        survivors: summary.survivors,
        skipped: generation.skipped,
        pairs: generation.pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEdge {
    pub a: String,
    pub b: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliqueSummary {
    pub cliques: Vec<Vec<String>>,
    /// `(node, number of maximal cliques containing it)`.
    pub membership: Vec<(String, usize)>,
    pub count: usize,
    pub largest_size: usize,
    pub largest_count: usize,
}

/// Everything computed over one threshold graph. Also the graph document
/// served to the workbench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkAnalysis {
    pub level: EntityLevel,
    pub axis: CorrelationAxis,
    pub threshold: f64,
    pub mode: EdgeMode,
    pub nodes: Vec<String>,
    pub edges: Vec<NamedEdge>,
    pub components: Vec<Vec<String>>,
    pub communities: Vec<Vec<String>>,
    pub modularity: f64,
    pub modularity_history: Vec<f64>,
    pub cliques: CliqueSummary,
    /// Normalized betweenness per node, in node order.
    pub betweenness: Vec<(String, f64)>,
}

pub fn analyze_network(
    matrix: &CorrelationMatrix,
    level: EntityLevel,
    threshold: f64,
    mode: EdgeMode,
    exec: Execution,
) -> Result<NetworkAnalysis> {
    let graph = build_graph(matrix, threshold, mode)?;
    let simple = graph.simple();
    let communities = greedy_modularity_communities(&simple);
    let cliques = maximal_cliques(&simple, exec);
    let centrality = betweenness_centrality(&simple, true, exec);
    let names = |sets: &[Vec<usize>]| graph.name_sets(sets);
    Ok(NetworkAnalysis {
        level,
        axis: matrix.axis,
        threshold,
        mode,
        edges: graph
            .edges
            .iter()
            .map(|e| NamedEdge {
                a: graph.nodes[e.a].clone(),
                b: graph.nodes[e.b].clone(),
                weight: e.weight,
            })
            .collect(),
        components: names(&connected_components(&simple)),
        communities: names(&communities.communities),
        modularity: communities.modularity,
        modularity_history: communities.history,
        cliques: CliqueSummary {
            membership: graph.nodes.iter().cloned().zip(cliques.membership.iter().copied()).collect(),
            count: cliques.cliques.len(),
            largest_size: cliques.largest_size(),
            largest_count: cliques.maximum_count(),
            cliques: names(&cliques.cliques),
        },
        betweenness: graph.nodes.iter().cloned().zip(centrality).collect(),
        nodes: graph.nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStage {
    pub matrices: Vec<(EntityLevel, CorrelationMatrix)>,
    pub analyses: Vec<NetworkAnalysis>,
}

pub const LEVELS: [EntityLevel; 2] = [EntityLevel::Dimension, EntityLevel::Condition];
pub const AXES: [CorrelationAxis; 3] = [CorrelationAxis::Impact, CorrelationAxis::Likelihood, CorrelationAxis::Combined];

/// Correlation matrices for both entity levels and all axes, and network
/// analytics on `config.graph_axis` at every threshold.
pub fn run_network(
    field: &MorphologicalField,
    pairs: &[ScenarioPair],
    responses: Option<(&[SurveyResponse], &Scales)>,
    config: &PipelineConfig,
    exec: Execution,
) -> Result<NetworkStage> {
    let mut matrices = Vec::new();
    let mut analyses = Vec::new();
    for level in LEVELS {
        for axis in AXES {
            let profiles = match (config.profile_source, responses) {
                (ProfileSource::PairProfile, _) => pair_profiles(field, pairs, level, axis)?,
                (ProfileSource::Respondent, Some((rs, scales))) => respondent_profiles(field, rs, scales, level, axis)?,
                (ProfileSource::Respondent, None) => {
                    return Err(Error::parameter(
                        "profile-source",
                        "respondent profiles need raw survey responses",
                    ))
                }
            };
            let m = correlation_matrix(&profiles)?;
            if axis == config.graph_axis {
                for &t in &config.thresholds {
                    analyses.push(analyze_network(&m, level, t, config.edge_mode, exec)?);
                }
            }
            matrices.push((level, m));
        }
    }
    Ok(NetworkStage { matrices, analyses })
}

pub fn run_clusters(pairs: &[ScenarioPair], config: &PipelineConfig, exec: Execution) -> Result<PairClustering> {
    config.validate()?;
    cluster_pairs(pairs, &config.kmeans(), exec)
}

/// A published scenario table next to its recomputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAverage {
    pub name: String,
    pub printed: (f64, f64),
    pub recomputed: (f64, f64),
    pub delta: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStage {
    pub affinities: AffinityTable,
    pub scenarios: Vec<Scenario>,
    pub plot: PlotData,
    /// Only for the bundled study.
    pub concordance: Option<Concordance>,
    pub reference_averages: Vec<ReferenceAverage>,
}

fn is_bundled_study(field: &MorphologicalField) -> bool {
    field.id() == dataset::bundled_field().id()
}

pub fn run_scenarios(
    field: &MorphologicalField,
    scores: &ScoreTable,
    clustering: &PairClustering,
    bins: usize,
) -> Result<ScenarioStage> {
    let affinities = condition_affinities(field, clustering)?;
    let scenarios = assemble_scenarios(field, scores, &affinities)?;
    let plot = risk_matrix_plot_data(&condition_points(field, scores), bins)?;
    let bundled = is_bundled_study(field);
    let reference_averages = if bundled {
        reference::SCENARIO_TABLES
            .iter()
            .map(|t| ReferenceAverage {
                name: t.name.to_string(),
                printed: t.printed_average,
                recomputed: t.recomputed_average(),
                delta: t.delta(),
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ScenarioStage {
        concordance: bundled.then(|| scorecard_concordance(&scenarios)),
        affinities,
        scenarios,
        plot,
        reference_averages,
    })
}

// ---------------------------------------------------------------------------
// Inputs

/// A document loaded from a built-in name or a file, with its digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub source: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Resolved inputs for the first stage.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub field: MorphologicalField,
    pub scores: Option<ScoreTable>,
    pub responses: Option<Vec<SurveyResponse>>,
    pub judgments: Vec<ConsistencyJudgment>,
    pub records: Vec<InputRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct InputSpec {
    /// Built-in name or path to a field JSON document.
    pub field: String,
    pub scores: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub impact_scale: Option<PathBuf>,
    pub likelihood_scale: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
}

impl InputSpec {
    pub fn builtin(name: &str) -> Self {
        InputSpec {
            field: name.to_string(),
            ..Default::default()
        }
    }

    pub fn load(&self, weights: &ExpertiseWeights) -> Result<Inputs> {
        let mut records = Vec::new();
        let builtin = dataset::builtin_field(&self.field);
        let field = match &builtin {
            Some(f) => {
                records.push(InputRecord {
                    role: "field".into(),
                    source: format!("builtin:{}", self.field),
                    sha256: sha256_hex(f.to_json_pretty().as_bytes()),
                });
                f.clone()
            }
            None => {
                let path = Path::new(&self.field);
                let text = read_text(path)?;
                records.push(InputRecord {
                    role: "field".into(),
                    source: self.field.clone(),
                    sha256: sha256_hex(text.as_bytes()),
                });
                MorphologicalField::from_json_str(&text)?
            }
        };
        let scales = self.scales(&mut records)?;
        let mut responses = None;
        let scores = match (&self.scores, &self.responses) {
            (Some(_), Some(_)) => {
                return Err(Error::parameter("scores", "give either aggregate scores or responses, not both"))
            }
            (Some(path), None) => {
                let text = read_text(path)?;
                records.push(InputRecord {
                    role: "scores".into(),
                    source: path.display().to_string(),
                    sha256: sha256_hex(text.as_bytes()),
                });
                Some(ScoreTable::read_csv(&field, text.as_bytes())?)
            }
            (None, Some(path)) => {
                let text = read_text(path)?;
                records.push(InputRecord {
                    role: "responses".into(),
                    source: path.display().to_string(),
                    sha256: sha256_hex(text.as_bytes()),
                });
                let rs = read_responses_csv(text.as_bytes())?;
                let table = crate::assess::aggregate(&field, &rs, &scales, weights)?;
                responses = Some(rs);
                Some(table)
            }
            (None, None) if builtin.is_some() => {
                let t = dataset::builtin_scores(&self.field, &field)?;
                if t.is_some() {
                    records.push(InputRecord {
                        role: "scores".into(),
                        source: format!("builtin:{}", self.field),
                        sha256: sha256_hex(dataset::bundled_scores_csv().as_bytes()),
                    });
                }
                t
            }
            (None, None) => None,
        };
        let judgments = match &self.judgments {
            Some(path) => {
                let text = read_text(path)?;
                records.push(InputRecord {
                    role: "judgments".into(),
                    source: path.display().to_string(),
                    sha256: sha256_hex(text.as_bytes()),
                });
                read_judgments_csv(text.as_bytes())?
            }
            None => Vec::new(),
        };
        Ok(Inputs {
            field,
            scores,
            responses,
            judgments,
            records,
        })
    }

    fn scales(&self, records: &mut Vec<InputRecord>) -> Result<Scales> {
        let mut scales = dataset::bundled_scales();
        for (role, path, slot) in [
            ("impact-scale", &self.impact_scale, &mut scales.impact),
            ("likelihood-scale", &self.likelihood_scale, &mut scales.likelihood),
        ] {
            if let Some(path) = path {
                let text = read_text(path)?;
                records.push(InputRecord {
                    role: role.into(),
                    source: path.display().to_string(),
                    sha256: sha256_hex(text.as_bytes()),
                });
                *slot = crate::assess::LikertScale::from_json_str(&text)?;
            }
        }
        Ok(scales)
    }
}

// ---------------------------------------------------------------------------
// Bundle on disk

pub mod files {
    pub const FIELD: &str = "field.json";
    pub const SCORES: &str = "scores.csv";
    pub const RESPONSES: &str = "responses.json";
    pub const JUDGMENTS: &str = "judgments.csv";
    pub const PAIRS_CSV: &str = "pairs.csv";
    pub const PAIRS_JSON: &str = "pairs.json";
    pub const NETWORK: &str = "network.json";
    pub const CLUSTERS_CSV: &str = "clusters.csv";
    pub const MODEL: &str = "model.json";
    pub const AFFINITIES: &str = "affinities.csv";
    pub const SCORECARD: &str = "scorecard.csv";
    pub const SCENARIOS: &str = "scenarios.json";
    pub const PLOT: &str = "plot-data.json";
    pub const SUMMARY: &str = "summary.txt";
    pub const CONFIG: &str = "config.json";
    pub const INPUTS: &str = "inputs.json";
    pub const MANIFEST: &str = "manifest.json";
}

/// Which stage failed, for diagnostics and exit codes.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage: name, error })
}

/// Result of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub config: PipelineConfig,
    pub inputs: Vec<InputRecord>,
    pub headline: Headline,
    /// File name → sha256 of every bundle file except the manifest.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub field: String,
    pub dimensions: usize,
    pub conditions: usize,
    pub configurations: String,
    pub consistent_configurations: String,
    pub cross_dimension_pairs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_pair_count: Option<u64>,
    pub pairs_generated: usize,
    pub pairs_consistent: usize,
    pub skipped_conditions: Vec<String>,
    pub cluster_sizes: Vec<usize>,
    pub inertia: f64,
    pub scenario_averages: Vec<(String, f64, f64)>,
}

/// An output directory holding stage files.
#[derive(Debug, Clone)]
pub struct Bundle {
    dir: PathBuf,
}

impl Bundle {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Bundle { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
            context: name.to_string(),
            path: String::new(),
            message: e.to_string(),
        })?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    /// Reads a file produced by an earlier stage, naming that stage when the
    /// file is missing.
    fn read(&self, name: &str, producer: &str) -> Result<String> {
        let p = self.path(name);
        if !p.exists() {
            return Err(Error::parameter(
                "bundle",
                format!("{} is missing; run `{producer}` first", p.display()),
            ));
        }
        read_text(&p)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str, producer: &str) -> Result<T> {
        let text = self.read(name, producer)?;
        crate::field::parse_json(&text, name)
    }

    pub fn load_field(&self) -> Result<MorphologicalField> {
        MorphologicalField::from_json_str(&self.read(files::FIELD, "pairs")?)
    }

    pub fn load_scores(&self, field: &MorphologicalField) -> Result<ScoreTable> {
        ScoreTable::read_csv(field, self.read(files::SCORES, "pairs")?.as_bytes())
    }

    pub fn load_pairs(&self) -> Result<PairsStage> {
        self.read_json(files::PAIRS_JSON, "pairs")
    }

    pub fn load_clustering(&self) -> Result<PairClustering> {
        self.read_json(files::MODEL, "cluster")
    }

    /// Configuration recorded by the stages run so far.
    pub fn load_config(&self) -> Result<PipelineConfig> {
        self.read_json(files::CONFIG, "pairs")
    }

    pub fn load_scenarios(&self) -> Result<ScenarioStage> {
        self.read_json(files::SCENARIOS, "scenarios")
    }

    /// Records `config` as the bundle's configuration. Later stages may
    /// change it; the manifest reports the final state.
    fn record_config(&self, config: &PipelineConfig) -> Result<()> {
        config.validate()?;
        if self.path(files::CONFIG).exists() && self.load_config()? == *config {
            return Ok(());
        }
        self.write_json(files::CONFIG, config)
    }

    /// Stage 1: writes the configuration, input records, field, scores,
    /// judgments and pair files.
    pub fn write_pairs_stage(&self, inputs: &Inputs, config: &PipelineConfig, exec: Execution) -> Result<PairsStage> {
        config.validate()?;
        let scores = inputs.scores.as_ref().ok_or_else(|| {
            Error::parameter("scores", "pair generation needs aggregate scores or survey responses")
        })?;
        let out = run_pairs(&inputs.field, scores, &inputs.judgments, exec)?;
        self.write_json(files::CONFIG, config)?;
        self.write_json(files::INPUTS, &inputs.records)?;
        let mut field_text = inputs.field.to_json_pretty();
        field_text.push('\n');
        self.write(files::FIELD, field_text.as_bytes())?;
        self.write_with(files::SCORES, |b| scores.write_csv(b))?;
        self.write_with(files::JUDGMENTS, |b| write_judgments_csv(&inputs.judgments, b))?;
        if let Some(rs) = &inputs.responses {
            self.write_json(files::RESPONSES, rs)?;
        }
        self.write_with(files::PAIRS_CSV, |b| write_pairs_csv(&out.pairs, b))?;
        self.write_json(files::PAIRS_JSON, &out)?;
        Ok(out)
    }

    /// Stage 2: correlation matrices, graph edge lists and network analytics.
    pub fn write_network_stage(&self, config: &PipelineConfig, exec: Execution) -> Result<NetworkStage> {
        self.record_config(config)?;
        let field = self.load_field()?;
        let pairs = self.load_pairs()?;
        let responses: Option<Vec<SurveyResponse>> = if config.profile_source == ProfileSource::Respondent {
            Some(self.read_json(files::RESPONSES, "pairs --responses")?)
        } else {
            None
        };
        let scales = dataset::bundled_scales();
        let out = run_network(
            &field,
            &pairs.pairs,
            responses.as_deref().map(|r| (r, &scales)),
            config,
            exec,
        )?;
        for (level, m) in &out.matrices {
            let name = format!("correlation-{}-{}.csv", level_name(*level), m.axis.as_str());
            self.write_with(&name, |b| m.write_csv(b))?;
        }
        for a in &out.analyses {
            let name = format!("graph-edges-{}-{:.2}.csv", level_name(a.level), a.threshold);
            self.write_with(&name, |b| {
                let mut w = csv::Writer::from_writer(b);
                let ctx = "writing graph edges";
                w.write_record(["a", "b", "weight"]).map_err(|e| Error::csv(ctx, e))?;
                for e in &a.edges {
                    w.write_record([&e.a, &e.b, &format!("{:.4}", e.weight)])
                        .map_err(|e| Error::csv(ctx, e))?;
                }
                w.flush().map_err(|e| Error::io("graph edges", e))?;
                Ok(())
            })?;
        }
        self.write_json(files::NETWORK, &out.analyses)?;
        Ok(out)
    }

    /// Stage 3: k-means over consistent pairs.
    pub fn write_cluster_stage(&self, config: &PipelineConfig, exec: Execution) -> Result<PairClustering> {
        self.record_config(config)?;
        let pairs = self.load_pairs()?;
        let out = run_clusters(&pairs.pairs, config, exec)?;
        self.write_with(files::CLUSTERS_CSV, |b| out.write_csv(b))?;
        self.write_json(files::MODEL, &out)?;
        Ok(out)
    }

    /// Stage 4: scenarios, scorecard, plot data and the text summary.
    pub fn write_scenario_stage(&self, config: &PipelineConfig) -> Result<ScenarioStage> {
        self.record_config(config)?;
        let field = self.load_field()?;
        let scores = self.load_scores(&field)?;
        let pairs = self.load_pairs()?;
        let clustering = self.load_clustering()?;
        let out = run_scenarios(&field, &scores, &clustering, config.bins)?;
        self.write_with(files::AFFINITIES, |b| out.affinities.write_csv(b))?;
        self.write_with(files::SCORECARD, |b| write_scorecard_csv(&out.scenarios, b))?;
        for s in &out.scenarios {
            self.write_with(&format!("scenario-{}.csv", s.cluster + 1), |b| write_scenario_csv(s, b))?;
        }
        self.write_json(files::SCENARIOS, &out)?;
        self.write_json(files::PLOT, &out.plot)?;
        let headline = headline(&field, &pairs, &clustering, &out);
        self.write(files::SUMMARY, summary_text(&headline, &clustering, &out).as_bytes())?;
        Ok(out)
    }

    /// Writes manifest.json from the files of a completed bundle.
    pub fn write_manifest(&self) -> Result<Manifest> {
        let config = self.load_config()?;
        let inputs: Vec<InputRecord> = self.read_json(files::INPUTS, "pairs")?;
        let field = self.load_field()?;
        let pairs = self.load_pairs()?;
        let clustering = self.load_clustering()?;
        let scenarios = self.load_scenarios()?;
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: "gma".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs,
            headline: headline(&field, &pairs, &clustering, &scenarios),
            outputs: self.digests()?,
        };
        self.write_json(files::MANIFEST, &manifest)?;
        Ok(manifest)
    }

    /// Every stage in order, then the manifest. Produces the same bytes as
    /// running the stages one by one with the same configuration.
    pub fn run_all(
        &self,
        inputs: &Inputs,
        config: &PipelineConfig,
        exec: Execution,
    ) -> std::result::Result<Manifest, StageError> {
        stage("config", config.validate())?;
        stage("pairs", self.write_pairs_stage(inputs, config, exec))?;
        stage("network", self.write_network_stage(config, exec))?;
        stage("cluster", self.write_cluster_stage(config, exec))?;
        stage("scenarios", self.write_scenario_stage(config))?;
        stage("manifest", self.write_manifest())
    }

    /// sha256 of every regular file in the bundle except the manifest.
    pub fn digests(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == files::MANIFEST || !entry.path().is_file() {
                continue;
            }
            let bytes = fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            out.insert(name, sha256_hex(&bytes));
        }
        Ok(out)
    }
}

fn level_name(level: EntityLevel) -> &'static str {
    match level {
        EntityLevel::Dimension => "dimension",
        EntityLevel::Condition => "condition",
    }
}

fn headline(
    field: &MorphologicalField,
    pairs: &PairsStage,
    clustering: &PairClustering,
    scenarios: &ScenarioStage,
) -> Headline {
    Headline {
        field: field.id().to_string(),
        dimensions: field.dimension_count(),
        conditions: field.condition_count(),
        configurations: pairs.configurations.clone(),
        consistent_configurations: pairs.consistent_configurations.clone(),
        cross_dimension_pairs: pairs.cross_dimension_pairs,
        reference_pair_count: field.metadata().get("reference-pair-count").and_then(|v| v.parse().ok()),
        pairs_generated: pairs.generated,
        pairs_consistent: pairs.survivors,
        skipped_conditions: pairs.skipped.clone(),
        cluster_sizes: clustering.summaries.iter().map(|s| s.size).collect(),
        inertia: clustering.model.inertia,
        scenario_averages: scenarios
            .scenarios
            .iter()
            .map(|s| (s.name.clone(), s.average_impact, s.average_likelihood))
            .collect(),
    }
}

// Keeps "-0.000" out of the summary.
fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0 + 0.0
}

fn summary_text(h: &Headline, clustering: &PairClustering, s: &ScenarioStage) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "field {}: {} dimensions, {} conditions", h.field, h.dimensions, h.conditions);
    let _ = writeln!(t, "configurations: {}", h.configurations);
    let _ = writeln!(t, "consistent configurations: {}", h.consistent_configurations);
    let _ = write!(t, "cross-dimension pairs: {}", h.cross_dimension_pairs);
    if let Some(r) = h.reference_pair_count {
        let diff = h.cross_dimension_pairs as i64 - r as i64;
        let _ = write!(t, " (reference total {r}, difference {diff:+})");
    }
    let _ = writeln!(t);
    let _ = writeln!(t, "pairs generated: {}, consistent: {}", h.pairs_generated, h.pairs_consistent);
    if h.skipped_conditions.is_empty() {
        let _ = writeln!(t, "skipped conditions: none");
    } else {
        let _ = writeln!(t, "skipped conditions: {}", h.skipped_conditions.join(", "));
    }
    let _ = writeln!(
        t,
        "clusters (k={}, seed {}): sizes {:?}, inertia {:.6}",
        clustering.model.k, clustering.model.seed, h.cluster_sizes, h.inertia
    );
    for c in &clustering.summaries {
        let _ = writeln!(
            t,
            "  cluster {}: {} pairs, mean impact {:.3}, mean likelihood {:.3}",
            c.cluster + 1,
            c.size,
            c.mean_impact,
            c.mean_likelihood
        );
    }
    if !s.affinities.flagged.is_empty() {
        let _ = writeln!(t, "conditions without pairs: {}", s.affinities.flagged.join(", "));
    }
    for sc in &s.scenarios {
        let _ = writeln!(
            t,
            "{}: average impact {:.3}, average likelihood {:.3}",
            sc.name, sc.average_impact, sc.average_likelihood
        );
        let width = sc.rows.iter().map(|r| r.condition.len()).max().unwrap_or(0);
        for r in &sc.rows {
            let _ = writeln!(t, "  {:<width$}  {:.2} {:.2}", r.condition, r.impact, r.likelihood);
        }
    }
    if let Some(c) = &s.concordance {
        let _ = writeln!(
            t,
            "scorecard concordance: {}/{} in cluster order, {}/{} best ordering {:?}",
            c.aligned_matches, c.compared, c.best_matches, c.compared, c.best_order
        );
    }
    for r in &s.reference_averages {
        let _ = writeln!(
            t,
            "reference table {}: printed {:.3}/{:.3}, recomputed {:.3}/{:.3}, delta {:+.3}/{:+.3}",
            r.name,
            r.printed.0,
            r.printed.1,
            r.recomputed.0,
            r.recomputed.1,
            round3(r.delta.0),
            round3(r.delta.1)
        );
    }
    t
}
