//! Analysis stages run by the service, one artifact per stage.

use std::fmt;
use std::str::FromStr;

use gma_core::assess::ScoreTable;
use gma_core::cca::{ScenarioPair, Verdict};
use gma_core::cluster::PairClustering;
use gma_core::graph::{
    correlation_matrix, pair_profiles, respondent_profiles, CorrelationAxis, CorrelationMatrix, EdgeMode, EntityLevel,
};
use gma_core::pipeline::{analyze_network, run_clusters, run_pairs, run_scenarios, PairsStage, PipelineConfig, ProfileSource};
use gma_core::report::scenario_table;
use gma_core::space::count_configurations;
use gma_core::Execution;
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{ApiError, ApiResult};
use crate::store::{Artifact, FieldDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Pairs,
    Correlation,
    Communities,
    Cliques,
    Centrality,
    Clusters,
    Scenarios,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Pairs,
        Stage::Correlation,
        Stage::Communities,
        Stage::Cliques,
        Stage::Centrality,
        Stage::Clusters,
        Stage::Scenarios,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pairs => "pairs",
            Stage::Correlation => "correlation",
            Stage::Communities => "communities",
            Stage::Cliques => "cliques",
            Stage::Centrality => "centrality",
            Stage::Clusters => "clusters",
            Stage::Scenarios => "scenarios",
        }
    }

    pub fn prerequisite(self) -> Option<Stage> {
        match self {
            Stage::Pairs => None,
            Stage::Correlation | Stage::Clusters => Some(Stage::Pairs),
            Stage::Communities | Stage::Cliques | Stage::Centrality => Some(Stage::Correlation),
            Stage::Scenarios => Some(Stage::Clusters),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = ApiError;

    fn from_str(s: &str) -> ApiResult<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| ApiError::not_found("analysis stage", s))
    }
}

/// Request parameters. Only those relevant to the stage are used and
/// recorded, with defaults filled in.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub n_init: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub level: Option<EntityLevel>,
    pub axis: Option<CorrelationAxis>,
    pub source: Option<ProfileSource>,
    pub threshold: Option<f64>,
    pub mode: Option<EdgeMode>,
    pub bins: Option<usize>,
}

fn parse_params(value: &Value) -> ApiResult<Params> {
    if value.is_null() {
        return Ok(Params::default());
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ApiError::invalid(format!("parameters: {}", e.into_inner())).at(path)
    })
}

fn from_result<T: serde::de::DeserializeOwned>(a: &Artifact) -> ApiResult<T> {
    serde_json::from_value(a.result.clone())
        .map_err(|e| ApiError::internal(format!("artifact {} is unreadable: {e}", a.id)))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn scores(doc: &FieldDocument) -> ApiResult<ScoreTable> {
    doc.score_table()?.ok_or_else(|| {
        ApiError::invalid("no scores attached; upload responses or scores first").at("scores")
    })
}

#[derive(Deserialize)]
struct MatrixDoc {
    level: EntityLevel,
    ids: Vec<String>,
    axis: CorrelationAxis,
    values: Vec<Vec<Option<f64>>>,
}

/// Computes a stage. Returns the effective parameters and the result.
pub fn run(
    stage: Stage,
    doc: &FieldDocument,
    input: Option<&Artifact>,
    raw: &Value,
    budget: u64,
    exec: Execution,
) -> ApiResult<(Value, Value)> {
    let p = parse_params(raw)?;
    let defaults = PipelineConfig::default();
    match stage {
        Stage::Pairs => {
            let table = scores(doc)?;
            let constrained = doc.judgments.iter().any(|j| j.verdict == Verdict::Inconsistent);
            if constrained && count_configurations(&doc.field) > BigUint::from(budget) {
                return Err(ApiError::invalid(format!(
                    "counting constrained configurations exceeds the compute budget of {budget}; too large, use CLI enumeration"
                )));
            }
            let out = run_pairs(&doc.field, &table, &doc.judgments, exec)?;
            Ok((json!({}), to_value(&out)))
        }
        Stage::Correlation => {
            let pairs: PairsStage = from_result(input.expect("prerequisite"))?;
            let level = p.level.unwrap_or(EntityLevel::Condition);
            let axis = p.axis.unwrap_or(defaults.graph_axis);
            let source = p.source.unwrap_or_default();
            let profiles = match source {
                ProfileSource::PairProfile => pair_profiles(&doc.field, &pairs.pairs, level, axis)?,
                ProfileSource::Respondent => {
                    let scales = doc.scales.as_ref().filter(|_| !doc.responses.is_empty()).ok_or_else(|| {
                        ApiError::invalid("respondent profiles need uploaded survey responses").at("source")
                    })?;
                    respondent_profiles(&doc.field, &doc.responses, scales, level, axis)?
                }
            };
            let m = correlation_matrix(&profiles)?;
            let mut result = to_value(&m);
            result["level"] = to_value(&level);
            result["undefined"] = to_value(&m.undefined_entities());
            Ok((json!({"level": level, "axis": axis, "source": source}), result))
        }
        Stage::Communities | Stage::Cliques | Stage::Centrality => {
            let doc_m: MatrixDoc = from_result(input.expect("prerequisite"))?;
            let m = CorrelationMatrix::from_values(doc_m.ids, doc_m.axis, doc_m.values)?;
            let threshold = p.threshold.unwrap_or(defaults.thresholds[0]);
            let mode = p.mode.unwrap_or(defaults.edge_mode);
            let a = analyze_network(&m, doc_m.level, threshold, mode, exec)?;
            let base = json!({
                "level": a.level,
                "axis": a.axis,
                "threshold": a.threshold,
                "mode": a.mode,
                "nodes": a.nodes,
                "edges": a.edges,
            });
            let mut result = base;
            match stage {
                Stage::Communities => {
                    result["communities"] = to_value(&a.communities);
                    result["modularity"] = to_value(&a.modularity);
                    result["modularity_history"] = to_value(&a.modularity_history);
                    result["components"] = to_value(&a.components);
                }
                Stage::Cliques => result["cliques"] = to_value(&a.cliques),
                _ => result["betweenness"] = to_value(&a.betweenness),
            }
            Ok((json!({"threshold": threshold, "mode": mode}), result))
        }
        Stage::Clusters => {
            let pairs: PairsStage = from_result(input.expect("prerequisite"))?;
            let config = PipelineConfig {
                k: p.k.unwrap_or(defaults.k),
                seed: p.seed.unwrap_or(defaults.seed),
                n_init: p.n_init.unwrap_or(defaults.n_init),
                max_iter: p.max_iter.unwrap_or(defaults.max_iter),
                tol: p.tol.unwrap_or(defaults.tol),
                ..defaults
            };
            let consistent: Vec<ScenarioPair> = pairs.pairs;
            let out = run_clusters(&consistent, &config, exec)?;
            Ok((to_value(&config.kmeans()), to_value(&out)))
        }
        Stage::Scenarios => {
            let clustering: PairClustering = from_result(input.expect("prerequisite"))?;
            let table = scores(doc)?;
            let bins = p.bins.unwrap_or(defaults.bins);
            let out = run_scenarios(&doc.field, &table, &clustering, bins)?;
            let mut result = to_value(&out);
            result["tables"] = to_value(&out.scenarios.iter().map(scenario_table).collect::<Vec<_>>());
            Ok((json!({"bins": bins}), result))
        }
    }
}
