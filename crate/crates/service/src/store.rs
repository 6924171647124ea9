//! File-backed field documents, artifacts and the CCA audit log.
//!
//! Layout under the data directory:
//! `fields/{id}.json`, `artifacts/{aid}.json`, `audit/{id}.jsonl`.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use gma_core::assess::{aggregate, ConditionScore, ExpertiseWeights, Scales, ScoreTable, SurveyResponse};
use gma_core::cca::{pair_key, ConsistencyJudgment};
use gma_core::space::{
    count_configurations, count_consistent_configurations_with, count_cross_dimension_pairs,
    remaining_per_condition, ConstraintSet,
};
use gma_core::{dataset, Execution, MorphologicalField};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analysis::{self, Stage};
use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDocument {
    pub id: String,
    pub revision: u64,
    #[serde(default)]
    pub deleted: bool,
    pub field: MorphologicalField,
    #[serde(default)]
    pub scores: Option<Vec<ConditionScore>>,
    #[serde(default)]
    pub responses: Vec<SurveyResponse>,
    #[serde(default)]
    pub scales: Option<Scales>,
    #[serde(default)]
    pub judgments: Vec<ConsistencyJudgment>,
    /// Most recent artifact per stage.
    #[serde(default)]
    pub latest: BTreeMap<Stage, String>,
}

impl FieldDocument {
    pub fn score_table(&self) -> ApiResult<Option<ScoreTable>> {
        match &self.scores {
            Some(s) => Ok(Some(ScoreTable::new(&self.field, s.clone())?)),
            None => Ok(None),
        }
    }

    pub fn constraints(&self) -> ApiResult<ConstraintSet> {
        Ok(gma_core::cca::constraints_from_judgments(&self.field, &self.judgments)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: String,
    pub field: String,
    pub stage: Stage,
    /// Field revision the artifact was computed from.
    pub revision: u64,
    pub params: Value,
    /// Artifacts this one was computed from.
    pub inputs: Vec<String>,
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactRef {
    pub id: String,
    pub revision: u64,
    pub stale: bool,
}

/// What `GET /fields/{id}` returns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldView {
    pub id: String,
    pub revision: u64,
    pub field: MorphologicalField,
    pub scores: Option<Vec<ConditionScore>>,
    pub response_count: usize,
    pub judgment_count: usize,
    pub artifacts: BTreeMap<Stage, ArtifactRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSummary {
    pub id: String,
    pub title: String,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactView {
    pub stale: bool,
    pub current_revision: u64,
    pub artifact: Artifact,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateField {
    /// Name of a built-in field; `bundled` also attaches its published scores.
    pub builtin: Option<String>,
    pub field: Option<Value>,
    pub scores: Option<Vec<ConditionScore>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateField {
    pub field: Value,
    pub expected_revision: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponsesUpload {
    pub responses: Option<Vec<SurveyResponse>>,
    /// Same rows as `responses`, as CSV text.
    pub csv: Option<String>,
    /// Already-aggregated scores; replaces responses.
    pub scores: Option<Vec<ConditionScore>>,
    pub scales: Option<Scales>,
    pub weights: Option<ExpertiseWeights>,
    pub expected_revision: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoresSummary {
    pub revision: u64,
    pub responses: usize,
    pub assessed: usize,
    pub unassessed: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgmentsUpdate {
    pub judgments: Vec<ConsistencyJudgment>,
    pub expected_revision: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgmentsView {
    pub revision: u64,
    pub judgments: Vec<ConsistencyJudgment>,
    pub cross_dimension_pairs: u64,
    pub inconsistent: usize,
    pub survivors: u64,
    /// Change in survivors caused by the request; zero for reads.
    pub survivors_delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Remaining {
    pub condition: String,
    pub count: String,
}

/// Counts are decimal strings: they can exceed what JSON numbers carry
/// exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploreResult {
    pub revision: u64,
    pub pins: Vec<String>,
    pub cca: bool,
    pub configurations: String,
    pub consistent: String,
    pub remaining: Vec<Remaining>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry<'a> {
    pub field: &'a str,
    pub revision: u64,
    pub recorded_at: u64,
    pub judgment: &'a ConsistencyJudgment,
}

type Handle = Arc<RwLock<FieldDocument>>;

pub struct Store {
    dir: PathBuf,
    budget: u64,
    exec: Execution,
    fields: RwLock<BTreeMap<String, Handle>>,
    next_id: Mutex<u64>,
}

fn io_err(path: &Path, e: std::io::Error) -> ApiError {
    ApiError::internal(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> ApiResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("documents serialize");
    v.push(b'\n');
    v
}

fn parse_field(value: &Value) -> ApiResult<MorphologicalField> {
    Ok(MorphologicalField::from_json_str(&value.to_string())?)
}

fn check_revision(doc: &FieldDocument, expected: Option<u64>) -> ApiResult<()> {
    match expected {
        Some(r) if r != doc.revision => Err(ApiError::conflict(
            "revision_conflict",
            format!("field is at revision {}, not {r}", doc.revision),
        )
        .at("expected_revision")),
        _ => Ok(()),
    }
}

fn inconsistent_count(doc: &FieldDocument) -> ApiResult<usize> {
    Ok(doc.constraints()?.len())
}

impl Store {
    /// Opens (creating if needed) a store rooted at `dir`. `budget` caps the
    /// unconstrained configuration count that explore will handle.
    pub fn open(dir: impl Into<PathBuf>, budget: u64, exec: Execution) -> ApiResult<Self> {
        let dir = dir.into();
        for sub in ["fields", "artifacts", "audit"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
        }
        let mut fields = BTreeMap::new();
        let mut next = 1;
        let fdir = dir.join("fields");
        for entry in fs::read_dir(&fdir).map_err(|e| io_err(&fdir, e))? {
            let path = entry.map_err(|e| io_err(&fdir, e))?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let doc: FieldDocument = serde_json::from_str(&text)
                .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
            if let Some(n) = doc.id.strip_prefix("fld-").and_then(|n| n.parse::<u64>().ok()) {
                next = next.max(n + 1);
            }
            fields.insert(doc.id.clone(), Arc::new(RwLock::new(doc)));
        }
        Ok(Store {
            dir,
            budget,
            exec,
            fields: RwLock::new(fields),
            next_id: Mutex::new(next),
        })
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    fn handle(&self, id: &str) -> ApiResult<Handle> {
        self.fields
            .read()
            .expect("index lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("field", id))
    }

    /// Read access to a live document.
    fn read<T>(&self, id: &str, f: impl FnOnce(&FieldDocument) -> ApiResult<T>) -> ApiResult<T> {
        let h = self.handle(id)?;
        let doc = h.read().expect("field lock");
        if doc.deleted {
            return Err(ApiError::gone(id));
        }
        f(&doc)
    }

    /// Serialized mutation of a live document. The new state is persisted
    /// before the lock is released, so readers see the old or the new
    /// revision and nothing in between.
    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut FieldDocument) -> ApiResult<T>) -> ApiResult<T> {
        let h = self.handle(id)?;
        let mut doc = h.write().expect("field lock");
        if doc.deleted {
            return Err(ApiError::gone(id));
        }
        let mut next = doc.clone();
        let out = f(&mut next)?;
        write_atomic(&self.field_path(id), &to_json(&next))?;
        *doc = next;
        Ok(out)
    }

    fn field_path(&self, id: &str) -> PathBuf {
        self.dir.join("fields").join(format!("{id}.json"))
    }

    fn artifact_path(&self, aid: &str) -> PathBuf {
        self.dir.join("artifacts").join(format!("{aid}.json"))
    }

    pub fn audit_path(&self, id: &str) -> PathBuf {
        self.dir.join("audit").join(format!("{id}.jsonl"))
    }

    fn view(&self, doc: &FieldDocument) -> ApiResult<FieldView> {
        let mut artifacts = BTreeMap::new();
        for (stage, aid) in &doc.latest {
            let a = self.load_artifact(aid)?;
            artifacts.insert(
                *stage,
                ArtifactRef {
                    id: aid.clone(),
                    revision: a.revision,
                    stale: a.revision != doc.revision,
                },
            );
        }
        Ok(FieldView {
            id: doc.id.clone(),
            revision: doc.revision,
            field: doc.field.clone(),
            scores: doc.scores.clone(),
            response_count: doc.responses.len(),
            judgment_count: doc.judgments.len(),
            artifacts,
        })
    }

    pub fn list(&self) -> Vec<FieldSummary> {
        let index = self.fields.read().expect("index lock");
        index
            .values()
            .filter_map(|h| {
                let d = h.read().expect("field lock");
                (!d.deleted).then(|| FieldSummary {
                    id: d.id.clone(),
                    title: d.field.title().to_string(),
                    revision: d.revision,
                })
            })
            .collect()
    }

    pub fn create(&self, body: CreateField) -> ApiResult<FieldView> {
        let (field, scores) = match (&body.builtin, &body.field) {
            (Some(name), None) => {
                let field = dataset::builtin_field(name)
                    .ok_or_else(|| ApiError::invalid(format!("unknown built-in field `{name}`")).at("builtin"))?;
                let scores = match &body.scores {
                    Some(s) => Some(s.clone()),
                    None => dataset::builtin_scores(name, &field)?.map(|t| t.entries().to_vec()),
                };
                (field, scores)
            }
            (None, Some(value)) => (parse_field(value)?, body.scores.clone()),
            _ => return Err(ApiError::invalid("give exactly one of `builtin` or `field`")),
        };
        let scores = match scores {
            Some(s) => Some(ScoreTable::new(&field, s)?.entries().to_vec()),
            None => None,
        };
        let id = {
            let mut next = self.next_id.lock().expect("id lock");
            let id = format!("fld-{:04}", *next);
            *next += 1;
            id
        };
        let doc = FieldDocument {
            id: id.clone(),
            revision: 1,
            deleted: false,
            field,
            scores,
            responses: Vec::new(),
            scales: None,
            judgments: Vec::new(),
            latest: BTreeMap::new(),
        };
        write_atomic(&self.field_path(&id), &to_json(&doc))?;
        let view = self.view(&doc)?;
        self.fields
            .write()
            .expect("index lock")
            .insert(id, Arc::new(RwLock::new(doc)));
        Ok(view)
    }

    pub fn get(&self, id: &str) -> ApiResult<FieldView> {
        self.read(id, |doc| self.view(doc))
    }

    /// Replaces the field definition. Scores, responses and judgments that
    /// still refer to existing conditions are kept.
    pub fn update(&self, id: &str, body: UpdateField) -> ApiResult<FieldView> {
        let field = parse_field(&body.field)?;
        self.mutate(id, |doc| {
            check_revision(doc, body.expected_revision)?;
            doc.scores = doc.scores.take().map(|s| {
                s.into_iter()
                    .filter(|c| field.resolve(&c.condition).is_some())
                    .collect()
            });
            doc.responses.retain(|r| field.resolve(&r.condition).is_some());
            doc.judgments
                .retain(|j| pair_key(&field, &j.condition_a, &j.condition_b).is_ok());
            doc.field = field;
            doc.revision += 1;
            self.view(doc)
        })
    }

    /// Soft delete: the document stays on disk as a tombstone.
    pub fn delete(&self, id: &str) -> ApiResult<()> {
        self.mutate(id, |doc| {
            doc.deleted = true;
            doc.revision += 1;
            Ok(())
        })
    }

    pub fn upload_responses(&self, id: &str, body: ResponsesUpload) -> ApiResult<ScoresSummary> {
        let responses = match (&body.responses, &body.csv, &body.scores) {
            (Some(r), None, None) => Some(r.clone()),
            (None, Some(text), None) => Some(gma_core::assess::read_responses_csv(text.as_bytes())?),
            (None, None, Some(_)) => None,
            _ => return Err(ApiError::invalid("give exactly one of `responses`, `csv` or `scores`")),
        };
        self.mutate(id, |doc| {
            check_revision(doc, body.expected_revision)?;
            let table = match &responses {
                Some(rs) => {
                    let scales = body.scales.clone().unwrap_or_else(dataset::bundled_scales);
                    let weights = body.weights.unwrap_or_default();
                    let table = aggregate(&doc.field, rs, &scales, &weights)?;
                    doc.responses = rs.clone();
                    doc.scales = Some(scales);
                    table
                }
                None => {
                    let table = ScoreTable::new(&doc.field, body.scores.clone().unwrap_or_default())?;
                    doc.responses.clear();
                    doc.scales = None;
                    table
                }
            };
            doc.scores = Some(table.entries().to_vec());
            doc.revision += 1;
            let unassessed = table.unassessed();
            Ok(ScoresSummary {
                revision: doc.revision,
                responses: doc.responses.len(),
                assessed: table.len() - unassessed.len(),
                unassessed,
            })
        })
    }

    fn judgments_view(doc: &FieldDocument, delta: i64) -> ApiResult<JudgmentsView> {
        let census = count_cross_dimension_pairs(&doc.field)?;
        let inconsistent = inconsistent_count(doc)?;
        Ok(JudgmentsView {
            revision: doc.revision,
            judgments: doc.judgments.clone(),
            cross_dimension_pairs: census,
            inconsistent,
            survivors: census - inconsistent as u64,
            survivors_delta: delta,
        })
    }

    pub fn judgments(&self, id: &str) -> ApiResult<JudgmentsView> {
        self.read(id, |doc| Self::judgments_view(doc, 0))
    }

    /// Upserts judgments by pair; later entries win. Every accepted judgment
    /// is appended to the field's audit log.
    pub fn put_judgments(&self, id: &str, body: JudgmentsUpdate) -> ApiResult<JudgmentsView> {
        let audit = self.audit_path(id);
        self.mutate(id, |doc| {
            check_revision(doc, body.expected_revision)?;
            let before = inconsistent_count(doc)? as i64;
            for (i, j) in body.judgments.iter().enumerate() {
                let key = j
                    .key(&doc.field)
                    .map_err(|e| ApiError::from(e).at(format!("judgments[{i}]")))?;
                let slot = doc
                    .judgments
                    .iter()
                    .position(|old| old.key(&doc.field).is_ok_and(|k| k == key));
                match slot {
                    Some(s) => doc.judgments[s] = j.clone(),
                    None => doc.judgments.push(j.clone()),
                }
            }
            doc.revision += 1;
            let after = inconsistent_count(doc)? as i64;
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            let mut log = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&audit)
                .map_err(|e| io_err(&audit, e))?;
            for j in &body.judgments {
                let entry = AuditEntry {
                    field: &doc.id,
                    revision: doc.revision,
                    recorded_at: now,
                    judgment: j,
                };
                let mut line = serde_json::to_vec(&entry).expect("audit entry serializes");
                line.push(b'\n');
                log.write_all(&line).map_err(|e| io_err(&audit, e))?;
            }
            Self::judgments_view(doc, before - after)
        })
    }

    pub fn explore(&self, id: &str, pins: &[String], cca: bool) -> ApiResult<ExploreResult> {
        self.read(id, |doc| {
            let field = &doc.field;
            let total = count_configurations(field);
            if total > BigUint::from(self.budget) {
                return Err(ApiError::new(
                    axum::http::StatusCode::UNPROCESSABLE_ENTITY,
                    "too_large",
                    format!(
                        "{total} configurations exceed the compute budget of {}; too large, use CLI enumeration",
                        self.budget
                    ),
                ));
            }
            let mut constraints = if cca { doc.constraints()? } else { ConstraintSet::new() };
            let mut chosen: BTreeMap<usize, usize> = BTreeMap::new();
            for pin in pins {
                let idx = field
                    .resolve(pin)
                    .ok_or_else(|| ApiError::invalid(format!("unknown condition `{pin}`")).at("pin"))?;
                let dim = field.dimension_of(idx);
                if let Some(&other) = chosen.get(&dim) {
                    if other != idx {
                        return Err(ApiError::new(
                            axum::http::StatusCode::BAD_REQUEST,
                            "conflicting_pins",
                            format!("`{}` and `{pin}` are in the same dimension", field.qualified_id(other)),
                        )
                        .at("pin"));
                    }
                }
                chosen.insert(dim, idx);
                constraints.pin_index(field, idx)?;
            }
            let consistent = count_consistent_configurations_with(field, &constraints, self.exec)?;
            let remaining = remaining_per_condition(field, &constraints, self.exec)?
                .into_iter()
                .enumerate()
                .map(|(i, c)| Remaining {
                    condition: field.qualified_id(i),
                    count: c.to_string(),
                })
                .collect();
            Ok(ExploreResult {
                revision: doc.revision,
                pins: chosen.values().map(|&i| field.qualified_id(i)).collect(),
                cca,
                configurations: total.to_string(),
                consistent: consistent.to_string(),
                remaining,
            })
        })
    }

    fn load_artifact(&self, aid: &str) -> ApiResult<Artifact> {
        let valid = aid.len() == 16 && aid.bytes().all(|b| b.is_ascii_hexdigit());
        let path = self.artifact_path(aid);
        if !valid || !path.exists() {
            return Err(ApiError::not_found("artifact", aid));
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
    }

    pub fn artifact(&self, id: &str, aid: &str) -> ApiResult<ArtifactView> {
        let current = self.read(id, |doc| Ok(doc.revision))?;
        let artifact = self.load_artifact(aid)?;
        if artifact.field != id {
            return Err(ApiError::not_found("artifact", aid));
        }
        Ok(ArtifactView {
            stale: artifact.revision != current,
            current_revision: current,
            artifact,
        })
    }

    /// Raw stored bytes of an artifact.
    pub fn artifact_bytes(&self, aid: &str) -> ApiResult<Vec<u8>> {
        self.load_artifact(aid)?;
        let path = self.artifact_path(aid);
        fs::read(&path).map_err(|e| io_err(&path, e))
    }

    /// Runs one analysis stage against the current revision. The
    /// prerequisite stage must have a current artifact.
    pub fn run_stage(&self, id: &str, stage: Stage, params: &Value) -> ApiResult<ArtifactView> {
        let snapshot = self.read(id, |doc| Ok(doc.clone()))?;
        let input = match stage.prerequisite() {
            None => None,
            Some(pre) => {
                let aid = snapshot.latest.get(&pre).ok_or_else(|| {
                    ApiError::conflict(
                        "missing_prerequisite",
                        format!("stage `{}` needs a `{}` artifact; run `{}` first", stage, pre, pre),
                    )
                    .at(pre.to_string())
                })?;
                let a = self.load_artifact(aid)?;
                if a.revision != snapshot.revision {
                    return Err(ApiError::conflict(
                        "stale_prerequisite",
                        format!(
                            "the `{pre}` artifact is from revision {} but the field is at {}; rerun `{pre}`",
                            a.revision, snapshot.revision
                        ),
                    )
                    .at(pre.to_string()));
                }
                Some(a)
            }
        };
        let (params, result) = analysis::run(stage, &snapshot, input.as_ref(), params, self.budget, self.exec)?;
        let inputs: Vec<String> = input.iter().map(|a| a.id.clone()).collect();
        let key = serde_json::json!({
            "field": id,
            "stage": stage,
            "revision": snapshot.revision,
            "params": params,
            "inputs": inputs,
        });
        let aid = hex::encode(Sha256::digest(key.to_string().as_bytes()))[..16].to_string();
        let artifact = Artifact {
            id: aid.clone(),
            field: id.to_string(),
            stage,
            revision: snapshot.revision,
            params,
            inputs,
            result,
        };
        write_atomic(&self.artifact_path(&aid), &to_json(&artifact))?;
        let h = self.handle(id)?;
        let mut doc = h.write().expect("field lock");
        if doc.deleted {
            return Err(ApiError::gone(id));
        }
        if doc.revision == snapshot.revision {
            let mut next = doc.clone();
            next.latest.insert(stage, aid);
            write_atomic(&self.field_path(id), &to_json(&next))?;
            *doc = next;
        }
        Ok(ArtifactView {
            stale: artifact.revision != doc.revision,
            current_revision: doc.revision,
            artifact,
        })
    }
}
