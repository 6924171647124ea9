use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use gma_core::{dataset, Execution};
use gma_service::{router, Store, DEFAULT_COMPUTE_BUDGET};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct App {
    _dir: tempfile::TempDir,
    store: Arc<Store>,
}

impl App {
    fn new() -> Self {
        Self::with_budget(DEFAULT_COMPUTE_BUDGET)
    }

    fn with_budget(budget: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(dir.path(), budget, Execution::Parallel).unwrap());
        App { _dir: dir, store }
    }

    async fn raw(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
            .unwrap();
        let resp = router(self.store.clone()).oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, body).await;
        let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, v)
    }

    async fn bundled(&self) -> String {
        let (s, v) = self.call(Method::POST, "/api/v1/fields", Some(json!({"builtin": "bundled"}))).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }
}

fn url(id: &str, rest: &str) -> String {
    format!("/api/v1/fields/{id}{rest}")
}

#[tokio::test]
async fn create_read_round_trip() {
    let app = App::new();
    let field: Value = serde_json::from_str(&dataset::two_dim_4x4().to_json_pretty()).unwrap();
    let (s, created) = app.call(Method::POST, "/api/v1/fields", Some(json!({"field": field}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(created["revision"], 1);
    let id = created["id"].as_str().unwrap();
    let (s, read) = app.call(Method::GET, &url(id, ""), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(read["field"], field);
    assert_eq!(read, created);
    let (_, list) = app.call(Method::GET, "/api/v1/fields", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn validation_errors_carry_paths() {
    let app = App::new();
    let bad = json!({"field": {"id": "x", "title": "x", "dimensions": [{"id": "a", "name": "A", "conditions": 3}]}});
    let (s, e) = app.call(Method::POST, "/api/v1/fields", Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "validation");
    assert!(e["path"].as_str().unwrap().starts_with("dimensions[0]"), "{e}");
    let (s, e) = app.call(Method::POST, "/api/v1/fields", Some(json!({"feild": 1}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "invalid_body");
    let (s, e) = app.call(Method::GET, &url("fld-9999", ""), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "not_found");
    let (s, _) = app.call(Method::GET, "/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn update_bumps_revision_and_marks_artifacts_stale() {
    let app = App::new();
    let id = app.bundled().await;
    let (s, pairs) = app.call(Method::POST, &url(&id, "/analysis/pairs"), None).await;
    assert_eq!(s, StatusCode::CREATED, "{pairs}");
    assert_eq!(pairs["stale"], false);
    let aid = pairs["artifact"]["id"].as_str().unwrap().to_string();

    let (_, mut doc) = app.call(Method::GET, &url(&id, ""), None).await;
    doc["field"]["dimensions"][0]["name"] = json!("Capability level");
    let body = json!({"field": doc["field"], "expected_revision": 1});
    let (s, updated) = app.call(Method::PUT, &url(&id, ""), Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK, "{updated}");
    assert_eq!(updated["revision"], 2);
    assert_eq!(updated["artifacts"]["pairs"]["stale"], true);
    let (_, a) = app.call(Method::GET, &url(&id, &format!("/artifacts/{aid}")), None).await;
    assert_eq!(a["stale"], true);
    assert_eq!(a["current_revision"], 2);

    let (s, e) = app.call(Method::PUT, &url(&id, ""), Some(body)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["code"], "revision_conflict");

    let (s, e) = app.call(Method::POST, &url(&id, "/analysis/clusters"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["code"], "stale_prerequisite");
    assert_eq!(e["path"], "pairs");
}

#[tokio::test]
async fn delete_leaves_a_tombstone() {
    let app = App::new();
    let id = app.bundled().await;
    let (s, _) = app.call(Method::DELETE, &url(&id, ""), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, e) = app.call(Method::GET, &url(&id, ""), None).await;
    assert_eq!(s, StatusCode::GONE);
    assert_eq!(e["code"], "gone");
    let (s, _) = app.call(Method::GET, &url(&id, "/explore"), None).await;
    assert_eq!(s, StatusCode::GONE);
    let (_, list) = app.call(Method::GET, "/api/v1/fields", None).await;
    assert!(list.as_array().unwrap().is_empty());
    let tombstone = std::fs::read_to_string(app._dir.path().join("fields").join(format!("{id}.json"))).unwrap();
    assert!(tombstone.contains("\"deleted\": true"));
}

#[tokio::test]
async fn explore_counts() {
    let app = App::new();
    let id = app.bundled().await;
    let (s, v) = app.call(Method::GET, &url(&id, "/explore"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["configurations"], "15116544");
    assert_eq!(v["consistent"], "15116544");
    let remaining = v["remaining"].as_array().unwrap();
    assert_eq!(remaining.len(), 46);
    assert_eq!(remaining[0], json!({"condition": "capability.low", "count": "3779136"}));

    let (_, v) = app.call(Method::GET, &url(&id, "/explore?pin=capability.agi"), None).await;
    assert_eq!(v["consistent"], (15_116_544u64 / 4).to_string());
    let rem = v["remaining"].as_array().unwrap();
    assert_eq!(rem[0]["count"], "0");
    assert_eq!(rem[3]["count"], v["consistent"]);
    // An extra pin in a 3-condition dimension divides by 3.
    assert_eq!(rem[4]["count"], (15_116_544u64 / 12).to_string());

    let (s, e) = app.call(Method::GET, &url(&id, "/explore?pin=capability.agi&pin=capability.low"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "conflicting_pins");
    let (s, e) = app.call(Method::GET, &url(&id, "/explore?pin=capability.none"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["path"], "pin");
}

#[tokio::test]
async fn explore_respects_budget() {
    let app = App::with_budget(1000);
    let id = app.bundled().await;
    let (s, e) = app.call(Method::GET, &url(&id, "/explore"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "too_large");
    assert!(e["message"].as_str().unwrap().contains("CLI"));
}

#[tokio::test]
async fn fully_inconsistent_pin_empties_the_space() {
    let app = App::new();
    let (_, v) = app.call(Method::POST, "/api/v1/fields", Some(json!({"builtin": "two-dim-4x4"}))).await;
    let id = v["id"].as_str().unwrap().to_string();
    let (_, f) = app.call(Method::GET, &url(&id, ""), None).await;
    let dims = f["field"]["dimensions"].as_array().unwrap();
    let qual = |d: usize, c: usize| {
        format!("{}.{}", dims[d]["id"].as_str().unwrap(), dims[d]["conditions"][c]["id"].as_str().unwrap())
    };
    let judgments: Vec<Value> = (0..4)
        .map(|c| json!({"condition_a": qual(0, 0), "condition_b": qual(1, c), "verdict": "inconsistent"}))
        .collect();
    let (s, j) = app.call(Method::PUT, &url(&id, "/judgments"), Some(json!({"judgments": judgments}))).await;
    assert_eq!(s, StatusCode::OK, "{j}");
    assert_eq!(j["survivors"], 12);
    assert_eq!(j["survivors_delta"], -4);
    let (_, v) = app.call(Method::GET, &url(&id, &format!("/explore?pin={}", qual(0, 0))), None).await;
    assert_eq!(v["consistent"], "0");
    assert!(v["remaining"].as_array().unwrap().iter().all(|r| r["count"] == "0"));
    let (_, v) = app.call(Method::GET, &url(&id, "/explore"), None).await;
    assert_eq!(v["consistent"], "12");
    let (_, v) = app.call(Method::GET, &url(&id, "/explore?cca=false"), None).await;
    assert_eq!(v["consistent"], "16");
}

#[tokio::test]
async fn judgment_toggle_and_audit() {
    let app = App::new();
    let id = app.bundled().await;
    let pair = |verdict: &str| {
        json!({"judgments": [{
            "condition_a": "capability.agi",
            "condition_b": "transition.slow-takeoff",
            "verdict": verdict,
            "note": "AGI with a slow takeoff",
            "author": "analyst"
        }]})
    };
    let (_, before) = app.call(Method::GET, &url(&id, "/judgments"), None).await;
    assert_eq!(before["survivors"], 981);
    let (_, j) = app.call(Method::PUT, &url(&id, "/judgments"), Some(pair("inconsistent"))).await;
    assert_eq!((j["survivors"].clone(), j["survivors_delta"].clone()), (json!(980), json!(-1)));
    let (_, v) = app.call(Method::GET, &url(&id, "/explore"), None).await;
    assert_eq!(v["consistent"], (15_116_544u64 - 15_116_544 / 16).to_string());
    let (_, j) = app.call(Method::PUT, &url(&id, "/judgments"), Some(pair("consistent"))).await;
    assert_eq!((j["survivors"].clone(), j["survivors_delta"].clone()), (json!(981), json!(1)));
    assert_eq!(j["judgments"].as_array().unwrap().len(), 1);
    assert_eq!(j["revision"], 3);

    let log = std::fs::read_to_string(app.store.audit_path(&id)).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["judgment"]["verdict"], "inconsistent");
    assert_eq!(lines[1]["revision"], 3);

    let bad = json!({"judgments": [{"condition_a": "capability.agi", "condition_b": "capability.low", "verdict": "inconsistent"}]});
    let (s, e) = app.call(Method::PUT, &url(&id, "/judgments"), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["path"], "judgments[0]");
}

#[tokio::test]
async fn analysis_chain() {
    let app = App::new();
    let id = app.bundled().await;
    let (s, e) = app.call(Method::POST, &url(&id, "/analysis/clusters"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["code"], "missing_prerequisite");
    assert_eq!(e["path"], "pairs");

    let (_, pairs) = app.call(Method::POST, &url(&id, "/analysis/pairs"), None).await;
    assert_eq!(pairs["artifact"]["result"]["pairs"].as_array().unwrap().len(), 981);
    assert_eq!(pairs["artifact"]["result"]["configurations"], "15116544");

    let params = json!({"k": 4, "seed": 7});
    let (_, c1) = app.call(Method::POST, &url(&id, "/analysis/clusters"), Some(params.clone())).await;
    let aid = c1["artifact"]["id"].as_str().unwrap().to_string();
    let (_, raw1) = app.raw(Method::GET, &url(&id, &format!("/artifacts/{aid}/raw")), None).await;
    let (_, c2) = app.call(Method::POST, &url(&id, "/analysis/clusters"), Some(params)).await;
    assert_eq!(c2["artifact"]["id"], c1["artifact"]["id"]);
    let (_, raw2) = app.raw(Method::GET, &url(&id, &format!("/artifacts/{aid}/raw")), None).await;
    assert_eq!(raw1, raw2);
    assert_eq!(c1, c2);
    assert_eq!(c1["artifact"]["params"]["seed"], 7);

    let (s, sc) = app.call(Method::POST, &url(&id, "/analysis/scenarios"), None).await;
    assert_eq!(s, StatusCode::CREATED, "{sc}");
    let scenarios = sc["artifact"]["result"]["scenarios"].as_array().unwrap();
    assert_eq!(scenarios.len(), 4);
    assert!(scenarios.iter().all(|s| s["rows"].as_array().unwrap().len() == 14));
    assert_eq!(sc["artifact"]["result"]["tables"].as_array().unwrap().len(), 4);

    let (s, corr) = app.call(Method::POST, &url(&id, "/analysis/correlation"), Some(json!({"level": "dimension"}))).await;
    assert_eq!(s, StatusCode::CREATED, "{corr}");
    assert_eq!(corr["artifact"]["result"]["ids"].as_array().unwrap().len(), 14);
    for stage in ["communities", "cliques", "centrality"] {
        let (s, a) = app.call(Method::POST, &url(&id, &format!("/analysis/{stage}")), Some(json!({"threshold": 0.6}))).await;
        assert_eq!(s, StatusCode::CREATED, "{stage}: {a}");
        assert_eq!(a["artifact"]["result"]["nodes"].as_array().unwrap().len(), 14);
    }
    let (_, empty) = app.call(Method::POST, &url(&id, "/analysis/cliques"), Some(json!({"threshold": 1.0}))).await;
    assert!(empty["artifact"]["result"]["edges"].as_array().unwrap().len() <= 91);

    let (s, e) = app.call(Method::POST, &url(&id, "/analysis/clusters"), Some(json!({"k": 11}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["path"], "k");
    let (s, e) = app.call(Method::POST, &url(&id, "/analysis/clusters"), Some(json!({"kk": 3}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{e}");
    let (s, _) = app.call(Method::POST, &url(&id, "/analysis/forecast"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn responses_become_scores() {
    let app = App::new();
    let (_, v) = app.call(Method::POST, "/api/v1/fields", Some(json!({"builtin": "two-dim-4x4"}))).await;
    let id = v["id"].as_str().unwrap().to_string();
    let (s, e) = app.call(Method::POST, &url(&id, "/analysis/pairs"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["path"], "scores");

    let (_, f) = app.call(Method::GET, &url(&id, ""), None).await;
    let mut csv = String::from("respondent,condition,axis,value,expertise,track\n");
    for d in f["field"]["dimensions"].as_array().unwrap() {
        for (i, c) in d["conditions"].as_array().unwrap().iter().enumerate() {
            let q = format!("{}.{}", d["id"].as_str().unwrap(), c["id"].as_str().unwrap());
            for r in 0..3 {
                let x = 0.1 + 0.2 * i as f64 + 0.01 * r as f64;
                csv.push_str(&format!("r{r},{q},impact,{x},expert,safety\n"));
                csv.push_str(&format!("r{r},{q},likelihood,Even chance,basic,governance\n"));
            }
        }
    }
    let (s, sum) = app.call(Method::POST, &url(&id, "/responses"), Some(json!({"csv": csv}))).await;
    assert_eq!(s, StatusCode::OK, "{sum}");
    assert_eq!(sum["assessed"], 8);
    assert_eq!(sum["responses"], 48);
    let (_, pairs) = app.call(Method::POST, &url(&id, "/analysis/pairs"), None).await;
    assert_eq!(pairs["artifact"]["result"]["pairs"].as_array().unwrap().len(), 16);
    let (s, corr) = app.call(
        Method::POST,
        &url(&id, "/analysis/correlation"),
        Some(json!({"source": "respondent", "level": "condition", "axis": "impact"})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{corr}");

    let (s, e) = app
        .call(Method::POST, &url(&id, "/responses"), Some(json!({"csv": "respondent,condition\nx,y\n"})))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{e}");
}

#[tokio::test]
async fn store_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let store = Store::open(dir.path(), DEFAULT_COMPUTE_BUDGET, Execution::Sequential).unwrap();
        store.create(serde_json::from_value(json!({"builtin": "bundled"})).unwrap()).unwrap().id
    };
    let store = Store::open(dir.path(), DEFAULT_COMPUTE_BUDGET, Execution::Sequential).unwrap();
    assert_eq!(store.get(&id).unwrap().revision, 1);
    let next = store.create(serde_json::from_value(json!({"builtin": "two-dim-4x4"})).unwrap()).unwrap();
    assert_ne!(next.id, id);
}

#[test]
fn readers_never_see_a_half_applied_write() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path(), DEFAULT_COMPUTE_BUDGET, Execution::Sequential).unwrap());
    let id = store.create(serde_json::from_value(json!({"builtin": "two-dim-4x4"})).unwrap()).unwrap().id;
    let field = dataset::two_dim_4x4();
    let (a, b) = (field.qualified_id(0), field.qualified_id(4));
    let writer = {
        let store = store.clone();
        let id = id.clone();
        std::thread::spawn(move || {
            for i in 0..40 {
                let verdict = if i % 2 == 0 { "inconsistent" } else { "consistent" };
                let body = json!({"judgments": [{"condition_a": a, "condition_b": b, "verdict": verdict}]});
                store.put_judgments(&id, serde_json::from_value(body).unwrap()).unwrap();
            }
        })
    };
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let store = store.clone();
            let id = id.clone();
            std::thread::spawn(move || {
                for _ in 0..100 {
                    let r = store.explore(&id, &[], true).unwrap();
                    // Revision 1 is clean; afterwards even revisions carry the exclusion.
                    let expected = if r.revision >= 2 && r.revision & 1 == 0 { "15" } else { "16" };
                    assert_eq!(r.consistent, expected, "revision {}", r.revision);
                }
            })
        })
        .collect();
    writer.join().unwrap();
    for r in readers {
        r.join().unwrap();
    }
}
