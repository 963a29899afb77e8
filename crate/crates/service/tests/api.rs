use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cellscape::table::container::{load_container, save_container};
use cellscape::CellTable;
use cellscape_service::{router, AppState, Config};
use serde_json::{json, Value};
use tower::ServiceExt;

fn grid_table(side: usize) -> CellTable {
    let mut xy = Vec::new();
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for i in 0..side {
        for j in 0..side {
            xy.push((i as f64 * 10.0 + 0.5 * (j % 3) as f64, j as f64 * 10.0));
            feats.push((i * side + j) as f32);
            feats.push(((i + j) % 7) as f32);
            labels.push(if (i + j) % 3 == 0 { "A" } else { "B" });
        }
    }
    CellTable::from_parts(&xy, vec!["CD3".into(), "CD20".into()], feats)
        .unwrap()
        .add_annotation("phenotype", &labels)
        .unwrap()
}

fn state_with(dir: &std::path::Path, config: impl FnOnce(&mut Config)) -> Arc<AppState> {
    save_container(&grid_table(20), dir.join("slide1")).unwrap();
    save_container(&grid_table(5), dir.join("tiny")).unwrap();
    let mut cfg = Config::new(dir);
    config(&mut cfg);
    Arc::new(AppState::load(cfg).unwrap())
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Option<String>, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let cache = resp
        .headers()
        .get("cache")
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, cache, value)
}

#[tokio::test]
async fn health_and_dataset_listing() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state_with(dir.path(), |_| {}));
    let (s, _, v) = send(&app, "GET", "/api/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["datasets"], 2);

    let (s, _, v) = send(&app, "GET", "/api/datasets", None).await;
    assert_eq!(s, StatusCode::OK);
    let ids: Vec<&str> = v.as_array().unwrap().iter().map(|d| d["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["slide1", "tiny"]);
    let first = &v[0];
    assert_eq!(first["n_cells"], 400);
    assert_eq!(first["features"], json!(["CD3", "CD20"]));
    assert_eq!(first["annotations"][0]["name"], "phenotype");
    assert_eq!(first["annotations"][0]["categories"], json!(["A", "B"]));
    assert_eq!(first["bounds"]["xmax"], 191.0);

    let (s, _, v) = send(&app, "GET", "/api/datasets/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "NotFound");
}

#[tokio::test]
async fn cells_downsample_exact_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state_with(dir.path(), |_| {}));
    let uri = "/api/datasets/slide1/cells?fields=coords,annotation:phenotype,feature:CD3&max=57&seed=4";
    let (s, _, a) = send(&app, "GET", uri, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(a["n"], 57);
    assert_eq!(a["n_total"], 400);
    assert_eq!(a["x"].as_array().unwrap().len(), 57);
    assert_eq!(a["annotations"]["phenotype"]["codes"].as_array().unwrap().len(), 57);
    assert_eq!(a["annotations"]["phenotype"]["categories"], json!(["A", "B"]));
    assert_eq!(a["features"]["CD3"].as_array().unwrap().len(), 57);
    let (_, _, b) = send(&app, "GET", uri, None).await;
    assert_eq!(a, b);
    let (_, _, c) = send(&app, "GET", &uri.replace("seed=4", "seed=5"), None).await;
    assert_ne!(a["indices"], c["indices"]);

    let (s, _, v) = send(&app, "GET", "/api/datasets/slide1/cells?fields=bogus", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "fields");
}

#[tokio::test]
async fn payload_limit_rejects_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state_with(dir.path(), |c| c.max_payload_cells = 100));
    let (s, _, v) = send(&app, "GET", "/api/datasets/slide1/cells", None).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    assert!(v["hint"].as_str().unwrap().contains("downsample"));
    let (s, _, _) = send(&app, "GET", "/api/datasets/slide1/cells?max=100", None).await;
    assert_eq!(s, StatusCode::OK);

    let body = json!({"annotation": "phenotype"});
    let (s, _, _) = send(&app, "POST", "/api/datasets/slide1/spatial/nn-dist", Some(body.clone())).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    let (s, _, _) = send(&app, "POST", "/api/datasets/tiny/spatial/nn-dist", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn spatial_cache_hit_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state_with(dir.path(), |_| {}));
    let body = json!({"annotation": "phenotype", "center": "A", "neighbor": "B", "radii": [5.0, 10.0, 20.0]});
    let (s1, c1, v1) = send(&app, "POST", "/api/datasets/slide1/spatial/ripley", Some(body.clone())).await;
    let (s2, c2, v2) = send(&app, "POST", "/api/datasets/slide1/spatial/ripley", Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(c1.as_deref(), Some("miss"));
    assert_eq!(c2.as_deref(), Some("hit"));
    assert_eq!(v1["cache"], "miss");
    assert_eq!(v2["cache"], "hit");
    assert_eq!(v1["result"], v2["result"]);
    assert_eq!(v1["result"][0]["radii"], json!([5.0, 10.0, 20.0]));
}

#[tokio::test]
async fn summaries_and_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state_with(dir.path(), |_| {}));
    let (s, _, v) = send(
        &app,
        "POST",
        "/api/datasets/slide1/summaries/hist",
        Some(json!({"feature": "CD20", "n_bins": 7})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let total: u64 = v["groups"][0]["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 400);

    let (s, _, v) = send(
        &app,
        "POST",
        "/api/datasets/slide1/summaries/crosstab",
        Some(json!({"row_annotation": "nope", "col_annotation": "phenotype"})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["message"].as_str().unwrap().contains("nope"));
    assert_eq!(v["error"], "UnknownAnnotation");

    let (s, _, v) = send(&app, "POST", "/api/datasets/slide1/summaries/means", Some(json!({"group_by": "phenotype", "colour": 1}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "colour");

    let (s, _, _) = send(&app, "POST", "/api/datasets/slide1/summaries/violin", Some(json!({}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _, _) = send(&app, "POST", "/api/datasets/slide1/spatial/kfunc", Some(json!({}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let req = Request::builder()
        .method("POST")
        .uri("/api/datasets/slide1/summaries/box")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn selection_annotation_feeds_analyses() {
    let dir = tempfile::tempdir().unwrap();
    let state = state_with(dir.path(), |c| c.persist_annotations = true);
    let app = router(state);
    let body = json!({"annotation": "phenotype", "graph": {"radius": 15.0}});
    let (_, c, before) = send(&app, "POST", "/api/datasets/tiny/spatial/interact", Some(body.clone())).await;
    assert_eq!(c.as_deref(), Some("miss"));

    let sel = json!({"name": "roi", "indices": [0, 1, 2, 3, 4], "label": "in", "other_label": "out"});
    let (s, _, v) = send(&app, "POST", "/api/datasets/tiny/annotations", Some(sel.clone())).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["n_selected"], 5);
    assert_eq!(v["categories"], json!(["in", "out"]));

    let (s, _, v) = send(&app, "POST", "/api/datasets/tiny/annotations", Some(sel)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "DuplicateName");
    let (s, _, v) = send(&app, "POST", "/api/datasets/tiny/annotations", Some(json!({"name": "x", "indices": [25]}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "indices");

    // Generation bump invalidates cached results.
    let (_, c, after) = send(&app, "POST", "/api/datasets/tiny/spatial/interact", Some(body)).await;
    assert_eq!(c.as_deref(), Some("miss"));
    assert_eq!(before["result"], after["result"]);

    let roi = json!({"row_annotation": "roi", "col_annotation": "phenotype"});
    let (s, _, v) = send(&app, "POST", "/api/datasets/tiny/summaries/crosstab", Some(roi)).await;
    assert_eq!(s, StatusCode::OK);
    let row_in: u64 = v["counts"][0].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(row_in, 5);

    let reloaded = load_container(dir.path().join("tiny")).unwrap();
    assert_eq!(reloaded.annotation("roi").unwrap().categories(), ["in", "out"]);
}

#[tokio::test]
async fn selection_is_not_persisted_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state_with(dir.path(), |_| {}));
    let (s, _, v) = send(&app, "POST", "/api/datasets/tiny/annotations", Some(json!({"name": "roi", "indices": [1]}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["persisted"], false);
    assert!(load_container(dir.path().join("tiny")).unwrap().annotation("roi").is_err());
}

#[tokio::test]
async fn over_budget_becomes_polled_job() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state_with(dir.path(), |c| c.job_budget = Some(Duration::ZERO)));
    let body = json!({"annotation": "phenotype", "graph": {"knn": 6}, "n_permutations": 2000, "seed": 3});
    let (s, _, v) = send(&app, "POST", "/api/datasets/slide1/spatial/enrich", Some(body.clone())).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let job = v["job_id"].as_str().unwrap().to_string();
    let poll = format!("/api/jobs/{job}");
    let mut result = Value::Null;
    for _ in 0..600 {
        let (s, _, v) = send(&app, "GET", &poll, None).await;
        if s == StatusCode::OK {
            assert_eq!(v["status"], "done");
            result = v["result"].clone();
            break;
        }
        assert_eq!(s, StatusCode::ACCEPTED);
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert_eq!(result[0]["n_permutations"], 2000);

    // The finished job populated the cache.
    let (s, c, v) = send(&app, "POST", "/api/datasets/slide1/spatial/enrich", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(c.as_deref(), Some("hit"));
    assert_eq!(v["result"], result);

    let (s, _, _) = send(&app, "GET", "/api/jobs/unknown", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cors_allows_configured_origin() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state_with(dir.path(), |c| c.allow_origins = vec!["http://localhost:5173".into()]));
    let req = Request::builder()
        .uri("/api/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers().get("access-control-allow-origin").unwrap(),
        "http://localhost:5173"
    );
    let req = Request::builder()
        .uri("/api/health")
        .header("origin", "http://evil.example")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}
