use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use trajspace_cli::pipeline::{self, Artifact, NnRepresentation};
use trajspace_cli::projection::export_csv;
use trajspace_cli::service::{build_router, load_data_dir, AppState, LoadedDataset};
use trajspace_core::{EmbeddingConfig, Execution, Method};

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn app(datasets: Vec<LoadedDataset>) -> Router {
    build_router(Arc::new(AppState::new(
        datasets,
        EmbeddingConfig::default(),
        Some(7),
        Execution::Sequential,
    )))
}

fn sorting(n: usize) -> LoadedDataset {
    LoadedDataset::new(
        "sorting",
        pipeline::sorting_dataset(n, "bubble,quick").unwrap(),
        None,
    )
}

fn tsne(iterations: usize, perplexity: f64) -> Value {
    json!({ "method": "tsne", "total_iterations": iterations, "early_iterations": iterations.min(50), "perplexity": perplexity, "objective_every": 10 })
}

async fn wait_terminal(app: &Router, id: &str) -> (Value, Vec<usize>) {
    let start = Instant::now();
    let mut iterations = Vec::new();
    loop {
        let (status, body) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        iterations.push(body["iteration"].as_u64().unwrap() as usize);
        if matches!(
            body["state"].as_str().unwrap(),
            "done" | "cancelled" | "failed"
        ) {
            return (body, iterations);
        }
        assert!(
            start.elapsed() < Duration::from_secs(120),
            "job {id} never finished"
        );
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

#[tokio::test]
async fn lists_datasets_and_presets() {
    let app = app(vec![sorting(4)]);
    let (s, body) = call(&app, "GET", "/datasets", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body[0]["id"], "sorting");
    assert_eq!(body[0]["distinct_states"], 24);
    assert_eq!(body[0]["has_layout"], false);
    let (s, body) = call(&app, "GET", "/presets", None).await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = body
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"sorting-fig2"));
}

#[tokio::test]
async fn job_runs_to_completion_with_monotone_iterations() {
    let app = app(vec![sorting(5)]);
    let (s, curves) = call(&app, "GET", "/datasets/sorting/curves", None).await;
    assert_eq!(s, StatusCode::CONFLICT, "{curves}");

    let (s, job) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "sorting", "config": tsne(300, 30.0) })),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{job}");
    let id = job["id"].as_str().unwrap().to_string();
    let (done, seen) = wait_terminal(&app, &id).await;
    assert_eq!(done["state"], "done", "{done}");
    assert_eq!(done["iteration"], 300);
    assert!(seen.windows(2).all(|w| w[0] <= w[1]), "{seen:?}");
    let snapshot = done["snapshot"].as_array().unwrap();
    let (_, points) = call(&app, "GET", "/datasets/sorting/points", None).await;
    let points = points["points"].as_array().unwrap();
    assert_eq!(snapshot.len(), points.len());
    assert_eq!(points[3]["x"], snapshot[3][0]);

    let (s, curves) = call(&app, "GET", "/datasets/sorting/curves?samples=4", None).await;
    assert_eq!(s, StatusCode::OK);
    let first = &curves["curves"][0];
    let (_, pts) = call(&app, "GET", "/datasets/sorting/points", None).await;
    let len = pts["trajectories"][0]["len"].as_u64().unwrap() as usize;
    assert_eq!(
        first["polyline"].as_array().unwrap().len(),
        (len - 1) * 4 + 1
    );
}

#[tokio::test]
async fn cancel_keeps_last_snapshot_and_releases_queue() {
    let app = app(vec![LoadedDataset::new(
        "rubik",
        pipeline::rubik_dataset(6, "beginner,advanced", 3, 20).unwrap(),
        None,
    )]);
    let (_, first) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "rubik", "config": tsne(100_000, 20.0) })),
    )
    .await;
    let (_, second) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "rubik", "config": tsne(20, 20.0) })),
    )
    .await;
    assert_eq!(first["state"], "running");
    assert_eq!(second["state"], "queued");
    let first = first["id"].as_str().unwrap().to_string();
    let second = second["id"].as_str().unwrap().to_string();

    let start = Instant::now();
    loop {
        let (_, st) = call(&app, "GET", &format!("/jobs/{first}"), None).await;
        if st["iteration"].as_u64().unwrap() >= 3 {
            break;
        }
        assert!(start.elapsed() < Duration::from_secs(60));
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let (_, queued) = call(&app, "GET", &format!("/jobs/{second}"), None).await;
    assert_eq!(queued["state"], "queued");

    let (s, _) = call(&app, "DELETE", &format!("/jobs/{first}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (cancelled, _) = wait_terminal(&app, &first).await;
    assert_eq!(cancelled["state"], "cancelled");
    let it = cancelled["iteration"].as_u64().unwrap();
    assert!((3..100_000).contains(&it));
    assert!(!cancelled["snapshot"].as_array().unwrap().is_empty());

    let (again, _) = wait_terminal(&app, &first).await;
    assert_eq!(again, cancelled);

    let (done, _) = wait_terminal(&app, &second).await;
    assert_eq!(done["state"], "done");
}

#[tokio::test]
async fn queued_job_cancels_immediately() {
    let app = app(vec![sorting(5)]);
    let (_, a) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "sorting", "config": tsne(100_000, 30.0) })),
    )
    .await;
    let (_, b) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "sorting", "config": tsne(10, 30.0) })),
    )
    .await;
    let b = b["id"].as_str().unwrap().to_string();
    let (s, st) = call(&app, "POST", &format!("/jobs/{b}/cancel"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(st["state"], "cancelled");
    assert!(st["snapshot"].is_null());
    let a = a["id"].as_str().unwrap().to_string();
    call(&app, "POST", &format!("/jobs/{a}/cancel"), None).await;
    let (st, _) = wait_terminal(&app, &a).await;
    assert_eq!(st["state"], "cancelled");
    let (_, st) = call(&app, "GET", &format!("/jobs/{b}"), None).await;
    assert_eq!(st["state"], "cancelled");
}

#[tokio::test]
async fn rejects_unknown_resources_and_invalid_configs() {
    let app = app(vec![sorting(4)]);
    assert_eq!(
        call(&app, "GET", "/datasets/nope/points", None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, "GET", "/jobs/job-99", None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, "DELETE", "/jobs/job-99", None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, "GET", "/datasets/sorting/detail/999", None)
            .await
            .0,
        StatusCode::NOT_FOUND
    );
    let (s, body) = call(&app, "POST", "/jobs", Some(json!({ "dataset": "nope" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{body}");

    let (s, body) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "sorting", "config": { "perplexity": 50.0 } })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(
        body["error"].as_str().unwrap().contains("perplexity"),
        "{body}"
    );
    let (s, body) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "sorting", "config": { "perplexityy": 5 } })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(
        body["error"].as_str().unwrap().contains("perplexityy"),
        "{body}"
    );
    let (s, body) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "sorting", "preset": "fig9" })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(
        body["error"].as_str().unwrap().contains("sorting-fig2"),
        "{body}"
    );
}

#[tokio::test]
async fn non_iterative_method_finishes() {
    let app = app(vec![sorting(4)]);
    let (s, job) = call(
        &app,
        "POST",
        "/jobs",
        Some(json!({ "dataset": "sorting", "config": { "method": "mds" } })),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let (done, _) = wait_terminal(&app, job["id"].as_str().unwrap()).await;
    assert_eq!(done["state"], "done", "{done}");
    assert!(done["iteration"].as_u64().unwrap() >= 1);
}

#[tokio::test]
async fn fingerprint_of_identical_states_is_all_constant() {
    let ds = pipeline::sorting_dataset(4, "bubble").unwrap();
    let ends: Vec<usize> = (0..2)
        .map(|t| ds.offsets()[t] + ds.trajectories()[t].len() - 1)
        .collect();
    let app = app(vec![LoadedDataset::new("sorting", ds, None)]);
    let (s, body) = call(
        &app,
        "POST",
        "/fingerprint",
        Some(json!({ "dataset": "sorting", "points": ends })),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["constant_fraction"], 1.0);
    assert_eq!(body["fingerprint"]["selection_size"], 2);
    for d in body["fingerprint"]["dimensions"].as_array().unwrap() {
        assert_eq!(d["support"], 1.0);
    }

    let (s, _) = call(
        &app,
        "POST",
        "/fingerprint",
        Some(json!({ "dataset": "sorting", "points": [] })),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(
        &app,
        "POST",
        "/fingerprint",
        Some(json!({ "dataset": "sorting", "points": [100000] })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn details_are_domain_tagged() {
    let pgn =
        "[Event \"t\"]\n[WhiteElo \"2100\"]\n[BlackElo \"2100\"]\n\n1. e4 e5 2. Nf3 Nc6 1-0\n";
    let trace = pipeline::synth_trace(1, 3, 4, 1);
    let app = app(vec![
        LoadedDataset::new(
            "rubik",
            pipeline::rubik_dataset(1, "beginner", 0, 10).unwrap(),
            None,
        ),
        LoadedDataset::new(
            "chess",
            pipeline::chess_dataset(pgn, None, "", None)
                .unwrap()
                .dataset,
            None,
        ),
        LoadedDataset::new(
            "nn",
            pipeline::nn_dataset(&trace, NnRepresentation::Confusion, None, true).unwrap(),
            None,
        ),
        sorting(4),
    ]);
    let (_, cube) = call(&app, "GET", "/datasets/rubik/detail/0", None).await;
    assert_eq!(cube["domain"], "cube");
    assert_eq!(cube["facets"].as_array().unwrap().len(), 54);
    assert_eq!(cube["step"], 0);

    let (_, board) = call(&app, "GET", "/datasets/chess/detail/0", None).await;
    assert_eq!(board["domain"], "board");
    assert_eq!(
        board["placement"],
        "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR"
    );
    let (_, board) = call(&app, "GET", "/datasets/chess/detail/1", None).await;
    assert_eq!(
        board["placement"],
        "rnbqkbnr/pppppppp/8/8/4P3/8/PPPP1PPP/RNBQKBNR"
    );
    assert_eq!(board["metadata"]["san"], "e4");

    let (_, m) = call(&app, "GET", "/datasets/nn/detail/0", None).await;
    assert_eq!(m["domain"], "confusion");
    assert_eq!(m["matrix"].as_array().unwrap().len(), 4);
    let totals: f64 = m["class_totals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!(totals > 0.0);
    let (_, pts) = call(&app, "GET", "/datasets/nn/points", None).await;
    let last = pts["points"].as_array().unwrap().len() - 1;
    let (_, perfect) = call(&app, "GET", &format!("/datasets/nn/detail/{last}"), None).await;
    assert_eq!(perfect["accuracy"], 1.0);
    assert_eq!(perfect["class_totals"], m["class_totals"]);

    let (_, p) = call(&app, "GET", "/datasets/sorting/detail/0", None).await;
    assert_eq!(p["domain"], "permutation");
    let mut values: Vec<u64> = p["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    values.sort();
    assert_eq!(values, vec![1, 2, 3, 4]);
}

#[tokio::test]
async fn data_dir_serves_artifacts_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ds = pipeline::sorting_dataset(4, "bubble,quick").unwrap();
    let config = EmbeddingConfig::with_method(Method::Pca);
    let embedded = pipeline::embed(
        Artifact::new(ds),
        &config,
        Execution::Sequential,
        &mut trajspace_core::embed::NoProgress,
    )
    .unwrap();
    std::fs::write(dir.path().join("sorting.json"), embedded.to_json()).unwrap();
    let coords = &embedded.embedding.as_ref().unwrap().coords;
    let file = std::fs::File::create(dir.path().join("flat.csv")).unwrap();
    export_csv(file, &embedded.dataset, coords).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

    let loaded = load_data_dir(dir.path()).unwrap();
    let app = app(loaded);
    let (_, list) = call(&app, "GET", "/datasets", None).await;
    let ids: Vec<&str> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, vec!["flat", "sorting"]);
    assert_eq!(list[0]["has_states"], false);
    assert_eq!(list[0]["has_layout"], true);

    let (_, a) = call(&app, "GET", "/datasets/sorting/points", None).await;
    let (_, b) = call(&app, "GET", "/datasets/flat/points", None).await;
    assert_eq!(a["points"][5]["x"], b["points"][5]["x"]);
    let (s, _) = call(&app, "GET", "/datasets/flat/curves", None).await;
    assert_eq!(s, StatusCode::OK);
    let (_, d) = call(&app, "GET", "/datasets/flat/detail/0", None).await;
    assert_eq!(d["domain"], "none");
    let (s, _) = call(&app, "POST", "/jobs", Some(json!({ "dataset": "flat" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
