mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use common::{run, s, Fixture};
use res_scan::commands::load_model;
use res_scan::service::{build_state, router, ServiceConfig, DEFAULT_PIXEL_BUDGET, SESSION_HEADER};
use res_scan_core::detect::{parse_result_json, DetectConfig};
use res_scan_core::gpr::{decode_grid, load_frame_dir, read_truth, FrameFormat, Preprocess};
use res_scan_core::reservoir::{build_reservoir, ReservoirConfig};

fn service_config(fx: &Fixture, pixel_budget: usize) -> ServiceConfig {
    let (bank, weights) = load_model(&fx.bank(), None).unwrap();
    ServiceConfig {
        frames: load_frame_dir(fx.data().join("frames")).unwrap(),
        bank,
        weights,
        preprocess: Preprocess::default(),
        detect: DetectConfig {
            stride: 2,
            ..DetectConfig::default()
        },
        pixel_budget,
        truths: Some(read_truth(fx.truth()).unwrap()),
    }
}

fn app(fx: &Fixture, pixel_budget: usize) -> Router {
    router(build_state(service_config(fx, pixel_budget)).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, session: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(SESSION_HEADER, session)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn prompt_body(x: usize, y: usize) -> String {
    format!(r#"{{"positives": [[{x}, {y}], [{}, {y}]], "negatives": [[2, 2]]}}"#, x + 2)
}

#[tokio::test]
async fn detect_matches_cli_byte_for_byte() {
    let fx = Fixture::new(11);
    let app = app(&fx, DEFAULT_PIXEL_BUDGET);
    for id in ["pipe_000", "cavity_000", "crack_000"] {
        let (x, y) = fx.truth_center(id);
        let cli = run(&[
            "detect", "--frame", s(&fx.frame(id)), "--bank", s(&fx.bank()), "--stride", "2",
            "--prompts", &format!("pos:{x},{y};{},{y};neg:2,2", x + 2),
        ]);
        let (status, api) = call(&app, "POST", &format!("/v1/frames/{id}/detect"), "a", &prompt_body(x, y)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(api, cli, "{id}");
    }
}

#[tokio::test]
async fn heatmap_png_peak_matches_json_argmax() {
    let fx = Fixture::new(12);
    let app = app(&fx, DEFAULT_PIXEL_BUDGET);
    let id = "manhole_000";
    let (status, _) = call(&app, "GET", &format!("/v1/frames/{id}/heatmap.png"), "h", "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (x, y) = fx.truth_center(id);
    let (status, body) = call(&app, "POST", &format!("/v1/frames/{id}/detect"), "h", &prompt_body(x, y)).await;
    assert_eq!(status, StatusCode::OK);
    let result = parse_result_json(std::str::from_utf8(&body).unwrap()).unwrap();
    let heat = result.heatmap.as_ref().unwrap();
    let &(ax, ay, _) = heat
        .entries
        .iter()
        .max_by(|a, b| a.2.total_cmp(&b.2).then(b.1.cmp(&a.1)).then(b.0.cmp(&a.0)))
        .unwrap();

    let (status, png) = call(&app, "GET", &format!("/v1/frames/{id}/heatmap.png"), "h", "").await;
    assert_eq!(status, StatusCode::OK);
    let grid = decode_grid(&png, FrameFormat::PngGray).unwrap();
    assert_eq!((grid.width(), grid.height()), (result.width, result.height));
    let peak = grid.values().iter().cloned().fold(f64::MIN, f64::max);
    let at: Vec<(usize, usize)> = (0..grid.height())
        .flat_map(|yy| (0..grid.width()).map(move |xx| (xx, yy)))
        .filter(|&(xx, yy)| grid.get(xx, yy) == peak)
        .collect();
    assert_eq!(at, vec![(ax, ay)]);

    let (status, _) = call(&app, "GET", &format!("/v1/frames/{id}/heatmap.png"), "other", "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn frames_image_and_health() {
    let fx = Fixture::new(13);
    let app = app(&fx, DEFAULT_PIXEL_BUDGET);
    let (status, body) = call(&app, "GET", "/v1/frames", "x", "").await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let frames = v["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 11);
    assert!(frames.iter().all(|f| f["width"] == 96 && f["height"] == 96));
    let ids: Vec<&str> = frames.iter().map(|f| f["id"].as_str().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let fp = std::fs::read(fx.reservoir()).unwrap();
    let fp = res_scan_core::reservoir::ReservoirWeights::from_blob(&fp).unwrap().fingerprint();
    assert_eq!(v["fingerprint"], fp.to_hex());

    let (status, png) = call(&app, "GET", "/v1/frames/normal_000/image.png", "x", "").await;
    assert_eq!(status, StatusCode::OK);
    let g = decode_grid(&png, FrameFormat::PngGray).unwrap();
    assert_eq!((g.width(), g.height()), (96, 96));

    let (status, _) = call(&app, "GET", "/v1/frames/nope/image.png", "x", "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, "GET", "/v1/health", "x", "").await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["fingerprint"], fp.to_hex());
    assert!(v["config"]["beta"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let fx = Fixture::new(14);
    let app = app(&fx, DEFAULT_PIXEL_BUDGET);
    let cases = [
        ("/v1/frames/pipe_000/detect", "not json", StatusCode::BAD_REQUEST),
        ("/v1/frames/pipe_000/detect", r#"{"positives": []}"#, StatusCode::BAD_REQUEST),
        ("/v1/frames/pipe_000/detect", r#"{"positives": [[500, 1]]}"#, StatusCode::BAD_REQUEST),
        ("/v1/frames/missing/detect", r#"{"positives": [[1, 1]]}"#, StatusCode::NOT_FOUND),
        ("/v1/categorize", r#"{"algorithm": "nope"}"#, StatusCode::BAD_REQUEST),
        ("/v1/categorize", r#"{"frame_ids": ["pipe_000"]}"#, StatusCode::NOT_FOUND),
    ];
    for (uri, body, want) in cases {
        let (status, text) = call(&app, "POST", uri, "b", body).await;
        assert_eq!(status, want, "{uri} {body}");
        let v: serde_json::Value = serde_json::from_slice(&text).unwrap();
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn large_frames_run_as_jobs() {
    let fx = Fixture::new(15);
    let sync_app = app(&fx, DEFAULT_PIXEL_BUDGET);
    let job_app = app(&fx, 1000);
    let id = "loose_000";
    let (x, y) = fx.truth_center(id);
    let (_, direct) = call(&sync_app, "POST", &format!("/v1/frames/{id}/detect"), "j", &prompt_body(x, y)).await;

    let (status, body) = call(&job_app, "POST", &format!("/v1/frames/{id}/detect"), "j", &prompt_body(x, y)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let ticket: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let poll = ticket["poll"].as_str().unwrap().to_owned();
    let mut polled = None;
    for _ in 0..600 {
        let (status, body) = call(&job_app, "GET", &poll, "j", "").await;
        match status {
            StatusCode::ACCEPTED => tokio::time::sleep(Duration::from_millis(50)).await,
            StatusCode::OK => {
                polled = Some(body);
                break;
            }
            other => panic!("unexpected job status {other}"),
        }
    }
    assert_eq!(polled.expect("job finished"), direct);
    let (status, _) = call(&job_app, "GET", &format!("/v1/frames/{id}/heatmap.png"), "j", "").await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&job_app, "GET", "/v1/jobs/999", "j", "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn categorize_matches_cli() {
    let fx = Fixture::new(16);
    let app = app(&fx, DEFAULT_PIXEL_BUDGET);
    let results = fx.root().join("results");
    std::fs::create_dir_all(&results).unwrap();
    let ids = ["cavity_000", "crack_000", "loose_000", "manhole_000", "pipe_000"];
    for id in ids {
        let (x, y) = fx.truth_center(id);
        let (status, body) = call(&app, "POST", &format!("/v1/frames/{id}/detect"), "c", &prompt_body(x, y)).await;
        assert_eq!(status, StatusCode::OK);
        std::fs::write(results.join(format!("{id}.json")), body).unwrap();
    }
    let (status, api) = call(&app, "POST", "/v1/categorize", "c", r#"{"algorithm": "ac:ward", "k": 3}"#).await;
    assert_eq!(status, StatusCode::OK);
    let cli = run(&[
        "categorize", "--results", s(&results), "--frames", s(&fx.data()), "--reservoir",
        s(&fx.reservoir()), "--truth", s(&fx.truth()), "--algo", "ac:ward", "--k", "3",
    ]);
    assert_eq!(api, cli);

    let (status, body) = call(&app, "POST", "/v1/categorize", "empty", "{}").await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{}", String::from_utf8_lossy(&body));
}

#[test]
fn mismatched_bank_refuses_to_start() {
    let fx = Fixture::new(17);
    let mut config = service_config(&fx, DEFAULT_PIXEL_BUDGET);
    config.weights = build_reservoir(&ReservoirConfig {
        seed: 99,
        ..ReservoirConfig::default()
    })
    .unwrap();
    let err = build_state(config).err().expect("must refuse");
    assert!(err.to_string().contains("fingerprint"), "{err}");
}
