use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use bookcbr::{CaseStore, Engine, EngineConfig, ExpertPanel, Pipeline, ReviewBoard};
use bookcbr_api::wire::RecommendationBody;
use bookcbr_api::{router, AppState, ExpertCredential};
use serde_json::{json, Value};
use tower::ServiceExt;

fn seed_json() -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/seed_cases.json");
    std::fs::read_to_string(path).unwrap()
}

fn engine() -> Engine {
    let store = Arc::new(CaseStore::new(Pipeline::default()));
    let board = Arc::new(ReviewBoard::new(ExpertPanel::new(["ana", "bea", "carlos"]).unwrap()));
    Engine::new(store, board, EngineConfig::default()).unwrap()
}

fn credentials() -> Vec<ExpertCredential> {
    ["ana", "bea", "carlos"]
        .iter()
        .map(|id| ExpertCredential { id: id.to_string(), token: format!("tok-{id}") })
        .collect()
}

fn app(engine: Engine) -> Router {
    router(AppState::new(engine, &credentials()).unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    call_with(app, method, uri, body.map(|b| b.to_string()), None).await
}

async fn call_with(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<String>,
    bearer: Option<&str>,
) -> (StatusCode, Value) {
    let (status, text) = call_raw(app, method, uri, body, bearer).await;
    let value = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap() };
    (status, value)
}

async fn call_raw(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<String>,
    bearer: Option<&str>,
) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    if let Some(token) = bearer {
        req = req.header(header::AUTHORIZATION, format!("Bearer {token}"));
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn seeded() -> (Router, Engine) {
    let e = engine();
    let app = app(e.clone());
    let (status, body) = call_with(&app, Method::POST, "/cases/import", Some(seed_json()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["loaded"], 150);
    (app, e)
}

fn vote(token: &str, decision: &str, justification: Option<&str>) -> Value {
    let mut v = json!({"expert_token": token, "decision": decision});
    if let Some(j) = justification {
        v["justification"] = json!(j);
    }
    v
}

#[tokio::test]
async fn health_and_empty_case_base() {
    let app = app(engine());
    let (status, body) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok", "store_version": 0, "case_count": 0}));

    let (status, body) = call(&app, Method::POST, "/recommend", Some(json!({"text": "hola"}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["code"], "empty_case_base");
}

#[tokio::test]
async fn recommend_responses() {
    let (app, e) = seeded().await;
    let seed_text = e.store().snapshot().cases()[0].text().to_owned();

    let (status, raw) = call_raw(
        &app,
        Method::POST,
        "/recommend",
        Some(json!({"text": seed_text}).to_string()),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(raw.contains("\"score\":1.00000000"), "{raw}");
    let body: Value = serde_json::from_str(&raw).unwrap();
    assert_eq!(body["kind"], "HighConfidence");
    assert_eq!(body["picks"].as_array().unwrap().len(), 1);
    assert_eq!(body["reliability_message"], "Reliability of the recommendation: +50%");
    assert!(body["ticket_id"].is_u64());

    let (status, body) = call(
        &app,
        Method::POST,
        "/recommend",
        Some(json!({"text": "Sonreír es lo más saludable que puedes hacer a diario"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["kind"], "LowConfidence");
    assert_eq!(body["picks"].as_array().unwrap().len(), 2);
    assert_eq!(body["reliability_message"], "Recommendation reliability: -50%");
    assert!(body.get("ticket_id").is_none());

    let (status, body) = call(&app, Method::POST, "/recommend", Some(json!({"text": "¡¡¿?!!"}))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("empty_after_cleaning")));

    let (status, body) = call(&app, Method::POST, "/recommend", Some(json!({"text": ""}))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("empty_text")));
    let (status, body) = call(&app, Method::POST, "/recommend", Some(json!({}))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("empty_text")));
    let (status, body) = call_with(&app, Method::POST, "/recommend", Some("nope".into()), None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_body")));
}

#[tokio::test]
async fn unanimous_votes_grow_the_case_base() {
    let (app, e) = seeded().await;
    let text = format!("{} esta tarde", e.store().snapshot().cases()[5].text());
    let (_, rec) = call(&app, Method::POST, "/recommend", Some(json!({"text": text}))).await;
    let id = rec["ticket_id"].as_u64().unwrap();
    let uri = format!("/reviews/{id}/vote");

    let (status, body) = call(&app, Method::POST, &uri, Some(vote("tok-ana", "approve", None))).await;
    assert_eq!((status, body["state"].as_str()), (StatusCode::OK, Some("pending")));
    let (status, _) = call(&app, Method::POST, &uri, Some(vote("tok-ana", "approve", None))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    call(&app, Method::POST, &uri, Some(vote("tok-bea", "approve", None))).await;
    let (status, body) = call(&app, Method::POST, &uri, Some(vote("tok-carlos", "approve", None))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["state"], "accepted");
    assert_eq!(body["case_count"], 151);
    assert_eq!(body["retained_case_id"], 151);

    let (_, health) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(health["case_count"], 151);
    let (_, page) = call(&app, Method::GET, "/cases?offset=150&limit=10", None).await;
    assert_eq!(page["cases"][0]["origin"], "retained");
    assert_eq!(page["cases"][0]["text"], text);
    assert_eq!(page["cases"][0]["ticket_id"], id);

    let (status, body) = call(&app, Method::POST, &uri, Some(vote("tok-carlos", "reject", None))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("ticket_closed")));

    let (status, log) = call(&app, Method::GET, &format!("/reviews/{id}/audit"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(log.as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn dissent_requires_justification() {
    let (app, e) = seeded().await;
    let text = format!("{} otra vez", e.store().snapshot().cases()[7].text());
    let (_, rec) = call(&app, Method::POST, "/recommend", Some(json!({"text": text}))).await;
    let uri = format!("/reviews/{}/vote", rec["ticket_id"]);
    call(&app, Method::POST, &uri, Some(vote("tok-ana", "approve", None))).await;
    call(&app, Method::POST, &uri, Some(vote("tok-bea", "approve", None))).await;
    let (status, body) = call(&app, Method::POST, &uri, Some(vote("tok-carlos", "reject", None))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("justification_required")));
    let (status, body) = call(
        &app,
        Method::POST,
        &uri,
        Some(vote("tok-carlos", "reject", Some("off-topic tweet"))),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["state"], "rejected_with_justification");
    assert_eq!(body["justification"], "off-topic tweet");
    assert_eq!(body["case_count"], 150);
}

#[tokio::test]
async fn vote_auth_and_lookup_errors() {
    let (app, e) = seeded().await;
    let text = e.store().snapshot().cases()[2].text().to_owned();
    let (_, rec) = call(&app, Method::POST, "/recommend", Some(json!({"text": text}))).await;
    let id = rec["ticket_id"].as_u64().unwrap();

    let (status, body) = call(&app, Method::POST, &format!("/reviews/{id}/vote"), Some(vote("forged", "approve", None))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("unknown_expert")));
    let (status, body) = call(&app, Method::POST, "/reviews/999/vote", Some(vote("tok-ana", "approve", None))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_ticket")));
    let (status, _) = call(&app, Method::POST, "/reviews/abc/vote", Some(vote("tok-ana", "approve", None))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/reviews/999/audit", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(&app, Method::POST, &format!("/reviews/{id}/vote"), Some(json!({"expert_token": "tok-ana", "decision": "maybe"}))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_body")));

    // a vote is recorded under the token's owner
    let (_, body) = call(&app, Method::POST, &format!("/reviews/{id}/vote"), Some(vote("tok-bea", "approve", None))).await;
    assert_eq!(body["votes"][0]["expert_id"], "bea");
}

#[tokio::test]
async fn pending_queue_flags_own_votes() {
    let (app, e) = seeded().await;
    let (_, empty) = call(&app, Method::GET, "/reviews/pending", None).await;
    assert_eq!(empty, json!([]));
    let texts: Vec<String> = e.store().snapshot().cases()[..2].iter().map(|c| c.text().to_owned()).collect();
    let mut ids = vec![];
    for t in &texts {
        let (_, rec) = call(&app, Method::POST, "/recommend", Some(json!({"text": t}))).await;
        ids.push(rec["ticket_id"].as_u64().unwrap());
    }
    call(&app, Method::POST, &format!("/reviews/{}/vote", ids[1]), Some(vote("tok-ana", "approve", None))).await;
    call(&app, Method::POST, &format!("/reviews/{}/vote", ids[1]), Some(vote("tok-bea", "approve", None))).await;

    let (status, queue) = call_with(&app, Method::GET, "/reviews/pending", None, Some("tok-ana")).await;
    assert_eq!(status, StatusCode::OK);
    let q = queue.as_array().unwrap();
    assert_eq!(q.iter().map(|t| t["ticket_id"].as_u64().unwrap()).collect::<Vec<_>>(), ids);
    assert_eq!((q[0]["vote_count"].as_u64(), q[0]["voted_by_you"].as_bool()), (Some(0), Some(false)));
    assert_eq!((q[1]["vote_count"].as_u64(), q[1]["voted_by_you"].as_bool()), (Some(2), Some(true)));

    let (status, _) = call_with(&app, Method::GET, "/reviews/pending", None, Some("bogus")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn pagination_and_read_only_gets() {
    let (app, _) = seeded().await;
    let (_, before) = call(&app, Method::GET, "/health", None).await;

    let (status, page) = call(&app, Method::GET, "/cases", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((page["total"].as_u64(), page["limit"].as_u64()), (Some(150), Some(50)));
    assert_eq!(page["cases"].as_array().unwrap().len(), 50);
    assert_eq!(page["cases"][0]["case_id"], 1);

    let (_, page) = call(&app, Method::GET, "/cases?offset=140&limit=20", None).await;
    assert_eq!(page["cases"].as_array().unwrap().len(), 10);
    assert!(page["cases"].as_array().unwrap().iter().all(|c| c["origin"] == "seed"));

    let (status, page) = call(&app, Method::GET, "/cases?offset=1000", None).await;
    assert_eq!((status, page["cases"].clone()), (StatusCode::OK, json!([])));

    for bad in ["/cases?limit=-1", "/cases?offset=x", "/cases?limit=0", "/cases?limit=100000"] {
        let (status, body) = call(&app, Method::GET, bad, None).await;
        assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_pagination")), "{bad}");
    }
    let (_, after) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn import_errors_carry_record_index() {
    let app = app(engine());
    let bad = json!([
        {"text": "uno", "book_title": "A", "personality": "INTJ"},
        {"text": "dos", "book_title": "B"}
    ]);
    let (status, body) = call(&app, Method::POST, "/cases/import", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!((body["code"].as_str(), body["record_index"].as_u64()), (Some("schema_error"), Some(1)));

    let bad = json!([{"text": "uno", "book_title": "A", "personality": "ABCD"}]);
    let (_, body) = call(&app, Method::POST, "/cases/import", Some(bad)).await;
    assert_eq!(body["code"], "invalid_personality");

    let (_, health) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(health["case_count"], 0);
}

#[tokio::test]
async fn responses_are_serialized_engine_results() {
    let (app, served) = seeded().await;
    let reference = engine();
    reference.store().import_seed_json(&seed_json()).unwrap();
    let seeds: Vec<String> = served.store().snapshot().cases().iter().step_by(15).map(|c| c.text().to_owned()).collect();
    let mut texts = vec![
        "la soledad de la noche y el silencio".to_owned(),
        "Sonreír es lo más saludable que puedes hacer a diario".to_owned(),
        "guerra hambre y miedo en la ciudad".to_owned(),
    ];
    texts.extend(seeds);
    for text in texts {
        let (_, mut got) = call(&app, Method::POST, "/recommend", Some(json!({"text": text}))).await;
        got.as_object_mut().unwrap().remove("ticket_id");
        let rec = reference.recommend(&text).unwrap();
        let expected: Value = serde_json::from_str(&serde_json::to_string(&RecommendationBody::new(&rec, None)).unwrap()).unwrap();
        assert_eq!(got, expected, "{text}");
    }
}

#[test]
fn credentials_must_match_panel() {
    let bad = vec![ExpertCredential { id: "zoe".into(), token: "t".into() }];
    assert!(AppState::new(engine(), &bad).is_err());
    let dup = vec![
        ExpertCredential { id: "ana".into(), token: "t".into() },
        ExpertCredential { id: "bea".into(), token: "t".into() },
    ];
    assert!(AppState::new(engine(), &dup).is_err());
}
