use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use forumstrat::eval::{cohen_kappa, fleiss_kappa, fleiss_table, KappaResult};
use forumstrat::scheme::CodingScheme;
use forumstrat_annotate::{router, AnnotationService, AnnotatorConfig, Sample, SamplePost, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

const ADMIN: &str = "admin-token";

fn annotators(ids: &[&str]) -> Vec<AnnotatorConfig> {
    ids.iter()
        .map(|id| AnnotatorConfig {
            id: id.to_string(),
            token: format!("tok-{id}"),
        })
        .collect()
}

fn sample(n: usize) -> Sample {
    let posts = (0..n)
        .map(|i| SamplePost {
            post_id: format!("p{i:03}"),
            content: format!("post body {i}"),
            thread_title: format!("thread {}", i / 3),
            board_title: "market".into(),
        })
        .collect();
    Sample::new("s1", posts).unwrap()
}

fn app(dir: &Path, n_posts: usize, ids: &[&str]) -> Router {
    let store = Store::open(dir, 4).unwrap();
    let service = AnnotationService::new(
        CodingScheme::default(),
        vec![sample(n_posts)],
        &annotators(ids),
        &[ADMIN.to_owned()],
        store,
    )
    .unwrap();
    router(Arc::new(service), None)
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn label(app: &Router, who: &str, post: &str, class: &str) -> Value {
    let (status, body) = call(
        app,
        "POST",
        "/api/samples/s1/labels",
        Some(&format!("tok-{who}")),
        Some(json!({ "post_id": post, "class_id": class })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    serde_json::from_str(&body).unwrap()
}

async fn agreement(app: &Router, token: &str) -> (StatusCode, Value) {
    let (status, body) = call(app, "GET", "/api/samples/s1/agreement", Some(token), None).await;
    (status, serde_json::from_str(&body).unwrap())
}

async fn export(app: &Router) -> String {
    let (status, body) = call(app, "GET", "/api/samples/s1/export.csv", Some(ADMIN), None).await;
    assert_eq!(status, StatusCode::OK);
    body
}

/// Parses the label section of an export into post → annotator → class.
fn export_labels(csv_text: &str) -> BTreeMap<String, BTreeMap<String, String>> {
    let section = csv_text.split("\n\n").next().unwrap();
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut lines = section.lines();
    assert_eq!(lines.next(), Some("post_id,annotator_id,class_id"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        out.entry(f[0].into()).or_default().insert(f[1].into(), f[2].into());
    }
    out
}

fn export_finals(csv_text: &str) -> Vec<(String, String)> {
    let section = csv_text.split("\n\n").nth(1).unwrap();
    let mut lines = section.lines();
    assert_eq!(lines.next(), Some("post_id,final_class"));
    lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.to_owned(), b.to_owned())
        })
        .collect()
}

#[tokio::test]
async fn cohen_kappa_matches_export() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 10, &["alice", "bob"]);
    let a = ["spam", "spam", "ddos", "access", "not_criminal", "not_criminal", "spam", "ddos", "access", "spam"];
    let b = ["spam", "ddos", "ddos", "access", "not_criminal", "spam", "spam", "ddos", "not_criminal", "spam"];
    for i in 0..10 {
        label(&app, "alice", &format!("p{i:03}"), a[i]).await;
        label(&app, "bob", &format!("p{i:03}"), b[i]).await;
    }
    let (status, view) = agreement(&app, "tok-alice").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["kind"], "Cohen");

    let labels = export_labels(&export(&app).await);
    let xa: Vec<&str> = labels.values().map(|m| m["alice"].as_str()).collect();
    let xb: Vec<&str> = labels.values().map(|m| m["bob"].as_str()).collect();
    let oracle: KappaResult<f64> = cohen_kappa(&xa, &xb).unwrap();
    assert_eq!(view["kappa"].as_f64().unwrap(), oracle.value);
    assert_eq!(view["n_items"], 10);

    let conflicts: Vec<&str> = view["conflicts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["post_id"].as_str().unwrap())
        .collect();
    assert_eq!(conflicts, ["p001", "p005", "p008"]);
}

#[tokio::test]
async fn fleiss_kappa_matches_export() {
    let dir = tempfile::tempdir().unwrap();
    let ids = ["ann1", "ann2", "ann3"];
    let app = app(dir.path(), 8, &ids);
    let rows = [
        ["spam", "spam", "spam"],
        ["spam", "ddos", "spam"],
        ["access", "access", "not_criminal"],
        ["not_criminal", "not_criminal", "not_criminal"],
        ["ddos", "ddos", "ddos"],
        ["bots_malware", "spam", "bots_malware"],
        ["access", "access", "access"],
        ["not_criminal", "spam", "ddos"],
    ];
    for (i, row) in rows.iter().enumerate() {
        for (who, class) in ids.iter().zip(row) {
            label(&app, who, &format!("p{i:03}"), class).await;
        }
    }
    let (_, view) = agreement(&app, ADMIN).await;
    assert_eq!(view["kind"], "Fleiss");

    let scheme = CodingScheme::default();
    let labels = export_labels(&export(&app).await);
    let ratings: Vec<Vec<usize>> = labels
        .values()
        .map(|m| m.values().map(|c| scheme.index_of(c).unwrap()).collect())
        .collect();
    let oracle: KappaResult<f64> = fleiss_kappa(&fleiss_table(&ratings, scheme.len()).unwrap()).unwrap();
    assert_eq!(view["kappa"].as_f64().unwrap(), oracle.value);
    assert_eq!(view["n_items"], 8);
}

#[tokio::test]
async fn full_agreement_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 3, &["alice", "bob"]);
    for (i, c) in ["spam", "ddos", "access"].iter().enumerate() {
        label(&app, "alice", &format!("p{i:03}"), c).await;
        label(&app, "bob", &format!("p{i:03}"), c).await;
    }
    let (_, view) = agreement(&app, "tok-bob").await;
    assert_eq!(view["kappa"].as_f64().unwrap(), 1.0);
    assert_eq!(view["substantial"], true);
    assert!(view["conflicts"].as_array().unwrap().is_empty());
    assert_eq!(export_finals(&export(&app).await).len(), 3);
}

#[tokio::test]
async fn insufficient_overlap_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 4, &["alice", "bob"]);
    let (status, view) = agreement(&app, "tok-alice").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(view["error"].as_str().unwrap().starts_with("insufficient overlap"));
    label(&app, "alice", "p000", "spam").await;
    label(&app, "bob", "p001", "spam").await;
    let (status, view) = agreement(&app, "tok-alice").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(view["error"].as_str().unwrap().starts_with("insufficient overlap"));
}

#[tokio::test]
async fn interleaved_annotators_each_see_every_post_once() {
    let dir = tempfile::tempdir().unwrap();
    let n = 7;
    let app = app(dir.path(), n, &["alice", "bob"]);
    let mut log: Vec<(&str, String)> = Vec::new();
    let mut done = [false, false];
    let mut turn = 0usize;
    while !done.iter().all(|&d| d) {
        // Uneven interleaving: alice twice, bob once.
        let k = if turn % 3 == 2 { 1 } else { 0 };
        turn += 1;
        if done[k] {
            continue;
        }
        let who = ["alice", "bob"][k];
        let (status, body) = call(
            &app,
            "GET",
            &format!("/api/samples/s1/next?annotator={who}"),
            Some(&format!("tok-{who}")),
            None,
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let v: Value = serde_json::from_str(&body).unwrap();
        if v["done"] == true {
            assert_eq!(v["labeled"], n);
            done[k] = true;
            continue;
        }
        let post = v["post"]["post_id"].as_str().unwrap().to_owned();
        assert_eq!(v["scheme"].as_array().unwrap().len(), 7);
        log.push((who, post.clone()));
        label(&app, who, &post, "spam").await;
    }
    let expected: Vec<String> = (0..n).map(|i| format!("p{i:03}")).collect();
    for who in ["alice", "bob"] {
        let seen: Vec<String> = log.iter().filter(|(w, _)| *w == who).map(|(_, p)| p.clone()).collect();
        assert_eq!(seen, expected, "{who}");
    }
}

#[tokio::test]
async fn duplicate_submission_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 3, &["alice", "bob"]);
    assert_eq!(label(&app, "alice", "p000", "spam").await["status"], "created");
    assert_eq!(label(&app, "alice", "p000", "spam").await["status"], "unchanged");
    assert_eq!(export_labels(&export(&app).await)["p000"].len(), 1);
    assert_eq!(label(&app, "alice", "p000", "ddos").await["status"], "updated");
    let labels = export_labels(&export(&app).await);
    assert_eq!(labels["p000"]["alice"], "ddos");
    let journal = std::fs::read_to_string(dir.path().join("journal.jsonl")).unwrap();
    assert_eq!(journal.lines().count(), 2);
    assert!(journal.lines().nth(1).unwrap().contains(r#""previous":"spam""#));
}

#[tokio::test]
async fn store_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let app = app(dir.path(), 6, &["alice", "bob"]);
        for i in 0..6 {
            label(&app, "alice", &format!("p{i:03}"), "spam").await;
        }
        for i in 0..3 {
            label(&app, "bob", &format!("p{i:03}"), if i == 1 { "ddos" } else { "spam" }).await;
        }
        let (status, _) = call(
            &app,
            "POST",
            "/api/samples/s1/resolutions",
            Some("tok-alice"),
            Some(json!({"post_id": "p001", "class_id": "ddos"})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        export(&app).await
    };
    let app = app(dir.path(), 6, &["alice", "bob"]);
    assert_eq!(export(&app).await, before);
    let (_, body) = call(&app, "GET", "/api/samples/s1/next", Some("tok-bob"), None).await;
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["post"]["post_id"], "p003");
    assert_eq!(v["labeled"], 3);
    assert_eq!(
        export_finals(&before),
        [("p000".to_owned(), "spam".to_owned()), ("p001".into(), "ddos".into()), ("p002".into(), "spam".into())]
    );
}

#[tokio::test]
async fn resolved_posts_are_frozen() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 2, &["alice", "bob"]);
    let resolve = |post: &'static str| {
        let app = app.clone();
        async move {
            call(
                &app,
                "POST",
                "/api/samples/s1/resolutions",
                Some("tok-bob"),
                Some(json!({"post_id": post, "class_id": "spam"})),
            )
            .await
            .0
        }
    };
    label(&app, "alice", "p000", "spam").await;
    assert_eq!(resolve("p000").await, StatusCode::CONFLICT);
    label(&app, "bob", "p000", "ddos").await;
    assert_eq!(resolve("p000").await, StatusCode::OK);
    let (status, _) = call(
        &app,
        "POST",
        "/api/samples/s1/labels",
        Some("tok-alice"),
        Some(json!({"post_id": "p000", "class_id": "ddos"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (_, view) = agreement(&app, "tok-alice").await;
    assert_eq!(view["conflicts"][0]["resolved"], true);
}

#[tokio::test]
async fn access_rules() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 2, &["alice", "bob"]);
    let next = |token: Option<&'static str>, q: &'static str| {
        let app = app.clone();
        async move { call(&app, "GET", &format!("/api/samples/s1/next{q}"), token, None).await.0 }
    };
    assert_eq!(next(None, "").await, StatusCode::UNAUTHORIZED);
    assert_eq!(next(Some("bogus"), "").await, StatusCode::UNAUTHORIZED);
    assert_eq!(next(Some("tok-alice"), "?annotator=bob").await, StatusCode::FORBIDDEN);
    assert_eq!(next(Some("tok-alice"), "?annotator=carol").await, StatusCode::NOT_FOUND);
    assert_eq!(next(Some(ADMIN), "").await, StatusCode::FORBIDDEN);
    let (status, _) = call(&app, "GET", "/api/samples/nope/next", Some("tok-alice"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let post = |body: Value| {
        let app = app.clone();
        async move { call(&app, "POST", "/api/samples/s1/labels", Some("tok-alice"), Some(body)).await.0 }
    };
    assert_eq!(post(json!({"post_id": "p000", "class_id": "fraud"})).await, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(post(json!({"post_id": "p999", "class_id": "spam"})).await, StatusCode::NOT_FOUND);
    assert_eq!(
        post(json!({"post_id": "p000", "class_id": "spam", "annotator": "bob"})).await,
        StatusCode::FORBIDDEN
    );

    let (status, _) = call(&app, "GET", "/api/samples/s1/export.csv", Some("tok-alice"), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, body) = call(&app, "GET", "/api/scheme", Some("tok-bob"), None).await;
    assert_eq!(status, StatusCode::OK);
    let scheme: CodingScheme = serde_json::from_str(&body).unwrap();
    assert_eq!(scheme, CodingScheme::default().effective());
}

#[tokio::test]
async fn responses_never_carry_other_annotators_labels() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 2, &["alice", "bob"]);
    label(&app, "alice", "p000", "vpn_hosting").await;
    label(&app, "alice", "p001", "trading_credentials").await;
    label(&app, "bob", "p000", "bots_malware").await;
    let secret = ["vpn_hosting", "trading_credentials"];
    let mut bodies = Vec::new();
    bodies.push(call(&app, "GET", "/api/samples/s1/next", Some("tok-bob"), None).await.1);
    bodies.push(
        call(
            &app,
            "POST",
            "/api/samples/s1/labels",
            Some("tok-bob"),
            Some(json!({"post_id": "p001", "class_id": "spam"})),
        )
        .await
        .1,
    );
    bodies.push(call(&app, "GET", "/api/samples/s1/next", Some("tok-bob"), None).await.1);
    bodies.push(call(&app, "GET", "/api/samples/s1/agreement", Some("tok-bob"), None).await.1);
    for b in &bodies {
        // The scheme lists every class; only the rest of a payload can leak.
        let mut v: Value = serde_json::from_str(b).unwrap();
        v.as_object_mut().unwrap().remove("scheme");
        let b = v.to_string();
        for s in secret {
            assert!(!b.contains(s), "response leaks `{s}`: {b}");
        }
    }
}

#[tokio::test]
async fn merged_classes_fold_into_targets() {
    let dir = tempfile::tempdir().unwrap();
    let mut scheme = CodingScheme::default();
    scheme.merge_map.insert("vpn_hosting".into(), "not_criminal".into());
    let service = AnnotationService::new(
        scheme,
        vec![sample(1)],
        &annotators(&["alice"]),
        &[],
        Store::open(dir.path(), 10).unwrap(),
    )
    .unwrap();
    let app = router(Arc::new(service), None);
    let ack = label(&app, "alice", "p000", "vpn_hosting").await;
    assert_eq!(ack["class_id"], "not_criminal");
    let (_, body) = call(&app, "GET", "/api/scheme", Some("tok-alice"), None).await;
    assert!(!body.contains("vpn_hosting"));
}

#[tokio::test]
async fn static_bundle_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let web = dir.path().join("web");
    std::fs::create_dir(&web).unwrap();
    std::fs::write(web.join("index.html"), "<html>ui</html>").unwrap();
    let service = AnnotationService::new(
        CodingScheme::default(),
        vec![sample(1)],
        &annotators(&["alice"]),
        &[],
        Store::open(&dir.path().join("data"), 10).unwrap(),
    )
    .unwrap();
    let app = router(Arc::new(service), Some(&web));
    let (status, body) = call(&app, "GET", "/index.html", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "<html>ui</html>");
}
