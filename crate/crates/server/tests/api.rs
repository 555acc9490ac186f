mod common;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::http::StatusCode;
use chrono::NaiveDate;
use common::*;
use serde_json::Value;
use substrace::ingest::TransferEvent;
use substrace::model::{TimeWindow, WalletAddress};
use substrace::simulator::SimConfig;
use substrace_server::{router, AppState, Snapshot};

fn ids(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn projects_echo_the_input_file() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 1);
    let app = app(dir.path());
    let (status, body) = get(&app, "/api/projects").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(keys(&body), sorted(&["span", "projects"]));
    let records = body["projects"].as_array().unwrap();
    assert_eq!(records.len(), 10);

    let text = std::fs::read_to_string(dir.path().join("projects.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "contract,name,hashtag,launch_date");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), records.len());
    for row in rows {
        let r = records.iter().find(|r| r["contract"] == row[0]).unwrap();
        assert_eq!(keys(r), sorted(&["contract", "name", "hashtag", "launch_date", "alive"]));
        assert_eq!(r["name"], row[1]);
        assert_eq!(r["hashtag"], row[2]);
        assert_eq!(r["launch_date"], row[3]);
        assert_eq!(r["alive"], true);
    }
}

#[tokio::test]
async fn no_dataset_is_not_ready() {
    let app = router(Arc::new(AppState::default()));
    let (status, body) = get(&app, "/api/projects").await;
    assert_error(status, &body, StatusCode::SERVICE_UNAVAILABLE, "ServiceNotReady");
    let (status, body) = post(&app, "{}").await;
    assert_error(status, &body, StatusCode::SERVICE_UNAVAILABLE, "ServiceNotReady");

    let empty = tempfile::tempdir().unwrap();
    let state = AppState::new(None, Some(empty.path().to_path_buf()));
    let app = router(Arc::new(state));
    let (status, body) = send(&app, axum::http::Request::post("/api/reload").body(axum::body::Body::empty()).unwrap()).await;
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_error(status, &body, StatusCode::SERVICE_UNAVAILABLE, "ServiceNotReady");
}

#[tokio::test]
async fn identical_requests_return_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 2);
    let request = r#"{"window":"2022-01-01:2022-02-28","method":"gmm","k":3,"seed":7}"#;
    let app_a = app(dir.path());
    let (s1, first) = post_raw(&app_a, request).await;
    let (s2, second) = post_raw(&app_a, request).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);
    // A fresh snapshot recomputes instead of hitting the cache.
    let (_, third) = post_raw(&app(dir.path()), request).await;
    assert_eq!(first, third);
    // Same request with fields reordered and the window spelled out.
    let reordered = r#"{"seed":7,"k":3,"method":"gmm","window":{"start":"2022-01-01","end":"2022-02-28"}}"#;
    let (_, fourth) = post_raw(&app_a, reordered).await;
    assert_eq!(first, fourth);
}

#[tokio::test]
async fn analysis_cache_is_keyed_by_request() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 3);
    let snapshot = Arc::new(Snapshot::load(dir.path()).unwrap());
    let req = substrace_server::AnalysisRequest { k: 3, ..Default::default() }.validate().unwrap();
    let a = snapshot.analysis_body(&req).unwrap();
    let b = snapshot.analysis_body(&req).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    assert_eq!(snapshot.cache().stats(), (1, 1));
    let other = substrace_server::AnalysisRequest { k: 4, ..Default::default() }.validate().unwrap();
    snapshot.analysis_body(&other).unwrap();
    assert_eq!(snapshot.cache().len(), 2);
}

#[tokio::test]
async fn analysis_schema() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 4);
    let app = app(dir.path());
    let (status, body) = post(&app, r#"{"window":"2022-01-20:2022-02-20","k":3,"attributes":["floor_price_mean","holder_count_mean","popularity_mean"]}"#).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(
        keys(&body),
        sorted(&["request", "window", "alive", "inactive", "scores", "clusters", "graph", "histograms", "pcp"])
    );
    assert_eq!(
        keys(&body["request"]),
        sorted(&["window", "attributes", "method", "k", "seed", "edge_threshold"])
    );
    assert_eq!(body["request"]["window"], body["window"]);
    let alive: BTreeSet<String> = ids(&body["alive"]).into_iter().collect();
    assert!(alive.len() >= 2);

    let scores = body["scores"].as_array().unwrap();
    let score_ids: BTreeSet<String> = scores.iter().map(|s| s["project"].as_str().unwrap().to_string()).collect();
    assert_eq!(score_ids, alive);
    for s in scores {
        assert_eq!(
            keys(s),
            sorted(&[
                "project", "window", "recency_raw", "recency", "global_pa_raw", "global_pa",
                "propensity_raw", "propensity", "impact_raw", "impact",
            ])
        );
    }

    let clusters = &body["clusters"];
    assert_eq!(
        keys(clusters),
        sorted(&[
            "method", "k", "seed", "assignments", "group_order", "group_sizes", "centroids",
            "iterations_run", "converged", "objective",
        ])
    );
    let assigned: BTreeSet<String> = keys(&clusters["assignments"]).into_iter().collect();
    assert_eq!(assigned, alive);
    let sizes: u64 = clusters["group_sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(sizes as usize, alive.len());

    let graph = &body["graph"];
    assert_eq!(
        keys(graph),
        sorted(&["window", "k", "side_length", "edge_threshold", "nodes", "edges", "ring", "group_arcs"])
    );
    let alive_nodes: BTreeSet<String> = graph["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|n| n["alive"] == true)
        .map(|n| n["project"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(alive_nodes, alive);
    for n in graph["nodes"].as_array().unwrap() {
        assert_eq!(
            keys(n),
            sorted(&["project", "group", "b", "s", "h", "x", "y", "holders", "alive", "radius", "mechanisms"])
        );
    }
    for e in graph["edges"].as_array().unwrap() {
        assert_eq!(keys(e), sorted(&["source", "target", "migrated", "p", "pi", "pi_h"]));
        assert!(alive.contains(e["source"].as_str().unwrap()));
    }
    for a in graph["group_arcs"].as_array().unwrap() {
        assert_eq!(keys(a), sorted(&["group", "start", "end", "members"]));
    }

    let hist = &body["histograms"];
    assert_eq!(keys(hist), sorted(&["recency", "preferential_attachment", "propensity", "impact"]));
    for name in ["recency", "preferential_attachment", "propensity", "impact"] {
        let h = &hist[name];
        assert_eq!(keys(h), sorted(&["lo", "hi", "counts"]));
        let counts = h["counts"].as_array().unwrap();
        assert_eq!(counts.len(), 10);
        assert_eq!(counts.iter().map(|c| c.as_u64().unwrap()).sum::<u64>() as usize, alive.len());
    }

    let mut pcp_ids = BTreeSet::new();
    for g in body["pcp"].as_array().unwrap() {
        assert_eq!(keys(g), sorted(&["group", "projects"]));
        for r in g["projects"].as_array().unwrap() {
            assert_eq!(keys(r), sorted(&["project", "recency", "preferential_attachment", "propensity", "impact"]));
            let id = r["project"].as_str().unwrap().to_string();
            assert_eq!(clusters["assignments"][&id], g["group"]);
            pcp_ids.insert(id);
        }
    }
    assert_eq!(pcp_ids, alive);
}

#[tokio::test]
async fn analysis_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 5);
    let app = app(dir.path());
    let (s, b) = post(&app, r#"{"k":11}"#).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "InvalidK");
    let (s, b) = post(&app, r#"{"attributes":["floor_price_mean","shoe_size"]}"#).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "UnknownAttribute");
    let (s, b) = post(&app, r#"{"window":"2030-01-01:2030-02-01"}"#).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "EmptyWindow");
    let (s, b) = post(&app, r#"{"window":"2022-02-01:2022-01-01"}"#).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "EmptyWindow");
    // Only the first project has launched before day 10.
    let (s, b) = post(&app, r#"{"window":"2022-01-01:2022-01-05","k":2}"#).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "InsufficientProjects");
    let (s, b) = post(&app, "not json").await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "BadRequest");
    let (s, b) = get(&app, "/api/nowhere").await;
    assert_error(s, &b, StatusCode::NOT_FOUND, "NotFound");
}

#[tokio::test]
async fn edges_match_ground_truth_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = write_fixture(dir.path(), 6);
    let app = app(dir.path());
    let (status, body) = post(&app, r#"{"k":3,"edge_threshold":0}"#).await;
    assert_eq!(status, StatusCode::OK);
    let pairs: BTreeSet<(String, String)> = out
        .ground_truth
        .migrations
        .iter()
        .map(|m| (m.source.to_string(), m.target.to_string()))
        .collect();
    let edges: BTreeSet<(String, String)> = body["graph"]["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["source"].as_str().unwrap().to_string(), e["target"].as_str().unwrap().to_string()))
        .collect();
    assert!(!pairs.is_empty());
    assert_eq!(edges, pairs);
}

fn day(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// Buyers, sellers and end-of-day holders of one project over a window,
/// by replaying the raw log token by token.
fn naive_roles(
    log: &[TransferEvent],
    project: &str,
    window: TimeWindow,
) -> (BTreeSet<WalletAddress>, BTreeSet<WalletAddress>, BTreeSet<WalletAddress>) {
    let mut owner: HashMap<u64, WalletAddress> = HashMap::new();
    let (mut buyers, mut sellers, mut holders) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
    let events: Vec<&TransferEvent> = log.iter().filter(|e| e.project.as_str() == project).collect();
    let first = events.first().map(|e| e.date()).unwrap();
    let mut d = first;
    let mut k = 0;
    while d <= window.end {
        while k < events.len() && events[k].date() == d {
            let e = events[k];
            if !e.from.is_zero() {
                owner.remove(&e.token_id);
                if window.contains(d) {
                    sellers.insert(e.from.clone());
                }
            }
            if !e.to.is_zero() {
                owner.insert(e.token_id, e.to.clone());
                if window.contains(d) {
                    buyers.insert(e.to.clone());
                }
            }
            k += 1;
        }
        if window.contains(d) {
            holders.extend(owner.values().cloned());
        }
        d = d.succ_opt().unwrap();
    }
    (buyers, sellers, holders)
}

#[tokio::test]
async fn pair_counts_match_the_raw_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = write_fixture(dir.path(), 7);
    let app = app(dir.path());
    let window = TimeWindow::new(day("2022-01-25"), day("2022-02-24")).unwrap();
    let ids: Vec<String> = out.projects.iter().map(|p| p.id.to_string()).collect();
    let mut checked = 0;
    for (a, b) in [(0, 1), (1, 2), (3, 7), (9, 4)] {
        let uri = format!("/api/pair?a={}&b={}&window={window}", ids[a], ids[b]);
        let (status, body) = get(&app, &uri).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_eq!(keys(&body), sorted(&["window", "a", "b", "co_occurrence", "correlations", "evolution"]));
        let (ba, sa, ha) = naive_roles(&out.transfers, &ids[a], window);
        let (bb, sb, hb) = naive_roles(&out.transfers, &ids[b], window);
        for (role, x, y) in [("buyers", &ba, &bb), ("sellers", &sa, &sb), ("holders", &ha, &hb)] {
            let c = &body["co_occurrence"][role];
            assert_eq!(c["shared"], x.intersection(y).count(), "{role}");
            assert_eq!(c["a"], x.len(), "{role}");
            assert_eq!(c["b"], y.len(), "{role}");
            let r = body["correlations"][role]["value"].as_f64().unwrap();
            assert!((-1.0..=1.0).contains(&r));
        }
        let evo = body["evolution"].as_array().unwrap();
        assert_eq!(evo.len(), 2);
        assert_eq!(evo[0]["project"], ids[a]);
        assert_eq!(evo[1]["project"], ids[b]);
        for series in evo {
            assert_eq!(series["dates"].as_array().unwrap().len(), window.days() as usize);
        }
        checked += 1;
    }
    assert_eq!(checked, 4);
}

#[tokio::test]
async fn pair_errors_and_disjoint_populations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(8);
    cfg.true_lambda = vec![0.0; 100];
    let out = substrace::simulator::simulate(&cfg).unwrap();
    out.write_to(dir.path()).unwrap();
    let app = app(dir.path());
    let ids: Vec<String> = out.projects.iter().map(|p| p.id.to_string()).collect();

    let (s, body) = get(&app, &format!("/api/pair?a={}&b={}", ids[0], ids[5])).await;
    assert_eq!(s, StatusCode::OK);
    for role in ["buyers", "sellers", "holders"] {
        assert_eq!(body["co_occurrence"][role]["shared"], 0);
    }

    let (s, b) = get(&app, &format!("/api/pair?a={}&b={}", ids[0], ids[0])).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "SamePair");
    let (s, b) = get(&app, &format!("/api/pair?a={}&b=0xdead", ids[0])).await;
    assert_error(s, &b, StatusCode::NOT_FOUND, "NotFound");
    let (s, b) = get(&app, &format!("/api/pair?a={}&b={}&window=2022-01-01:2022-01-05", ids[0], ids[9])).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "NotAlive");
    let (s, b) = get(&app, &format!("/api/pair?a={}", ids[0])).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "BadRequest");
}

#[tokio::test]
async fn evolution_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = write_fixture(dir.path(), 9);
    let app = app(dir.path());
    let id = out.projects[3].id.to_string();

    let (s, body) = get(&app, &format!("/api/evolution?project={id}&window=2022-01-20:2022-02-18")).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let fields = [
        "dates", "buyers", "sellers", "holders", "recency_raw", "recency", "preferential_attachment_raw",
        "preferential_attachment", "propensity_raw", "propensity", "impact_raw", "impact",
    ];
    let mut expected = fields.to_vec();
    expected.extend(["project", "window"]);
    assert_eq!(keys(&body), sorted(&expected));
    for f in fields {
        assert_eq!(body[f].as_array().unwrap().len(), 30, "{f}");
    }
    // Holder counts agree with the simulator's end-of-day truth.
    for (k, h) in body["holders"].as_array().unwrap().iter().enumerate() {
        let d = day("2022-01-20") + chrono::Days::new(k as u64);
        assert_eq!(h.as_u64().unwrap() as u32, out.ground_truth.holder_count(&out.projects[3].id, d).unwrap());
    }

    let (_, one) = get(&app, &format!("/api/evolution?project={id}&window=2022-02-01:2022-02-01")).await;
    for f in fields {
        assert_eq!(one[f].as_array().unwrap().len(), 1, "{f}");
    }
    let (s, b) = get(&app, &format!("/api/evolution?project={}&window=2022-01-01:2022-01-03", out.projects[9].id)).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "NotAlive");
    let (s, b) = get(&app, "/api/evolution?project=0xbeef").await;
    assert_error(s, &b, StatusCode::NOT_FOUND, "NotFound");
}

#[tokio::test]
async fn one_day_evolution_reconciles_with_analysis() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 10);
    let app = app(dir.path());
    let (_, analysis) = post(&app, r#"{"window":"2022-02-05:2022-02-05","k":2}"#).await;
    for score in analysis["scores"].as_array().unwrap() {
        let id = score["project"].as_str().unwrap();
        let (_, evo) = get(&app, &format!("/api/evolution?project={id}&window=2022-02-05:2022-02-05")).await;
        for (series, field) in [
            ("recency", "recency"),
            ("recency_raw", "recency_raw"),
            ("preferential_attachment", "global_pa"),
            ("propensity_raw", "propensity_raw"),
            ("impact", "impact"),
            ("impact_raw", "impact_raw"),
        ] {
            assert_eq!(evo[series][0], score[field], "{id} {series}");
        }
    }
}

#[tokio::test]
async fn reload_swaps_whole_snapshots() {
    let small = tempfile::tempdir().unwrap();
    let large = tempfile::tempdir().unwrap();
    substrace::simulator::simulate(&SimConfig::generated(4, 200, 30, 1)).unwrap().write_to(small.path()).unwrap();
    substrace::simulator::simulate(&SimConfig::generated(7, 200, 45, 2)).unwrap().write_to(large.path()).unwrap();
    let state = Arc::new(AppState::new(Some(Snapshot::load(small.path()).unwrap()), None));
    let app = router(state.clone());

    let small_snap = Snapshot::load(small.path()).unwrap();
    let large_snap = Snapshot::load(large.path()).unwrap();
    let expect = |n: usize| -> Value {
        let snap = if n == 4 { &small_snap } else { &large_snap };
        serde_json::to_value(snap.dataset.span()).unwrap()
    };
    let (exp4, exp7) = (expect(4), expect(7));

    let swapper = {
        let state = state.clone();
        let (small, large) = (small.path().to_path_buf(), large.path().to_path_buf());
        tokio::task::spawn_blocking(move || {
            for i in 0..20 {
                let dir = if i % 2 == 0 { &large } else { &small };
                state.store.replace(Snapshot::load(dir).unwrap());
            }
        })
    };
    let mut readers = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        let (exp4, exp7) = (exp4.clone(), exp7.clone());
        readers.push(tokio::spawn(async move {
            for _ in 0..25 {
                let (s, body) = get(&app, "/api/projects").await;
                assert_eq!(s, StatusCode::OK);
                let n = body["projects"].as_array().unwrap().len();
                let span = body["span"].clone();
                match n {
                    4 => assert_eq!(span, exp4),
                    7 => assert_eq!(span, exp7),
                    other => panic!("mixed snapshot with {other} projects"),
                }
            }
        }));
    }
    swapper.await.unwrap();
    for r in readers {
        r.await.unwrap();
    }
}

#[tokio::test]
async fn reload_route_reads_the_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    substrace::simulator::simulate(&SimConfig::generated(3, 100, 20, 1)).unwrap().write_to(dir.path()).unwrap();
    let state = Arc::new(AppState::new(None, Some(dir.path().to_path_buf())));
    let app = router(state);
    let (s, _) = get(&app, "/api/projects").await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    let (s, body) = send(&app, axum::http::Request::post("/api/reload").body(axum::body::Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["projects"], 3);
    let (s, body) = get(&app, "/api/projects").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["projects"].as_array().unwrap().len(), 3);
}
