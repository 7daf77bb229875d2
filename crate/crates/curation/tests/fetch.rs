use selftaught_curation::{fetch_metadata_pages, filter_pretraining_maps, CurationError, PageSource, RetryPolicy};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pages")
}

fn quick_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 4,
        initial_backoff: Duration::from_millis(1),
        max_backoff: Duration::from_millis(4),
        timeout: Duration::from_secs(10),
    }
}

/// Serves the fixture pages with `next` links pointing back at itself.
/// `failures` maps a request target to a list of statuses returned before
/// the real page.
struct Server {
    base: String,
    hits: Arc<Mutex<Vec<String>>>,
}

fn serve(pages: Vec<serde_json::Value>, failures: HashMap<String, Vec<u16>>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(Mutex::new(Vec::new()));
    let (b, h) = (base.clone(), hits.clone());
    std::thread::spawn(move || {
        let mut failures = failures;
        for stream in listener.incoming() {
            let Ok(mut s) = stream else { break };
            let mut buf = Vec::new();
            let mut chunk = [0u8; 1024];
            while !buf.windows(4).any(|w| w == b"\r\n\r\n") {
                let n = s.read(&mut chunk).unwrap_or(0);
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&chunk[..n]);
            }
            let req = String::from_utf8_lossy(&buf);
            let target = req.split_whitespace().nth(1).unwrap_or("/").to_string();
            h.lock().unwrap().push(target.clone());
            let (status, body) = match failures.get_mut(&target).and_then(|f| (!f.is_empty()).then(|| f.remove(0))) {
                Some(code) => (code, String::from("{}")),
                None => {
                    let offset: usize = target.split("offset=").nth(1).and_then(|o| o.parse().ok()).unwrap_or(0);
                    match pages.get(offset / 2) {
                        Some(p) => {
                            let mut p = p.clone();
                            if offset / 2 + 1 < pages.len() {
                                p["next"] = format!("{b}/api/images/?limit=2&offset={}", offset + 2).into();
                            }
                            (200, p.to_string())
                        }
                        None => (404, String::from("{}")),
                    }
                }
            };
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = s.write_all(resp.as_bytes());
        }
    });
    Server { base, hits }
}

fn fixture_pages() -> Vec<serde_json::Value> {
    (0..3)
        .map(|i| serde_json::from_slice(&std::fs::read(fixture_dir().join(format!("page_{i:04}.json"))).unwrap()).unwrap())
        .collect()
}

#[test]
fn offline_replay_yields_records_in_page_order() {
    let out = fetch_metadata_pages(&PageSource::Offline { dir: fixture_dir() }, 2).unwrap();
    assert_eq!(out.pages, 3);
    let ids: Vec<_> = out.records.iter().map(|r| r.as_ref().unwrap().image_id.clone()).collect();
    assert_eq!(ids, ["100", "101", "102", "103", "104", "105"]);
}

#[test]
fn empty_result_set() {
    let server = serve(vec![serde_json::json!({"next": null, "results": []})], HashMap::new());
    let src = PageSource::Live {
        endpoint: format!("{}/api/images/", server.base),
        retry: quick_retry(),
        record_to: None,
    };
    let out = fetch_metadata_pages(&src, 2).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.pages, 1);
}

#[test]
fn transient_failures_are_retried() {
    let mut failures = HashMap::new();
    failures.insert("/api/images/?limit=2&offset=2".to_string(), vec![503, 503]);
    let server = serve(fixture_pages(), failures);
    let dir = tempfile::tempdir().unwrap();
    let src = PageSource::Live {
        endpoint: format!("{}/api/images/", server.base),
        retry: quick_retry(),
        record_to: Some(dir.path().to_path_buf()),
    };
    let live = fetch_metadata_pages(&src, 2).unwrap();
    assert_eq!(live.retries, 2);
    assert_eq!(live.records.len(), 6);
    assert_eq!(server.hits.lock().unwrap().len(), 5);

    // Recorded pages replay to the same manifest.
    let offline = fetch_metadata_pages(&PageSource::Offline { dir: dir.path().to_path_buf() }, 2).unwrap();
    let (a, ra) = filter_pretraining_maps(live.records);
    let (b, rb) = filter_pretraining_maps(offline.records);
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(a.len(), 4);
}

#[test]
fn non_retryable_status_fails_fast() {
    let mut failures = HashMap::new();
    failures.insert("/api/images/?limit=2".to_string(), vec![403]);
    let server = serve(fixture_pages(), failures);
    let src = PageSource::Live {
        endpoint: format!("{}/api/images/", server.base),
        retry: quick_retry(),
        record_to: None,
    };
    let err = fetch_metadata_pages(&src, 2).unwrap_err();
    assert!(matches!(err, CurationError::Status { status: 403, .. }));
    assert_eq!(server.hits.lock().unwrap().len(), 1);
}

#[test]
fn retries_are_capped() {
    let mut failures = HashMap::new();
    failures.insert("/api/images/?limit=2".to_string(), vec![500; 10]);
    let server = serve(fixture_pages(), failures);
    let src = PageSource::Live {
        endpoint: format!("{}/api/images/", server.base),
        retry: quick_retry(),
        record_to: None,
    };
    let err = fetch_metadata_pages(&src, 2).unwrap_err();
    assert!(matches!(err, CurationError::RetriesExhausted { attempts: 5, .. }));
}

#[test]
fn backoff_doubles_then_caps() {
    let p = RetryPolicy {
        initial_backoff: Duration::from_millis(100),
        max_backoff: Duration::from_millis(500),
        ..RetryPolicy::default()
    };
    let d: Vec<_> = (0..5).map(|n| p.backoff(n).as_millis()).collect();
    assert_eq!(d, [100, 200, 400, 500, 500]);
}

#[test]
fn malformed_page_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("page_0000.json"), b"{\"results\": 3}").unwrap();
    let err = fetch_metadata_pages(&PageSource::Offline { dir: dir.path().to_path_buf() }, 2).unwrap_err();
    assert!(matches!(err, CurationError::MalformedPage { .. }));
}
