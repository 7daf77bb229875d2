//! Paginated metadata retrieval (`{"next": url | null, "results": [...]}`
//! pages) with retries, optional recording, and offline replay.

use crate::error::{CurationError, Result};
use crate::record::{parse_record, RecordInput};
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `n` (0-based): doubling, capped.
    pub fn backoff(&self, n: u32) -> Duration {
        let factor = 2u32.saturating_pow(n.min(30));
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

#[derive(Clone, Debug)]
pub enum PageSource {
    Live {
        endpoint: String,
        retry: RetryPolicy,
        /// Raw page bodies are written here as `page_NNNN.json`.
        record_to: Option<PathBuf>,
    },
    /// Replays `page_NNNN.json` files in name order.
    Offline { dir: PathBuf },
}

#[derive(Debug, Default)]
pub struct FetchOutcome {
    pub records: Vec<RecordInput>,
    pub pages: usize,
    pub retries: u32,
}

fn is_transient(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

fn with_page_size(endpoint: &str, page_size: usize) -> String {
    let sep = if endpoint.contains('?') { '&' } else { '?' };
    format!("{endpoint}{sep}limit={page_size}")
}

fn get_with_retry(agent: &ureq::Agent, url: &str, policy: &RetryPolicy, retries: &mut u32) -> Result<Vec<u8>> {
    let mut attempt = 0u32;
    loop {
        let last = match agent.get(url).call() {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if (200..300).contains(&status) {
                    return resp.body_mut().read_to_vec().map_err(|e| CurationError::Transport {
                        url: url.to_string(),
                        msg: e.to_string(),
                    });
                }
                if !is_transient(status) {
                    return Err(CurationError::Status {
                        status,
                        url: url.to_string(),
                    });
                }
                format!("HTTP {status}")
            }
            Err(e) => e.to_string(),
        };
        if attempt >= policy.max_retries {
            return Err(CurationError::RetriesExhausted {
                url: url.to_string(),
                attempts: attempt + 1,
                last,
            });
        }
        log::warn!("{url}: {last}; retrying");
        std::thread::sleep(policy.backoff(attempt));
        attempt += 1;
        *retries += 1;
    }
}

struct Page {
    next: Option<String>,
    results: Vec<serde_json::Value>,
}

fn parse_page(body: &[u8], name: &str) -> Result<Page> {
    let bad = |msg: String| CurationError::MalformedPage {
        page: name.to_string(),
        msg,
    };
    let v: serde_json::Value = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
    let obj = v.as_object().ok_or_else(|| bad("not a JSON object".into()))?;
    let results = obj
        .get("results")
        .and_then(|r| r.as_array())
        .ok_or_else(|| bad("missing `results` array".into()))?
        .clone();
    let next = match obj.get("next") {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) if s.is_empty() => None,
        Some(serde_json::Value::String(s)) => Some(s.clone()),
        Some(other) => return Err(bad(format!("`next` is {other}"))),
    };
    Ok(Page { next, results })
}

fn page_file(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("page_{n:04}.json"))
}

fn push_results(out: &mut FetchOutcome, page: Page) {
    for (i, v) in page.results.into_iter().enumerate() {
        out.records.push(parse_record(v, format!("page {} item {i}", out.pages)));
    }
}

/// Collects every record, following pagination until `next` is empty.
pub fn fetch_metadata_pages(source: &PageSource, page_size: usize) -> Result<FetchOutcome> {
    let mut out = FetchOutcome::default();
    match source {
        PageSource::Live {
            endpoint,
            retry,
            record_to,
        } => {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(retry.timeout))
                .build()
                .into();
            if let Some(dir) = record_to {
                std::fs::create_dir_all(dir)?;
            }
            let mut url = Some(with_page_size(endpoint, page_size));
            while let Some(u) = url {
                let body = get_with_retry(&agent, &u, retry, &mut out.retries)?;
                if let Some(dir) = record_to {
                    std::fs::write(page_file(dir, out.pages), &body)?;
                }
                let page = parse_page(&body, &u)?;
                url = page.next.clone();
                push_results(&mut out, page);
                out.pages += 1;
            }
        }
        PageSource::Offline { dir } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("page_") && n.ends_with(".json"))
                })
                .collect();
            files.sort();
            for f in files {
                let body = std::fs::read(&f)?;
                let page = parse_page(&body, &f.display().to_string())?;
                push_results(&mut out, page);
                out.pages += 1;
            }
        }
    }
    Ok(out)
}
