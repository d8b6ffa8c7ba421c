//! A scoring service double speaking the real wire protocol, answering
//! with stub scores.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use llmsite::score::{stub_score, truncate_for_scoring, ScoreRequest, ScoreResponse};

use crate::server::{Reply, TestServer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    /// The first `n` score calls answer 500.
    FailFirst(usize),
    /// Every score call answers this status.
    Always(u16),
    /// Responses drop their last score.
    ShortResponse,
}

/// Score for `text` as this mock reports it.
pub fn mock_score(text: &str) -> f64 {
    stub_score(truncate_for_scoring(text))
}

pub fn start_mock_scorer(fault: Fault) -> (TestServer, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let server = TestServer::start(move |req| match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/healthz") => Reply::json(200, r#"{"status":"ok"}"#),
        ("POST", "/score") => {
            let n = counter.fetch_add(1, Ordering::SeqCst);
            match fault {
                Fault::FailFirst(k) if n < k => return Reply::json(500, r#"{"error":"busy"}"#),
                Fault::Always(status) => return Reply::json(status, r#"{"error":"scripted"}"#),
                _ => {}
            }
            let Ok(body) = serde_json::from_slice::<ScoreRequest>(&req.body) else {
                return Reply::json(400, r#"{"error":"bad request"}"#);
            };
            let mut resp = ScoreResponse {
                scores: body.texts.iter().map(|t| mock_score(t)).collect(),
                token_counts: body
                    .texts
                    .iter()
                    .map(|t| t.split_whitespace().count().max(1) as u32)
                    .collect(),
                scorer_id: "mock@v1".into(),
            };
            if fault == Fault::ShortResponse {
                resp.scores.pop();
            }
            Reply::json(200, serde_json::to_string(&resp).unwrap())
        }
        _ => Reply::not_found(),
    });
    (server, calls)
}
