use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::backend::{ClassifierBackend, ScoringBackend};
use super::wire::*;
use super::ProbeError;
use crate::corpus::{DetectError, PersonDetector};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub timeout: Duration,
    /// Attempts per request, including the first.
    pub attempts: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            timeout: Duration::from_secs(120),
            attempts: 3,
            backoff: Duration::from_millis(200),
        }
    }
}

/// HTTP client for the model-probe service.
///
/// Connection failures and 5xx responses are retried; 4xx responses are
/// protocol errors and are not.
#[derive(Debug, Clone)]
pub struct ServiceClient {
    base: String,
    http: Client,
    config: ClientConfig,
}

impl ServiceClient {
    pub fn new(base_url: &str, config: ClientConfig) -> Result<Self, ProbeError> {
        let http = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProbeError::Transport(e.to_string()))?;
        if config.attempts == 0 {
            return Err(ProbeError::InvalidConfig("attempts must be at least 1".into()));
        }
        Ok(ServiceClient {
            base: base_url.trim_end_matches('/').to_string(),
            http,
            config,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: Option<&Req>) -> Result<Resp, ProbeError> {
        let url = format!("{}{}", self.base, path);
        let mut last = String::new();
        for attempt in 0..self.config.attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * 2u32.saturating_pow(attempt - 1));
            }
            let req = match body {
                Some(b) => self.http.post(&url).json(b),
                None => self.http.get(&url),
            };
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() {
                last = format!("{url}: HTTP {status}: {}", resp.text().unwrap_or_default());
                continue;
            }
            let text = resp.text().map_err(|e| ProbeError::Transport(e.to_string()))?;
            if !status.is_success() {
                return Err(ProbeError::Protocol {
                    status: status.as_u16(),
                    body: text,
                });
            }
            return serde_json::from_str(&text).map_err(|e| ProbeError::InvalidResponse(format!("{url}: {e}")));
        }
        Err(ProbeError::Transport(format!(
            "{url}: gave up after {} attempts: {last}",
            self.config.attempts
        )))
    }

    pub fn health(&self) -> Result<HealthResponse, ProbeError> {
        self.call::<(), _>("/health", None)
    }

    pub fn model_info(&self) -> Result<ModelInfo, ProbeError> {
        self.call::<(), _>("/model_info", None)
    }

    pub fn ner(&self, text: &str) -> Result<NerResponse, ProbeError> {
        let r: NerResponse = self.call("/ner", Some(&NerRequest { text: text.to_string() }))?;
        let len = text.chars().count();
        let mut prev_end = 0;
        let mut spans = r.spans.clone();
        spans.sort_by_key(|s| s.start);
        for s in &spans {
            if s.start > s.end || s.end > len || s.start < prev_end {
                return Err(ProbeError::InvalidResponse(format!("bad person span {s:?} for text of length {len}")));
            }
            prev_end = s.end;
        }
        Ok(r)
    }
}

impl ScoringBackend for ServiceClient {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ProbeError> {
        self.call("/score_mask", Some(request))
    }

    fn identity(&self) -> String {
        match self.model_info() {
            Ok(info) => format!(
                "service:{}:{}:{}",
                self.base,
                info.model_name,
                info.model_digest.or(info.vocab_hash).unwrap_or_default()
            ),
            Err(_) => format!("service:{}", self.base),
        }
    }
}

impl ClassifierBackend for ServiceClient {
    fn train(&self, request: &TrainRequest) -> Result<TrainResponse, ProbeError> {
        self.call("/classify/train", Some(request))
    }

    fn eval(&self, request: &EvalRequest) -> Result<EvalResponse, ProbeError> {
        self.call("/classify/eval", Some(request))
    }

    fn identity(&self) -> String {
        ScoringBackend::identity(self)
    }
}

impl PersonDetector for ServiceClient {
    fn count_persons(&self, sentence: &str) -> Result<usize, DetectError> {
        match self.ner(sentence) {
            Ok(r) => Ok(r.spans.len()),
            Err(ProbeError::Transport(m)) => Err(DetectError::Unreachable(m)),
            Err(e) => Err(DetectError::Failed(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves canned (status, body) replies in order, one per connection.
    fn serve(replies: Vec<(u16, &'static str)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}"), hits)
    }

    fn quick() -> ClientConfig {
        ClientConfig {
            timeout: Duration::from_secs(5),
            attempts: 3,
            backoff: Duration::from_millis(1),
        }
    }

    fn req() -> ScoreRequest {
        ScoreRequest {
            text: "[MASK] left.".into(),
            candidates: vec!["he".into()],
            top_k: None,
        }
    }

    #[test]
    fn retries_server_errors() {
        let (url, hits) = serve(vec![(503, "{}"), (200, r#"{"candidate_probs": {"he": 0.75}}"#)]);
        let c = ServiceClient::new(&url, quick()).unwrap();
        let r = c.score(&req()).unwrap();
        assert_eq!(r.candidate_probs["he"], 0.75);
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, hits) = serve(vec![(422, r#"{"detail": "two masks"}"#), (200, "{}")]);
        let c = ServiceClient::new(&url, quick()).unwrap();
        match c.score(&req()) {
            Err(ProbeError::Protocol { status, body }) => {
                assert_eq!(status, 422);
                assert!(body.contains("two masks"));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn gives_up_after_bounded_attempts() {
        let (url, hits) = serve(vec![(500, "{}"), (500, "{}"), (500, "{}")]);
        let c = ServiceClient::new(&url, quick()).unwrap();
        assert!(matches!(c.score(&req()), Err(ProbeError::Transport(_))));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn unreachable_service() {
        let c = ServiceClient::new("http://127.0.0.1:9", quick()).unwrap();
        assert!(matches!(c.health(), Err(ProbeError::Transport(_))));
        assert!(matches!(c.count_persons("Alice met Bob."), Err(DetectError::Unreachable(_))));
    }

    #[test]
    fn ner_counts_spans_and_checks_bounds() {
        let (url, _) = serve(vec![
            (200, r#"{"spans": [{"start": 0, "end": 11}, {"start": 16, "end": 19}]}"#),
            (200, r#"{"spans": [{"start": 0, "end": 99}]}"#),
        ]);
        let c = ServiceClient::new(&url, quick()).unwrap();
        assert_eq!(c.count_persons("Alice Smith met Bob.").unwrap(), 2);
        assert!(matches!(c.count_persons("Bob."), Err(DetectError::Failed(_))));
    }

    #[test]
    fn health_and_model_info() {
        let (url, _) = serve(vec![
            (200, r#"{"status": "ok", "model": "m"}"#),
            (200, r#"{"model_name": "bert-base-uncased", "vocab_hash": "abc"}"#),
        ]);
        let c = ServiceClient::new(&format!("{url}/"), quick()).unwrap();
        assert_eq!(c.health().unwrap().status, "ok");
        assert_eq!(c.model_info().unwrap().vocab_hash.as_deref(), Some("abc"));
    }

    #[test]
    fn malformed_body() {
        let (url, _) = serve(vec![(200, "not json")]);
        let c = ServiceClient::new(&url, quick()).unwrap();
        assert!(matches!(c.score(&req()), Err(ProbeError::InvalidResponse(_))));
    }
}
