//! Plumbing shared by the grounding and generation backends: the error type,
//! retry policy and the JSON-over-HTTP transport.

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend protocol error: {0}")]
    Protocol(String),
}

impl BackendError {
    /// Transport failures and server-side errors may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Unreachable(_) => true,
            BackendError::Status { status, .. } => *status >= 500 || *status == 429,
            BackendError::Protocol(_) => false,
        }
    }
}

/// Runs `call` until it succeeds, fails with a non-retryable error, or
/// `max_retries` extra attempts have been spent.
pub fn with_retries<T>(
    max_retries: u32,
    mut call: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut attempt = 0;
    loop {
        match call() {
            Err(e) if e.is_retryable() && attempt < max_retries => {
                attempt += 1;
                log::warn!("backend call failed ({e}), retry {attempt}/{max_retries}");
            }
            other => return other,
        }
    }
}

/// A remote model endpoint speaking JSON requests and plain-text responses.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn post_json<B: Serialize>(&self, body: &B) -> Result<String, BackendError> {
        let payload =
            serde_json::to_vec(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let mut req = client
            .post(&self.url)
            .header("content-type", "application/json")
            .body(payload);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    #[test]
    fn retries_only_retryable_errors() {
        let mut calls = 0;
        let r: Result<(), _> = with_retries(3, || {
            calls += 1;
            Err(BackendError::Protocol("bad".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls, 1);

        let mut calls = 0;
        let r = with_retries(3, || {
            calls += 1;
            if calls < 3 {
                Err(BackendError::Unreachable("down".into()))
            } else {
                Ok(calls)
            }
        });
        assert_eq!(r, Ok(3));
    }

    fn serve_once(status_line: &'static str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 65536];
            let mut req = Vec::new();
            loop {
                let n = sock.read(&mut buf).unwrap();
                req.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&req);
                if let Some(head_end) = text.find("\r\n\r\n") {
                    let len = text[..head_end]
                        .lines()
                        .find_map(|l| {
                            let l = l.to_ascii_lowercase();
                            l.strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if req.len() >= head_end + 4 + len {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let resp = format!(
                "{status_line}\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            sock.write_all(resp.as_bytes()).unwrap();
            String::from_utf8_lossy(&req).into_owned()
        });
        (format!("http://{addr}/v1/ground"), handle)
    }

    #[test]
    fn posts_json_and_returns_body() {
        let (url, handle) = serve_once("HTTP/1.1 200 OK", "[]");
        let ep = HttpEndpoint::new(url).with_api_key(Some("secret".into()));
        let out = ep.post_json(&serde_json::json!({"query": "q"})).unwrap();
        assert_eq!(out, "[]");
        let req = handle.join().unwrap();
        assert!(req.contains("\"query\":\"q\""));
        assert!(req.to_ascii_lowercase().contains("authorization: bearer secret"));
    }

    #[test]
    fn non_success_status_is_reported() {
        let (url, handle) = serve_once("HTTP/1.1 503 Service Unavailable", "busy");
        let err = HttpEndpoint::new(url).post_json(&1).unwrap_err();
        handle.join().unwrap();
        assert_eq!(
            err,
            BackendError::Status {
                status: 503,
                body: "busy".into()
            }
        );
        assert!(err.is_retryable());
    }

    #[test]
    fn refused_connection_is_unreachable() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = HttpEndpoint::new(format!("http://{addr}/"))
            .post_json(&1)
            .unwrap_err();
        assert!(matches!(err, BackendError::Unreachable(_)));
    }
}
