// SPDX-License-Identifier: Apache-2.0

//! OpenAI-compatible `/chat/completions` transport.

use std::sync::OnceLock;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatRequest, EndpointConfig, Transport, TransportFailure};

const BODY_EXCERPT: usize = 400;

#[derive(Debug, Default)]
pub struct HttpTransport {
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self::default()
    }

    fn client(&self, timeout: Duration) -> Result<&reqwest::blocking::Client, TransportFailure> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(timeout)
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| TransportFailure::Connect(e.clone()))
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

fn request_body(endpoint: &EndpointConfig, req: &ChatRequest) -> serde_json::Value {
    let mut messages = Vec::new();
    if let Some(s) = &req.system {
        messages.push(json!({"role": "system", "content": s}));
    }
    messages.push(json!({"role": "user", "content": req.user}));
    json!({
        "model": endpoint.model,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "n": req.n,
    })
}

pub(super) fn parse_completion(body: &str) -> Result<Vec<String>, TransportFailure> {
    let c: Completion =
        serde_json::from_str(body).map_err(|e| TransportFailure::Malformed(e.to_string()))?;
    Ok(c.choices
        .into_iter()
        .map(|ch| ch.message.content.unwrap_or_default())
        .collect())
}

impl Transport for HttpTransport {
    fn send(
        &self,
        endpoint: &EndpointConfig,
        api_key: Option<&str>,
        req: &ChatRequest,
    ) -> Result<Vec<String>, TransportFailure> {
        let client = self.client(Duration::from_secs_f64(endpoint.timeout_secs))?;
        let url = format!(
            "{}/chat/completions",
            endpoint.base_url.trim_end_matches('/')
        );
        let mut builder = client.post(url).json(&request_body(endpoint, req));
        if let Some(key) = api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportFailure::Timeout
            } else {
                TransportFailure::Connect(e.to_string())
            }
        })?;
        let status = resp.status();
        let body = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportFailure::Timeout
            } else {
                TransportFailure::Connect(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(TransportFailure::Status {
                code: status.as_u16(),
                body: body.chars().take(BODY_EXCERPT).collect(),
            });
        }
        parse_completion(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, GatewayError};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serve canned HTTP responses, one per connection, and hand back the
    /// raw requests.
    fn serve(replies: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (code, body) in replies {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let mut payload = vec![0u8; len];
                reader.read_exact(&mut payload).unwrap();
                head.push_str(&String::from_utf8_lossy(&payload));
                seen.push(head);
                let resp = format!(
                    "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
            seen
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn completion(texts: &[&str]) -> String {
        let choices: Vec<_> = texts
            .iter()
            .map(|t| json!({"index": 0, "message": {"role": "assistant", "content": t}}))
            .collect();
        json!({"choices": choices}).to_string()
    }

    fn endpoint(base_url: String, key_env: &str) -> EndpointConfig {
        EndpointConfig {
            base_url,
            model: "test-model".into(),
            api_key_env: key_env.into(),
            timeout_secs: 10.0,
            max_retries: 2,
            backoff_base_secs: 0.0,
            ..EndpointConfig::default()
        }
    }

    #[test]
    fn posts_chat_request_and_retries_server_errors() {
        std::env::set_var("VBUGLOC_HTTP_TEST_KEY", "sk-test");
        let (url, server) = serve(vec![
            (503, "{}".into()),
            (200, completion(&["first"])),
            (200, completion(&["second"])),
        ]);
        let g = Gateway::new(endpoint(url, "VBUGLOC_HTTP_TEST_KEY"), HttpTransport::new());
        let out = g
            .complete(
                &ChatRequest::new("where is the bug")
                    .with_n(2)
                    .with_system("sys"),
            )
            .unwrap();
        assert_eq!(out, vec!["first", "second"]);
        let seen = server.join().unwrap();
        assert_eq!(seen.len(), 3);
        assert!(seen[0].starts_with("POST /v1/chat/completions"));
        assert!(seen[0]
            .to_ascii_lowercase()
            .contains("authorization: bearer sk-test"));
        assert!(seen[0].contains("\"model\":\"test-model\""));
        assert!(seen[0].contains("where is the bug"));
        assert!(seen[2].contains("\"n\":1"));
        for raw in &seen {
            let body = raw.split("\r\n\r\n").nth(1).unwrap();
            assert!(!body.contains("sk-test"));
        }
    }

    #[test]
    fn malformed_body_is_reported() {
        std::env::set_var("VBUGLOC_HTTP_TEST_KEY2", "sk-test");
        let (url, server) = serve(vec![(200, "not json".into())]);
        let g = Gateway::new(
            endpoint(url, "VBUGLOC_HTTP_TEST_KEY2"),
            HttpTransport::new(),
        );
        assert!(matches!(
            g.complete(&ChatRequest::new("q")),
            Err(GatewayError::MalformedResponse(_))
        ));
        server.join().unwrap();
    }

    #[test]
    fn missing_key_never_connects() {
        let g = Gateway::new(
            endpoint("http://127.0.0.1:9".into(), "VBUGLOC_HTTP_KEY_UNSET"),
            HttpTransport::new(),
        );
        assert!(matches!(
            g.complete(&ChatRequest::new("q")),
            Err(GatewayError::Auth(_))
        ));
        assert_eq!(g.attempts(), 0);
    }

    #[test]
    fn parse_null_content() {
        let body = r#"{"choices":[{"message":{"content":null}},{"message":{"content":"x"}}]}"#;
        assert_eq!(parse_completion(body).unwrap(), vec!["", "x"]);
    }
}
