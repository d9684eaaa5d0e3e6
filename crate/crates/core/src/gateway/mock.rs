// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::jsonl::{read_jsonl, JsonlError};

use super::{ChatRequest, EndpointConfig, Transport, TransportFailure};

/// Replays a fixed sequence of outcomes, one per call. Runs out as a 500.
#[derive(Debug)]
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<Vec<String>, TransportFailure>>>,
    calls: Arc<AtomicUsize>,
    needs_key: bool,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<Vec<String>, TransportFailure>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            calls: Arc::new(AtomicUsize::new(0)),
            needs_key: false,
        }
    }

    /// Behave like a real endpoint with respect to API-key lookup.
    pub fn requiring_key(mut self) -> Self {
        self.needs_key = true;
        self
    }

    pub fn call_counter(&self) -> Arc<AtomicUsize> {
        self.calls.clone()
    }
}

impl Transport for ScriptedTransport {
    fn send(
        &self,
        _: &EndpointConfig,
        _: Option<&str>,
        _: &ChatRequest,
    ) -> Result<Vec<String>, TransportFailure> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.script
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or(Err(TransportFailure::Status {
                code: 500,
                body: "script exhausted".into(),
            }))
    }

    fn needs_api_key(&self) -> bool {
        self.needs_key
    }
}

/// A scripted failure in a transcript: `"timeout"`, `"connect"`, or an HTTP
/// status code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedFailure {
    Status(u16),
    Named(String),
}

impl ScriptedFailure {
    fn to_failure(&self) -> TransportFailure {
        match self {
            ScriptedFailure::Status(code) => TransportFailure::Status {
                code: *code,
                body: "scripted".into(),
            },
            ScriptedFailure::Named(n) if n == "timeout" => TransportFailure::Timeout,
            ScriptedFailure::Named(n) => TransportFailure::Connect(n.clone()),
        }
    }
}

/// One line of a mock transcript file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Substring of the user prompt; the empty string matches everything.
    #[serde(rename = "match")]
    pub pattern: String,
    pub responses: Vec<String>,
    /// Failures returned, in order, by the first calls that hit this entry.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ScriptedFailure>,
}

/// Answers from a transcript. The first entry whose `match` occurs in the
/// user prompt answers; `n` completions are its `responses` cycled from the
/// start, so every call with the same prompt gets the same answers.
#[derive(Debug)]
pub struct TranscriptTransport {
    entries: Vec<TranscriptEntry>,
    pending_failures: Vec<Mutex<VecDeque<ScriptedFailure>>>,
}

impl TranscriptTransport {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        let pending_failures = entries
            .iter()
            .map(|e| Mutex::new(e.failures.iter().cloned().collect()))
            .collect();
        Self {
            entries,
            pending_failures,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, JsonlError> {
        Ok(Self::new(read_jsonl(path)?))
    }
}

impl Transport for TranscriptTransport {
    fn send(
        &self,
        _: &EndpointConfig,
        _: Option<&str>,
        req: &ChatRequest,
    ) -> Result<Vec<String>, TransportFailure> {
        let Some(idx) = self
            .entries
            .iter()
            .position(|e| req.user.contains(&e.pattern))
        else {
            return Err(TransportFailure::Status {
                code: 404,
                body: "no transcript entry matches the prompt".into(),
            });
        };
        if let Some(f) = self.pending_failures[idx].lock().expect("lock").pop_front() {
            return Err(f.to_failure());
        }
        let responses = &self.entries[idx].responses;
        if responses.is_empty() {
            return Err(TransportFailure::Malformed(
                "transcript entry has no responses".into(),
            ));
        }
        Ok(responses
            .iter()
            .cycle()
            .take(req.n as usize)
            .cloned()
            .collect())
    }

    fn needs_api_key(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, GatewayError};

    fn entry(pattern: &str, responses: &[&str]) -> TranscriptEntry {
        TranscriptEntry {
            pattern: pattern.into(),
            responses: responses.iter().map(|s| s.to_string()).collect(),
            failures: vec![],
        }
    }

    #[test]
    fn first_matching_entry_answers() {
        let t =
            TranscriptTransport::new(vec![entry("adder", &["x", "y"]), entry("", &["fallback"])]);
        let g = Gateway::new(EndpointConfig::default(), t);
        let req = ChatRequest::new("find the bug in adder").with_n(3);
        assert_eq!(g.complete(&req).unwrap(), vec!["x", "y", "x"]);
        assert_eq!(
            g.complete(&ChatRequest::new("other")).unwrap(),
            vec!["fallback"]
        );
    }

    #[test]
    fn unmatched_prompt_is_a_client_error() {
        let t = TranscriptTransport::new(vec![entry("adder", &["x"])]);
        let g = Gateway::new(EndpointConfig::default(), t);
        assert!(matches!(
            g.complete(&ChatRequest::new("nothing")),
            Err(GatewayError::Transport { attempts: 1, .. })
        ));
    }

    #[test]
    fn transcript_failures_are_replayed() {
        let line = r#"{"match":"q","responses":["ok"],"failures":["timeout",502]}"#;
        let e: TranscriptEntry = serde_json::from_str(line).unwrap();
        let cfg = EndpointConfig {
            backoff_base_secs: 0.0,
            ..EndpointConfig::default()
        };
        let g = Gateway::new(cfg, TranscriptTransport::new(vec![e]));
        assert_eq!(g.complete(&ChatRequest::new("q")).unwrap(), vec!["ok"]);
        assert_eq!(g.attempts(), 3);
    }

    #[test]
    fn example_transcript_parses() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs/transcript.example.jsonl");
        let t = TranscriptTransport::from_file(&path).unwrap();
        assert_eq!(t.entries.len(), 2);
        assert_eq!(
            t.entries[1].failures,
            vec![
                ScriptedFailure::Named("timeout".into()),
                ScriptedFailure::Status(503)
            ]
        );
    }
}
