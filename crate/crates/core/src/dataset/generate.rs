// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{bounded_map, ChatRequest, Gateway, GatewayError};
use crate::mutation::MutationRecord;

use super::{render_prompt, validate_thought, DatasetError, ThoughtRecord};

/// Shipped prompt for reasoning-thought generation.
pub const DEFAULT_THOUGHT_TEMPLATE: &str = include_str!("../../templates/thought_prompt.txt");

const PLACEHOLDERS: [&str; 3] = ["{description}", "{code}", "{buggy_line}"];

/// Text with `{description}`, `{code}` and `{buggy_line}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_THOUGHT_TEMPLATE)
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        for p in PLACEHOLDERS {
            if !text.contains(p) {
                log::warn!("prompt template has no {p} placeholder");
            }
        }
        Self { text }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitute in one pass, so placeholder-like text inside the inserted
    /// values is left alone.
    pub fn render(&self, description: &str, code: &str, buggy_line: &str) -> String {
        let values = [description, code, buggy_line];
        let mut out = String::with_capacity(self.text.len() + code.len() + description.len());
        let mut rest = self.text.as_str();
        'scan: while let Some(pos) = rest.find('{') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            for (p, v) in PLACEHOLDERS.iter().zip(values) {
                if let Some(after) = tail.strip_prefix(p) {
                    out.push_str(v);
                    rest = after;
                    continue 'scan;
                }
            }
            out.push('{');
            rest = &tail[1..];
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateOptions {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Requests in flight at once.
    pub in_flight: usize,
    /// Completions per record (used when sampling answers for negatives).
    pub n: usize,
    pub number_lines: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            temperature: 0.3,
            max_tokens: 1024,
            in_flight: 4,
            n: 20,
            number_lines: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThoughtOutcome {
    pub record: MutationRecord,
    pub result: Result<ThoughtRecord, GatewayError>,
}

fn description<'a>(map: &'a HashMap<String, String>, id: &str) -> &'a str {
    map.get(id).map(String::as_str).unwrap_or("")
}

fn fail_if_all_failed<T>(results: &[Result<T, GatewayError>]) -> Result<(), DatasetError> {
    if results.is_empty() || results.iter().any(Result::is_ok) {
        return Ok(());
    }
    let first = results
        .iter()
        .find_map(|r| r.as_ref().err().cloned())
        .expect("non-empty and all failed");
    Err(DatasetError::AllFailed {
        count: results.len(),
        first,
    })
}

/// Ask the model for a reasoning thought per record and validate each one.
/// Failed requests are kept as per-item errors; the call fails only when
/// every request failed.
pub fn generate_thoughts(
    records: &[MutationRecord],
    descriptions: &HashMap<String, String>,
    gateway: &Gateway,
    template: &PromptTemplate,
    opts: &GenerateOptions,
) -> Result<Vec<ThoughtOutcome>, DatasetError> {
    let results = bounded_map(records, opts.in_flight, |_, r| {
        let prompt = template.render(
            description(descriptions, &r.module_id),
            &r.mutated_text,
            &r.mutated_line,
        );
        let req = ChatRequest::new(prompt)
            .with_temperature(opts.temperature)
            .with_max_tokens(opts.max_tokens);
        gateway
            .complete(&req)
            .map(|mut texts| validate_thought(&texts.swap_remove(0), &r.mutated_line))
    });
    fail_if_all_failed(&results)?;
    Ok(records
        .iter()
        .cloned()
        .zip(results)
        .map(|(record, result)| ThoughtOutcome { record, result })
        .collect())
}

/// Sample `opts.n` localization answers per record with the SFT prompt.
pub fn sample_outputs(
    records: &[MutationRecord],
    descriptions: &HashMap<String, String>,
    gateway: &Gateway,
    opts: &GenerateOptions,
) -> Result<Vec<Result<Vec<String>, GatewayError>>, DatasetError> {
    let results = bounded_map(records, opts.in_flight, |_, r| {
        let prompt = render_prompt(
            description(descriptions, &r.module_id),
            &r.mutated_text,
            opts.number_lines,
        );
        let req = ChatRequest::new(prompt)
            .with_n(opts.n as u32)
            .with_temperature(opts.temperature)
            .with_max_tokens(opts.max_tokens);
        gateway.complete(&req)
    });
    fail_if_all_failed(&results)?;
    Ok(results)
}
