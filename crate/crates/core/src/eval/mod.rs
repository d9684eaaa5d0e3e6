// SPDX-License-Identifier: Apache-2.0

//! Scoring of bug-localization outputs: line matching, pass@k, hit rate and
//! model-in-the-loop evaluation runs.

mod run;
mod score;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mutation::BugPattern;
use crate::verilog::split_lines;

pub use run::{report_file_name, run_eval, sweep, EvalConfig, EvalRun};
pub use score::{aggregate, aggregate_with, hit_rate, locate_line, pass_at_k, score_case};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("every code line is blank")]
    AllLinesBlank,
    #[error("pass@k undefined for n={n}, c={c}, k={k}")]
    Domain { n: usize, c: usize, k: usize },
    #[error("responses for `{responses}` scored against case `{case}`")]
    CaseMismatch { case: String, responses: String },
    #[error("no responses for case `{0}`")]
    MissingResponses(String),
    #[error("response set for `{0}` has no outputs")]
    EmptyResponses(String),
    #[error("test case `{case_id}`: {message}")]
    InvalidCase { case_id: String, message: String },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    /// Seed module the case was derived from.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub module_id: String,
    pub design_description: String,
    pub buggy_code: String,
    pub buggy_line_no: usize,
    pub buggy_line: String,
    pub pattern: BugPattern,
}

impl TestCase {
    pub fn code_lines(&self) -> Vec<String> {
        split_lines(&self.buggy_code)
            .into_iter()
            .map(|l| l.text)
            .collect()
    }

    /// Check that `buggy_line_no` points at `buggy_line` inside `buggy_code`.
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |message: String| EvalError::InvalidCase {
            case_id: self.case_id.clone(),
            message,
        };
        let lines = self.code_lines();
        if self.buggy_line_no == 0 || self.buggy_line_no > lines.len() {
            return Err(bad(format!(
                "line {} outside 1..={}",
                self.buggy_line_no,
                lines.len()
            )));
        }
        if lines[self.buggy_line_no - 1] != self.buggy_line {
            return Err(bad(format!(
                "line {} differs from buggy_line",
                self.buggy_line_no
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub case_id: String,
    pub outputs: Vec<String>,
    pub temperature: f64,
}

/// How an output is judged correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringMode {
    /// The output's nearest code line must be the buggy line.
    #[default]
    EditDistance,
    /// The normalized buggy line must appear inside the normalized output.
    /// Suits verbose answers that quote code among prose.
    Substring,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case_id: String,
    pub pattern: BugPattern,
    pub n: usize,
    pub c: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCase {
    pub case_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by case id.
    pub per_case: Vec<CaseScore>,
    pub pass_at: BTreeMap<usize, f64>,
    pub per_pattern_pass1: BTreeMap<BugPattern, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<ExcludedCase>,
}

impl EvalReport {
    pub fn case_count(&self) -> usize {
        self.per_case.len()
    }

    /// Number of scored cases per pattern.
    pub fn pattern_counts(&self) -> BTreeMap<BugPattern, usize> {
        let mut out = BTreeMap::new();
        for c in &self.per_case {
            *out.entry(c.pattern).or_insert(0) += 1;
        }
        out
    }
}
