// SPDX-License-Identifier: Apache-2.0

//! Single functional-bug injection into Verilog modules.
//!
//! A mutant differs from its source on exactly one line, where one token has
//! been replaced according to one of five bug patterns. Site discovery works on
//! the token stream, so comments and string literals are never touched.

mod inject;
mod legality;
mod sites;
mod testset;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inject::{apply_site, inject, mutate_corpus, CorpusMutation, PatternChoice};
pub use legality::{legality_check, legality_verdict, LegalityConfig, Rejection, Verdict};
pub use sites::{declared_identifiers, enumerate_sites};
pub use testset::{build_testset, parse_counts, PatternCounts};

/// The five bug classes, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugPattern {
    #[serde(rename = "operator")]
    OperatorMisuse,
    #[serde(rename = "numeric")]
    NumericValue,
    #[serde(rename = "keyword")]
    KeywordMisuse,
    #[serde(rename = "variable")]
    VariableConfusion,
    #[serde(rename = "edge")]
    EdgeError,
}

impl BugPattern {
    pub const ALL: [BugPattern; 5] = [
        BugPattern::OperatorMisuse,
        BugPattern::NumericValue,
        BugPattern::KeywordMisuse,
        BugPattern::VariableConfusion,
        BugPattern::EdgeError,
    ];

    /// Short name used on the command line and in JSONL.
    pub fn as_str(self) -> &'static str {
        match self {
            BugPattern::OperatorMisuse => "operator",
            BugPattern::NumericValue => "numeric",
            BugPattern::KeywordMisuse => "keyword",
            BugPattern::VariableConfusion => "variable",
            BugPattern::EdgeError => "edge",
        }
    }

    fn ordinal(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for BugPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown bug pattern `{0}` (expected operator, numeric, keyword, variable or edge)")]
pub struct UnknownPattern(pub String);

impl FromStr for BugPattern {
    type Err = UnknownPattern;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "operator" | "operators" | "operator_misuse" => Ok(BugPattern::OperatorMisuse),
            "numeric" | "numerical" | "numeric_value" => Ok(BugPattern::NumericValue),
            "keyword" | "keyword_misuse" => Ok(BugPattern::KeywordMisuse),
            "variable" | "variable_confusion" => Ok(BugPattern::VariableConfusion),
            "edge" | "edge_error" => Ok(BugPattern::EdgeError),
            _ => Err(UnknownPattern(s.to_string())),
        }
    }
}

/// A replaceable span on one line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationSite {
    /// 1-based line number.
    pub line: usize,
    /// `[start, end)` byte offsets within the line.
    pub col_span: (usize, usize),
    pub pattern: BugPattern,
    pub original: String,
    pub replacement_candidates: Vec<String>,
}

/// One injected bug.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub module_id: String,
    pub pattern: BugPattern,
    pub line_no: usize,
    pub original_line: String,
    pub mutated_line: String,
    #[serde(rename = "buggy_code")]
    pub mutated_text: String,
    pub seed: u64,
}

/// How numeric literals are perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericMode {
    /// Width or value moves by one.
    #[default]
    Step,
    /// Value replaced by one of several pseudo-random values that fit the width.
    Randomize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationConfig {
    /// Let `&`/`|` and `&&`/`||` swap across the bitwise/logical boundary.
    pub allow_cross_class_ops: bool,
    pub numeric_mode: NumericMode,
}

#[derive(Debug, Error)]
pub enum MutationError {
    #[error("no {0} mutation site in module")]
    NoSites(BugPattern),
    #[error("{pattern}: requested {requested} cases but only {available} legal sites exist")]
    InsufficientSites {
        pattern: BugPattern,
        requested: usize,
        available: usize,
    },
    #[error("external tool failed to run (exit code {exit_code:?}): {stderr_excerpt}")]
    ExternalToolFailure {
        exit_code: Option<i32>,
        stderr_excerpt: String,
    },
    #[error("testset corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
