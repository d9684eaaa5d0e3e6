// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::dataset::render_prompt;
use crate::gateway::{bounded_map, ChatRequest, Gateway};

use super::score::{report_from_scores, score_case};
use super::{CaseScore, EvalError, EvalReport, ExcludedCase, ResponseSet, ScoringMode, TestCase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Samples per case.
    pub n: usize,
    pub temperature: f64,
    pub ks: Vec<usize>,
    pub max_tokens: u32,
    /// Cases with a request in flight at once.
    pub in_flight: usize,
    pub scoring: ScoringMode,
    /// Prefix each code line with its number in the prompt.
    pub number_lines: bool,
    pub system_prompt: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n: 20,
            temperature: 0.3,
            ks: vec![1, 5],
            max_tokens: 256,
            in_flight: 4,
            scoring: ScoringMode::EditDistance,
            number_lines: false,
            system_prompt: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n == 0 {
            return Err(EvalError::InvalidConfig("n must be at least 1".into()));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0 || k > self.n) {
            return Err(EvalError::InvalidConfig(format!(
                "k={k} outside 1..={}",
                self.n
            )));
        }
        if !(self.temperature >= 0.0) {
            return Err(EvalError::InvalidConfig(
                "temperature must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Responses collected in a run together with their report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: EvalReport,
    pub responses: Vec<ResponseSet>,
}

/// Query the model `n` times per case with the SFT-format prompt and score
/// the answers. Cases whose requests fail are listed in `report.excluded`.
pub fn run_eval(
    cases: &[TestCase],
    gateway: &Gateway,
    cfg: &EvalConfig,
) -> Result<EvalRun, EvalError> {
    cfg.validate()?;
    let results = bounded_map(cases, cfg.in_flight, |_, case| {
        let mut req = ChatRequest::new(render_prompt(
            &case.design_description,
            &case.buggy_code,
            cfg.number_lines,
        ))
        .with_n(cfg.n as u32)
        .with_temperature(cfg.temperature)
        .with_max_tokens(cfg.max_tokens);
        req.system = cfg.system_prompt.clone();
        gateway.complete(&req)
    });

    let mut responses = Vec::new();
    let mut scores = Vec::new();
    let mut excluded = Vec::new();
    for (case, result) in cases.iter().zip(results) {
        match result {
            Ok(outputs) if !outputs.is_empty() => {
                let set = ResponseSet {
                    case_id: case.case_id.clone(),
                    outputs,
                    temperature: cfg.temperature,
                };
                let c = score_case(case, &set, cfg.scoring)?;
                scores.push(CaseScore {
                    case_id: case.case_id.clone(),
                    pattern: case.pattern,
                    n: set.outputs.len(),
                    c,
                });
                responses.push(set);
            }
            Ok(_) => excluded.push(ExcludedCase {
                case_id: case.case_id.clone(),
                reason: "no outputs".into(),
            }),
            Err(e) => {
                log::warn!("case {}: {e}", case.case_id);
                excluded.push(ExcludedCase {
                    case_id: case.case_id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    let mut report = report_from_scores(scores, &cfg.ks)?;
    report.temperature = Some(cfg.temperature);
    report.excluded = excluded;
    Ok(EvalRun { report, responses })
}

/// One run per temperature, in the given order.
pub fn sweep(
    cases: &[TestCase],
    gateway: &Gateway,
    cfg: &EvalConfig,
    temperatures: &[f64],
) -> Result<Vec<EvalRun>, EvalError> {
    temperatures
        .iter()
        .map(|&t| {
            let point = EvalConfig {
                temperature: t,
                ..cfg.clone()
            };
            run_eval(cases, gateway, &point)
        })
        .collect()
}

/// File name of the sweep report for temperature `t`.
pub fn report_file_name(t: f64) -> String {
    format!("report_t{t}.json")
}
