// SPDX-License-Identifier: Apache-2.0

//! Training-data builders: pretraining thought samples, SFT pairs and
//! preference triples.

mod generate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::locate_line;
use crate::gateway::GatewayError;
use crate::mutation::MutationRecord;
use crate::rng::SeededRng;
use crate::text::normalize_ws;
use crate::verilog::split_lines;

pub use generate::{
    generate_thoughts, sample_outputs, GenerateOptions, PromptTemplate, ThoughtOutcome,
    DEFAULT_THOUGHT_TEMPLATE,
};

/// Task instruction placed at the top of every prompt.
pub const INSTRUCTION: &str = "Find the buggy line in the Verilog code";

/// Final-answer marker expected at the end of a reasoning thought.
pub const ANSWER_MARKER: &str = "Buggy line:";

/// Thoughts that mention the marker this early are treated as having
/// announced the answer up front.
const OPENING_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("thought does not identify the buggy line")]
    InvalidThought,
    #[error("code has no line other than the buggy one")]
    NoEligibleLine,
    #[error("all {count} requests failed; first error: {first}")]
    AllFailed { count: usize, first: GatewayError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PtSample {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftSample {
    pub prompt: String,
    pub label: String,
}

/// On-disk form of an SFT pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimpoSample {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtRecord {
    pub thought_text: String,
    pub extracted_line: Option<String>,
    pub valid: bool,
}

fn join_blocks(blocks: &[&str]) -> String {
    blocks
        .iter()
        .map(|b| b.trim_end_matches(['\n', '\r']))
        .filter(|b| !b.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_code(code: &str, number_lines: bool) -> String {
    if !number_lines {
        return code.to_string();
    }
    split_lines(code)
        .into_iter()
        .map(|l| format!("{}: {}", l.index, l.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn prompt_input(description: &str, code: &str, number_lines: bool) -> String {
    join_blocks(&[description, &render_code(code, number_lines)])
}

/// Instruction, description and code separated by blank lines.
pub fn render_prompt(description: &str, code: &str, number_lines: bool) -> String {
    join_blocks(&[INSTRUCTION, &prompt_input(description, code, number_lines)])
}

fn find_marker(haystack: &str) -> Option<usize> {
    let lower = haystack.to_ascii_lowercase();
    lower.rfind(&ANSWER_MARKER.to_ascii_lowercase())
}

/// Check that a generated thought ends by naming `buggy_line`.
///
/// The answer is the first non-empty line after the last `Buggy line:`
/// marker (case-insensitive), with code fences and backticks removed.
pub fn validate_thought(thought_text: &str, buggy_line: &str) -> ThoughtRecord {
    let extracted = find_marker(thought_text).and_then(|pos| {
        let rest = &thought_text[pos + ANSWER_MARKER.len()..];
        rest.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with("```"))
            .map(|l| l.trim_matches('`').trim().to_string())
            .find(|l| !l.is_empty())
    });
    let opening: String = thought_text.chars().take(OPENING_CHARS).collect();
    let announces_early = find_marker(&opening).is_some();
    let target = normalize_ws(buggy_line);
    let valid = !announces_early
        && !target.is_empty()
        && extracted
            .as_deref()
            .is_some_and(|e| normalize_ws(e) == target);
    ThoughtRecord {
        thought_text: thought_text.to_string(),
        extracted_line: extracted,
        valid,
    }
}

pub fn build_pt_sample(
    record: &MutationRecord,
    description: &str,
    thought: &ThoughtRecord,
) -> Result<PtSample, DatasetError> {
    if !thought.valid {
        return Err(DatasetError::InvalidThought);
    }
    Ok(PtSample {
        text: join_blocks(&[
            INSTRUCTION,
            description,
            &record.mutated_text,
            &thought.thought_text,
        ]),
    })
}

pub fn build_sft_sample(
    record: &MutationRecord,
    description: &str,
    number_lines: bool,
) -> SftSample {
    SftSample {
        prompt: render_prompt(description, &record.mutated_text, number_lines),
        label: record.mutated_line.trim_end().to_string(),
    }
}

impl SftSample {
    /// Split back into the instruction/input/output layout.
    pub fn to_record(&self) -> SftRecord {
        let input = self
            .prompt
            .strip_prefix(INSTRUCTION)
            .map(|s| s.trim_start_matches('\n'))
            .unwrap_or(&self.prompt);
        SftRecord {
            instruction: INSTRUCTION.to_string(),
            input: input.to_string(),
            output: self.label.clone(),
        }
    }
}

/// Pick the non-buggy line the model proposed most often.
///
/// Each output is mapped to its nearest code line. Lines equal to the buggy
/// line (by index or by normalized content) and blank lines never count.
/// Ties go to the smaller line number. If no output lands on an eligible
/// line, an eligible line is drawn uniformly with `seed`.
pub fn select_negative<S: AsRef<str>>(
    outputs: &[S],
    code_lines: &[String],
    buggy_line_no: usize,
    seed: u64,
) -> Result<String, DatasetError> {
    select_negative_line(outputs, code_lines, buggy_line_no, seed)
        .map(|i| code_lines[i - 1].trim_end().to_string())
}

/// Same as [`select_negative`], returning the 1-based line number.
pub fn select_negative_line<S: AsRef<str>>(
    outputs: &[S],
    code_lines: &[String],
    buggy_line_no: usize,
    seed: u64,
) -> Result<usize, DatasetError> {
    let buggy = code_lines
        .get(buggy_line_no.wrapping_sub(1))
        .map(|l| normalize_ws(l))
        .unwrap_or_default();
    let eligible: Vec<bool> = code_lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let n = normalize_ws(l);
            i + 1 != buggy_line_no && !n.is_empty() && n != buggy
        })
        .collect();
    let mut votes = vec![0usize; code_lines.len()];
    for o in outputs {
        if let Ok(i) = locate_line(o.as_ref(), code_lines) {
            if eligible[i - 1] {
                votes[i - 1] += 1;
            }
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for (i, &v) in votes.iter().enumerate() {
        if v > 0 && best.map_or(true, |(bv, _)| v > bv) {
            best = Some((v, i + 1));
        }
    }
    if let Some((_, line)) = best {
        return Ok(line);
    }
    let pool: Vec<usize> = (1..=code_lines.len())
        .filter(|&i| eligible[i - 1])
        .collect();
    SeededRng::new(seed)
        .choose(&pool)
        .copied()
        .ok_or(DatasetError::NoEligibleLine)
}

pub fn build_simpo_sample<S: AsRef<str>>(
    record: &MutationRecord,
    description: &str,
    outputs: &[S],
    seed: u64,
    number_lines: bool,
) -> Result<SimpoSample, DatasetError> {
    let lines: Vec<String> = split_lines(&record.mutated_text)
        .into_iter()
        .map(|l| l.text)
        .collect();
    let rejected = select_negative(outputs, &lines, record.line_no, seed)?;
    Ok(SimpoSample {
        prompt: render_prompt(description, &record.mutated_text, number_lines),
        chosen: record.mutated_line.trim_end().to_string(),
        rejected,
    })
}

/// True when `text` is within the optional character budget.
pub fn within_char_cap(text: &str, max_chars: Option<usize>) -> bool {
    max_chars.map_or(true, |cap| text.chars().count() <= cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation::BugPattern;

    const CODE: &str = "module alu(input [3:0] a, b, output reg [3:0] y);\n\
                        \n\
                        always @(*) begin\n\
                        \x20 y = a - b;\n\
                        end\n\
                        \n\
                        wire unused;\n\
                        endmodule\n";

    fn record() -> MutationRecord {
        MutationRecord {
            module_id: "alu".into(),
            pattern: BugPattern::OperatorMisuse,
            line_no: 4,
            original_line: "  y = a + b;".into(),
            mutated_line: "  y = a - b;".into(),
            mutated_text: CODE.into(),
            seed: 0,
        }
    }

    fn lines() -> Vec<String> {
        CODE.lines().map(String::from).collect()
    }

    fn thought(body: &str, answer: &str) -> String {
        format!(
            "{}\n{body}\nBuggy line: {answer}",
            "Reading the description first. ".repeat(8)
        )
    }

    #[test]
    fn prompt_layout() {
        let p = render_prompt("An adder.", CODE, false);
        assert!(p.starts_with("Find the buggy line in the Verilog code\n\nAn adder.\n\nmodule alu"));
        assert!(p.contains(CODE.trim_end()));
        let numbered = render_prompt("d", "module a;\nendmodule\n", true);
        assert!(numbered.ends_with("1: module a;\n2: endmodule"));
    }

    #[test]
    fn thought_validation() {
        let ok = validate_thought(
            &thought("The subtraction is wrong.", "y = a - b;"),
            "  y = a - b;",
        );
        assert!(ok.valid);
        assert_eq!(ok.extracted_line.as_deref(), Some("y = a - b;"));

        let none = validate_thought("no answer given here", "y = a - b;");
        assert!(!none.valid);
        assert_eq!(none.extracted_line, None);

        let wrong = validate_thought(&thought("hmm", "end"), "y = a - b;");
        assert!(!wrong.valid);

        let early = validate_thought(
            "Buggy line: y = a - b;\nbecause...\nBuggy line: y = a - b;",
            "y = a - b;",
        );
        assert!(!early.valid);

        let fenced = validate_thought(
            &format!(
                "{}\nBUGGY LINE:\n```verilog\n`y = a - b;`\n```",
                "x".repeat(300)
            ),
            "y = a - b;",
        );
        assert!(fenced.valid);
    }

    #[test]
    fn pt_sample_requires_valid_thought() {
        let t = validate_thought(&thought("sub", "y = a - b;"), "y = a - b;");
        let s = build_pt_sample(&record(), "An ALU.", &t).unwrap();
        assert!(s.text.starts_with(INSTRUCTION));
        assert!(s.text.contains(CODE.trim_end()));
        assert!(s.text.ends_with(&t.thought_text));
        assert_eq!(s, build_pt_sample(&record(), "An ALU.", &t).unwrap());
        let bad = validate_thought("nothing", "y = a - b;");
        assert_eq!(
            build_pt_sample(&record(), "d", &bad),
            Err(DatasetError::InvalidThought)
        );
    }

    #[test]
    fn sft_label_is_line_content() {
        let s = build_sft_sample(&record(), "An ALU.", false);
        assert_eq!(s.label, "  y = a - b;");
        assert!(s.label.parse::<i64>().is_err());
        assert!(s.prompt.lines().any(|l| l == s.label));
        let r = s.to_record();
        assert_eq!(r.instruction, INSTRUCTION);
        assert_eq!(format!("{}\n\n{}", r.instruction, r.input), s.prompt);
    }

    #[test]
    fn negative_is_most_frequent_non_buggy_line() {
        let l = lines();
        let outs = [l[3].as_str(), l[6].as_str(), l[6].as_str(), l[2].as_str()];
        assert_eq!(select_negative_line(&outs, &l, 4, 0), Ok(7));
        assert_eq!(select_negative(&outs, &l, 4, 0).unwrap(), "wire unused;");
        let tie = [l[6].as_str(), l[2].as_str()];
        assert_eq!(select_negative_line(&tie, &l, 4, 0), Ok(3));
    }

    #[test]
    fn negative_fallback_is_seeded() {
        let l = lines();
        let outs = ["y = a - b;"; 5];
        let a = select_negative_line(&outs, &l, 4, 11).unwrap();
        assert_eq!(a, select_negative_line(&outs, &l, 4, 11).unwrap());
        assert_ne!(a, 4);
        assert!(!l[a - 1].trim().is_empty());
        let only = vec!["".to_string(), "  x;".to_string(), " ".to_string()];
        assert_eq!(
            select_negative_line(&outs, &only, 2, 0),
            Err(DatasetError::NoEligibleLine)
        );
    }

    #[test]
    fn simpo_sample() {
        let l = lines();
        let outs = [l[6].as_str(), l[3].as_str()];
        let s = build_simpo_sample(&record(), "An ALU.", &outs, 5, false).unwrap();
        assert_eq!(s.chosen, "  y = a - b;");
        assert_eq!(s.rejected, "wire unused;");
        assert_eq!(
            s.prompt,
            build_sft_sample(&record(), "An ALU.", false).prompt
        );
        let all_right = ["  y = a - b;"; 3];
        let f = build_simpo_sample(&record(), "An ALU.", &all_right, 5, false).unwrap();
        assert_ne!(f.rejected, f.chosen);
        assert_eq!(
            f,
            build_simpo_sample(&record(), "An ALU.", &all_right, 5, false).unwrap()
        );
    }

    #[test]
    fn char_cap() {
        assert!(within_char_cap("abc", None));
        assert!(within_char_cap("abc", Some(3)));
        assert!(!within_char_cap("abcd", Some(3)));
    }
}
