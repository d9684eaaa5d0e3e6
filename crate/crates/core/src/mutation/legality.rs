// SPDX-License-Identifier: Apache-2.0

//! Static legality screening of mutants, with an optional external-tool veto.

use std::fmt;
use std::io::Write;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::verilog::{split_lines, tokenize, SourceModule, Token, TokenKind};

use super::{declared_identifiers, BugPattern, MutationError, MutationRecord};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LegalityConfig {
    /// Shell command run on each mutant; `{}` is replaced by the path of a
    /// temporary `.v` file holding the mutant. Exit code 0 accepts.
    pub synth_command: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    Unchanged,
    LineDiff(String),
    Lex(String),
    TokenCountChanged {
        before: usize,
        after: usize,
    },
    BalanceChanged(&'static str),
    UndeclaredIdentifier(String),
    ToolRejected {
        exit_code: i32,
        stderr_excerpt: String,
    },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Unchanged => write!(f, "mutated line equals original"),
            Rejection::LineDiff(why) => write!(f, "not a one-line diff: {why}"),
            Rejection::Lex(e) => write!(f, "mutant does not tokenize: {e}"),
            Rejection::TokenCountChanged { before, after } => {
                write!(f, "token count changed from {before} to {after}")
            }
            Rejection::BalanceChanged(pair) => write!(f, "{pair} balance changed"),
            Rejection::UndeclaredIdentifier(id) => write!(f, "identifier `{id}` is not declared"),
            Rejection::ToolRejected {
                exit_code,
                stderr_excerpt,
            } => write!(f, "synth command exited {exit_code}: {stderr_excerpt}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Legal,
    Illegal(Rejection),
}

impl Verdict {
    pub fn is_legal(&self) -> bool {
        matches!(self, Verdict::Legal)
    }
}

fn count_kw(tokens: &[Token], kw: &str) -> usize {
    tokens.iter().filter(|t| t.is_keyword(kw)).count()
}

fn static_check(record: &MutationRecord, original: &SourceModule) -> Option<Rejection> {
    if record.original_line == record.mutated_line {
        return Some(Rejection::Unchanged);
    }
    let before = original.lines();
    let after = split_lines(&record.mutated_text);
    if before.len() != after.len() {
        return Some(Rejection::LineDiff(format!(
            "{} lines became {}",
            before.len(),
            after.len()
        )));
    }
    let changed: Vec<usize> = before
        .iter()
        .zip(&after)
        .filter(|(a, b)| a.text != b.text)
        .map(|(a, _)| a.index)
        .collect();
    if changed != [record.line_no] {
        return Some(Rejection::LineDiff(format!("changed lines {changed:?}")));
    }
    if original.line(record.line_no) != Some(record.original_line.as_str())
        || after[record.line_no - 1].text != record.mutated_line
    {
        return Some(Rejection::LineDiff(
            "record lines disagree with texts".into(),
        ));
    }

    let mutant = match tokenize(&record.mutated_text) {
        Ok(t) => t,
        Err(e) => return Some(Rejection::Lex(e.to_string())),
    };
    let orig = original.tokens();
    if mutant.len() != orig.len() {
        return Some(Rejection::TokenCountChanged {
            before: orig.len(),
            after: mutant.len(),
        });
    }
    for (open, close, label) in [
        ("begin", "end", "begin/end"),
        ("module", "endmodule", "module/endmodule"),
    ] {
        if count_kw(&mutant, open) != count_kw(orig, open)
            || count_kw(&mutant, close) != count_kw(orig, close)
        {
            return Some(Rejection::BalanceChanged(label));
        }
    }
    for (a, b) in orig.iter().zip(&mutant) {
        if a.kind != b.kind && (a.is_opaque() || b.is_opaque()) {
            return Some(Rejection::Lex("comment or string boundary moved".into()));
        }
    }

    if record.pattern == BugPattern::VariableConfusion {
        let declared = declared_identifiers(original);
        for (a, b) in orig.iter().zip(&mutant) {
            if a.lexeme != b.lexeme
                && b.kind == TokenKind::Identifier
                && !declared.contains(&b.lexeme)
            {
                return Some(Rejection::UndeclaredIdentifier(b.lexeme.clone()));
            }
        }
    }
    None
}

fn run_tool(command: &str, text: &str) -> Result<Option<Rejection>, MutationError> {
    let mut file = tempfile::Builder::new()
        .prefix("mutant_")
        .suffix(".v")
        .tempfile()?;
    file.write_all(text.as_bytes())?;
    file.flush()?;
    let path = file.path().to_string_lossy().into_owned();
    let cmdline = if command.contains("{}") {
        command.replace("{}", &path)
    } else {
        format!("{command} {path}")
    };
    let output = Command::new("sh")
        .arg("-c")
        .arg(&cmdline)
        .output()
        .map_err(|e| MutationError::ExternalToolFailure {
            exit_code: None,
            stderr_excerpt: e.to_string(),
        })?;
    let stderr: String = String::from_utf8_lossy(&output.stderr)
        .chars()
        .take(400)
        .collect();
    match output.status.code() {
        Some(0) => Ok(None),
        // 126/127: the shell could not find or execute the command at all.
        Some(code @ (126 | 127)) => Err(MutationError::ExternalToolFailure {
            exit_code: Some(code),
            stderr_excerpt: stderr,
        }),
        Some(code) => Ok(Some(Rejection::ToolRejected {
            exit_code: code,
            stderr_excerpt: stderr,
        })),
        None => Err(MutationError::ExternalToolFailure {
            exit_code: None,
            stderr_excerpt: format!("terminated by signal; {stderr}"),
        }),
    }
}

/// Full verdict with the rejection reason.
pub fn legality_verdict(
    record: &MutationRecord,
    original: &SourceModule,
    cfg: &LegalityConfig,
) -> Result<Verdict, MutationError> {
    if let Some(r) = static_check(record, original) {
        return Ok(Verdict::Illegal(r));
    }
    if let Some(cmd) = &cfg.synth_command {
        if let Some(r) = run_tool(cmd, &record.mutated_text)? {
            return Ok(Verdict::Illegal(r));
        }
    }
    Ok(Verdict::Legal)
}

/// True iff the mutant passes every static check and, when configured, the
/// external synth command.
pub fn legality_check(
    record: &MutationRecord,
    original: &SourceModule,
    cfg: &LegalityConfig,
) -> Result<bool, MutationError> {
    legality_verdict(record, original, cfg).map(|v| v.is_legal())
}
