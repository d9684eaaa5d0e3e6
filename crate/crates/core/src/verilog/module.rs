// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexer::{tokenize, LexError, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRecord {
    /// 1-based.
    pub index: usize,
    pub text: String,
}

/// A Verilog source file accepted as a seed module.
///
/// Immutable after construction. `lines` joined with `\n` reproduces
/// `raw_text`, up to one trailing newline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceModule {
    id: String,
    name: String,
    raw_text: String,
    lines: Vec<LineRecord>,
    tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadConfig {
    /// Modules must have at least this many lines.
    pub min_lines: usize,
    /// Optional cap on `raw_text` length in bytes.
    pub max_chars: Option<usize>,
}

impl Default for LoadConfig {
    fn default() -> Self {
        // "More than 20 lines of code".
        Self {
            min_lines: 21,
            max_chars: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("module has {0} lines, below the minimum")]
    TooShort(usize),
    #[error("module is {0} bytes, above the configured cap")]
    TooLong(usize),
    #[error("no module/endmodule pair found")]
    NoModuleBoundary,
    #[error(transparent)]
    Lex(#[from] LexError),
}

/// Split text into 1-indexed lines. A single trailing newline does not start
/// an extra line.
pub fn split_lines(text: &str) -> Vec<LineRecord> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n')
        .enumerate()
        .map(|(i, s)| LineRecord {
            index: i + 1,
            text: s.to_string(),
        })
        .collect()
}

/// Tokenize and validate `text` as a seed module.
pub fn load_module(text: &str, id: &str, cfg: &LoadConfig) -> Result<SourceModule, LoadError> {
    let tokens = tokenize(text)?;
    let has_module = tokens.iter().any(|t| t.is_keyword("module"));
    let has_end = tokens.iter().any(|t| t.is_keyword("endmodule"));
    if !has_module || !has_end {
        return Err(LoadError::NoModuleBoundary);
    }
    let lines = split_lines(text);
    if lines.len() < cfg.min_lines {
        return Err(LoadError::TooShort(lines.len()));
    }
    if let Some(cap) = cfg.max_chars {
        if text.len() > cap {
            return Err(LoadError::TooLong(text.len()));
        }
    }
    let name = tokens
        .iter()
        .position(|t| t.is_keyword("module"))
        .and_then(|i| {
            tokens[i + 1..]
                .iter()
                .find(|t| t.kind != TokenKind::Comment)
        })
        .filter(|t| t.kind == TokenKind::Identifier)
        .map(|t| t.lexeme.clone())
        .ok_or(LoadError::NoModuleBoundary)?;
    Ok(SourceModule {
        id: id.to_string(),
        name,
        raw_text: text.to_string(),
        lines,
        tokens,
    })
}

impl SourceModule {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn lines(&self) -> &[LineRecord] {
        &self.lines
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    /// Text of 1-based line `n`.
    pub fn line(&self, n: usize) -> Option<&str> {
        n.checked_sub(1)
            .and_then(|i| self.lines.get(i))
            .map(|l| l.text.as_str())
    }

    pub fn line_texts(&self) -> Vec<&str> {
        self.lines.iter().map(|l| l.text.as_str()).collect()
    }

    pub fn has_trailing_newline(&self) -> bool {
        self.raw_text.ends_with('\n')
    }

    /// Rebuild text from `lines`, optionally swapping one line.
    pub fn render_with(&self, replace: Option<(usize, &str)>) -> String {
        let mut out = String::with_capacity(self.raw_text.len() + 16);
        for (i, l) in self.lines.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            match replace {
                Some((n, text)) if n == l.index => out.push_str(text),
                _ => out.push_str(&l.text),
            }
        }
        if self.has_trailing_newline() {
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn module_text(name: &str, body_lines: usize) -> String {
        let mut s = format!("module {name} (input a, input b, output y);\n");
        for i in 0..body_lines.saturating_sub(2) {
            s.push_str(&format!("  // filler {i}\n"));
        }
        s.push_str("endmodule\n");
        s
    }

    #[test]
    fn loads_adder() {
        let text = module_text("adder", 25);
        let m = load_module(&text, "m0", &LoadConfig::default()).unwrap();
        assert_eq!(m.name(), "adder");
        assert_eq!(m.line_count(), 25);
        assert_eq!(m.id(), "m0");
        assert_eq!(m.render_with(None), text);
    }

    #[test]
    fn too_short_at_default_threshold() {
        let text = module_text("tiny", 12);
        assert_eq!(
            load_module(&text, "t", &LoadConfig::default()),
            Err(LoadError::TooShort(12))
        );
        // Exactly 20 lines is still too short; 21 passes.
        assert_eq!(
            load_module(&module_text("t", 20), "t", &LoadConfig::default()),
            Err(LoadError::TooShort(20))
        );
        assert!(load_module(&module_text("t", 21), "t", &LoadConfig::default()).is_ok());
    }

    #[test]
    fn missing_endmodule() {
        let text = module_text("adder", 25).replace("endmodule", "");
        assert_eq!(
            load_module(&text, "x", &LoadConfig::default()),
            Err(LoadError::NoModuleBoundary)
        );
    }

    #[test]
    fn endmodule_inside_comment_does_not_count() {
        let text = module_text("adder", 25).replace("endmodule", "// endmodule");
        assert_eq!(
            load_module(&text, "x", &LoadConfig::default()),
            Err(LoadError::NoModuleBoundary)
        );
    }

    #[test]
    fn lex_errors_are_wrapped() {
        let text = format!("{}/* open", module_text("adder", 25));
        assert!(matches!(
            load_module(&text, "x", &LoadConfig::default()),
            Err(LoadError::Lex(LexError::UnterminatedBlockComment { .. }))
        ));
    }

    #[test]
    fn char_cap_is_optional() {
        let text = module_text("adder", 25);
        let cfg = LoadConfig {
            max_chars: Some(10),
            ..LoadConfig::default()
        };
        assert_eq!(
            load_module(&text, "x", &cfg),
            Err(LoadError::TooLong(text.len()))
        );
    }

    #[test]
    fn no_trailing_newline_round_trips() {
        let text = module_text("adder", 25);
        let text = text.trim_end_matches('\n');
        let m = load_module(text, "x", &LoadConfig::default()).unwrap();
        assert_eq!(m.render_with(None), text);
    }

    #[test]
    fn render_with_replacement() {
        let m = load_module(&module_text("adder", 22), "x", &LoadConfig::default()).unwrap();
        let out = m.render_with(Some((2, "  // changed")));
        let diff: Vec<_> = split_lines(&out)
            .iter()
            .zip(m.lines())
            .filter(|(a, b)| a.text != b.text)
            .map(|(a, _)| a.index)
            .collect();
        assert_eq!(diff, vec![2]);
    }
}
