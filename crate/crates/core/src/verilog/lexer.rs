// SPDX-License-Identifier: Apache-2.0

//! A scanning lexer for Verilog-2005 source.
//!
//! This is not a grammar: it splits text into classified lexemes with exact
//! (line, column) addresses so that mutation sites can be found and mutants can
//! be re-scanned. Whitespace is skipped; comments and string literals are kept
//! as single tokens so that downstream code can prove it never edits them.
//!
//! Columns are 1-based byte offsets within the line; a tab is one column.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    Operator,
    Number,
    StringLiteral,
    Comment,
    Punctuation,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    /// 1-based line of the first byte.
    pub line: usize,
    /// 1-based byte column of the first byte.
    pub col: usize,
    /// Byte offset of the first byte in the whole text.
    pub offset: usize,
}

impl Token {
    pub fn end_offset(&self) -> usize {
        self.offset + self.lexeme.len()
    }

    pub fn is(&self, kind: TokenKind, lexeme: &str) -> bool {
        self.kind == kind && self.lexeme == lexeme
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.is(TokenKind::Keyword, kw)
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.is(TokenKind::Punctuation, p)
    }

    pub fn is_op(&self, op: &str) -> bool {
        self.is(TokenKind::Operator, op)
    }

    /// Comments and strings are never mutation sites.
    pub fn is_opaque(&self) -> bool {
        matches!(self.kind, TokenKind::Comment | TokenKind::StringLiteral)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated block comment starting at {line}:{col}")]
    UnterminatedBlockComment { line: usize, col: usize },
    #[error("unterminated string literal starting at {line}:{col}")]
    UnterminatedString { line: usize, col: usize },
}

/// Verilog-2005 reserved words, sorted for binary search.
const KEYWORDS: &[&str] = &[
    "always",
    "and",
    "assign",
    "automatic",
    "begin",
    "buf",
    "bufif0",
    "bufif1",
    "case",
    "casex",
    "casez",
    "cell",
    "cmos",
    "config",
    "deassign",
    "default",
    "defparam",
    "design",
    "disable",
    "edge",
    "else",
    "end",
    "endcase",
    "endconfig",
    "endfunction",
    "endgenerate",
    "endmodule",
    "endprimitive",
    "endspecify",
    "endtable",
    "endtask",
    "event",
    "for",
    "force",
    "forever",
    "fork",
    "function",
    "generate",
    "genvar",
    "highz0",
    "highz1",
    "if",
    "ifnone",
    "incdir",
    "include",
    "initial",
    "inout",
    "input",
    "instance",
    "integer",
    "join",
    "large",
    "liblist",
    "library",
    "localparam",
    "macromodule",
    "medium",
    "module",
    "nand",
    "negedge",
    "nmos",
    "nor",
    "noshowcancelled",
    "not",
    "notif0",
    "notif1",
    "or",
    "output",
    "parameter",
    "pmos",
    "posedge",
    "primitive",
    "pull0",
    "pull1",
    "pulldown",
    "pullup",
    "pulsestyle_ondetect",
    "pulsestyle_onevent",
    "rcmos",
    "real",
    "realtime",
    "reg",
    "release",
    "repeat",
    "rnmos",
    "rpmos",
    "rtran",
    "rtranif0",
    "rtranif1",
    "scalared",
    "showcancelled",
    "signed",
    "small",
    "specify",
    "specparam",
    "strong0",
    "strong1",
    "supply0",
    "supply1",
    "table",
    "task",
    "time",
    "tran",
    "tranif0",
    "tranif1",
    "tri",
    "tri0",
    "tri1",
    "triand",
    "trior",
    "trireg",
    "unsigned",
    "use",
    "uwire",
    "vectored",
    "wait",
    "wand",
    "weak0",
    "weak1",
    "while",
    "wire",
    "wor",
    "xnor",
    "xor",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

/// Operators, longest first so that a prefix scan finds the maximal munch.
const OPERATORS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "**", "~&", "~|",
    "~^", "^~", "->", "+:", "-:", "+", "-", "*", "/", "%", "<", ">", "=", "!", "~", "&", "|", "^",
    "?",
];

const PUNCTUATION: &[u8] = b";,()[]{}.@#:";

struct Scanner<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    line_start: usize,
}

impl<'a> Scanner<'a> {
    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn col(&self) -> usize {
        self.pos - self.line_start + 1
    }

    /// Advance to `end`, keeping the line bookkeeping in step.
    fn advance_to(&mut self, end: usize) {
        while self.pos < end {
            if self.bytes[self.pos] == b'\n' {
                self.line += 1;
                self.line_start = self.pos + 1;
            }
            self.pos += 1;
        }
    }

    fn run(mut self) -> Result<Vec<Token>, LexError> {
        let mut tokens = Vec::new();
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.advance_to(self.pos + 1);
                continue;
            }
            let (line, col, start) = (self.line, self.col(), self.pos);
            let (kind, end) = self.scan_one(b, line, col)?;
            self.advance_to(end);
            tokens.push(Token {
                kind,
                lexeme: self.src[start..end].to_string(),
                line,
                col,
                offset: start,
            });
        }
        Ok(tokens)
    }

    fn scan_one(&self, b: u8, line: usize, col: usize) -> Result<(TokenKind, usize), LexError> {
        let rest = &self.bytes[self.pos..];
        let len = self.bytes.len();
        if b == b'/' && self.peek(1) == Some(b'/') {
            let end = memchr(b'\n', rest).map_or(len, |i| self.pos + i);
            return Ok((TokenKind::Comment, end));
        }
        if b == b'/' && self.peek(1) == Some(b'*') {
            return match find(&rest[2..], b"*/") {
                Some(i) => Ok((TokenKind::Comment, self.pos + 2 + i + 2)),
                None => Err(LexError::UnterminatedBlockComment { line, col }),
            };
        }
        if b == b'"' {
            let mut i = 1;
            while i < rest.len() {
                match rest[i] {
                    b'\\' if i + 1 < rest.len() && rest[i + 1] != b'\n' => i += 2,
                    b'"' => return Ok((TokenKind::StringLiteral, self.pos + i + 1)),
                    b'\n' => break,
                    _ => i += 1,
                }
            }
            return Err(LexError::UnterminatedString { line, col });
        }
        if b.is_ascii_digit() || (b == b'\'' && self.peek(1).is_some_and(is_base_char)) {
            return Ok((TokenKind::Number, self.pos + scan_number(rest)));
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            let n = rest.iter().take_while(|&&c| is_ident_char(c)).count();
            let word = &self.src[self.pos..self.pos + n];
            let kind = if is_keyword(word) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            return Ok((kind, self.pos + n));
        }
        if b == b'\\' {
            // Escaped identifier: runs to the next whitespace.
            let n = rest.iter().take_while(|c| !c.is_ascii_whitespace()).count();
            return Ok((TokenKind::Identifier, self.pos + n));
        }
        if b == b'$' || b == b'`' {
            // System task/function or compiler directive.
            let n = 1 + rest[1..].iter().take_while(|&&c| is_ident_char(c)).count();
            return Ok((TokenKind::Other, self.pos + n));
        }
        if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(op.as_bytes())) {
            return Ok((TokenKind::Operator, self.pos + op.len()));
        }
        if PUNCTUATION.contains(&b) {
            return Ok((TokenKind::Punctuation, self.pos + 1));
        }
        // Anything else, including non-ASCII text, becomes a one-char Other token.
        let ch_len = self.src[self.pos..]
            .chars()
            .next()
            .map_or(1, char::len_utf8);
        Ok((TokenKind::Other, self.pos + ch_len))
    }
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

fn is_base_char(c: u8) -> bool {
    matches!(
        c,
        b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H' | b's' | b'S'
    )
}

/// Length of the numeric literal at the start of `s`: decimal, real,
/// `<size>'<base><digits>` or unsized `'<base><digits>`.
fn scan_number(s: &[u8]) -> usize {
    let mut i = s
        .iter()
        .take_while(|&&c| c.is_ascii_digit() || c == b'_')
        .count();
    if s.get(i) == Some(&b'\'') && s.get(i + 1).is_some_and(|&c| is_base_char(c)) {
        i += 1;
        if matches!(s.get(i), Some(b's' | b'S')) {
            i += 1;
        }
        if s.get(i)
            .is_some_and(|&c| is_base_char(c) && c != b's' && c != b'S')
        {
            i += 1;
        }
        i += s[i..]
            .iter()
            .take_while(|&&c| {
                c.is_ascii_hexdigit() || matches!(c, b'_' | b'x' | b'X' | b'z' | b'Z' | b'?')
            })
            .count();
        return i;
    }
    // Real: fraction and/or exponent.
    if s.get(i) == Some(&b'.') && s.get(i + 1).is_some_and(u8::is_ascii_digit) {
        i += 1;
        i += s[i..]
            .iter()
            .take_while(|&&c| c.is_ascii_digit() || c == b'_')
            .count();
    }
    if matches!(s.get(i), Some(b'e' | b'E')) {
        let mut j = i + 1;
        if matches!(s.get(j), Some(b'+' | b'-')) {
            j += 1;
        }
        if s.get(j).is_some_and(u8::is_ascii_digit) {
            i = j + s[j..].iter().take_while(|&&c| c.is_ascii_digit()).count();
        }
    }
    i
}

fn memchr(needle: u8, hay: &[u8]) -> Option<usize> {
    hay.iter().position(|&c| c == needle)
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Split `text` into tokens.
pub fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    Scanner {
        src: text,
        bytes: text.as_bytes(),
        pos: 0,
        line: 1,
        line_start: 0,
    }
    .run()
}
