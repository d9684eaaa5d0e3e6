// SPDX-License-Identifier: Apache-2.0

//! Mutation site discovery.
//!
//! Sites are found on the token stream, never in raw text. Context that a
//! regex could not see (is this `<=` an assignment? is this identifier being
//! declared?) comes from a single pass over the non-comment tokens.

use std::collections::{BTreeSet, HashSet};

use crate::rng::splitmix64;
use crate::verilog::{SourceModule, Token, TokenKind};

use super::{BugPattern, MutationConfig, MutationSite, NumericMode};

const DECL_KEYWORDS: &[&str] = &[
    "input",
    "output",
    "inout",
    "wire",
    "reg",
    "integer",
    "parameter",
    "localparam",
    "genvar",
    "real",
    "time",
    "tri",
    "uwire",
    "wand",
    "wor",
    "supply0",
    "supply1",
];

const TYPE_MODIFIERS: &[&str] = &["signed", "unsigned", "scalared", "vectored"];

/// Keywords that begin a new statement and therefore end any declaration.
const STATEMENT_KEYWORDS: &[&str] = &[
    "assign",
    "always",
    "initial",
    "begin",
    "end",
    "endmodule",
    "if",
    "else",
    "case",
    "endcase",
    "for",
    "function",
    "task",
    "generate",
    "endgenerate",
];

/// Token-level context for one module.
#[derive(Debug, Default)]
struct Facts {
    declared: BTreeSet<String>,
    /// Token indices inside declaration statements or the module header.
    in_decl: HashSet<usize>,
    /// Token indices of `<=` used as a non-blocking assignment.
    nonblocking: HashSet<usize>,
}

fn analyze(tokens: &[Token]) -> Facts {
    let mut facts = Facts::default();
    let sig: Vec<usize> = (0..tokens.len())
        .filter(|&i| tokens[i].kind != TokenKind::Comment)
        .collect();

    // Module header: from `module` to the first `;` outside brackets.
    let mut in_header = false;
    let mut header_depth = 0i32;

    // Declarations.
    let mut in_decl = false;
    let mut depth = 0i32;
    let mut after_eq = false;

    // Assignment context.
    let mut nest = 0i32;
    let mut seen_assign = false;

    for (k, &i) in sig.iter().enumerate() {
        let t = &tokens[i];
        let prev = k.checked_sub(1).map(|p| &tokens[sig[p]]);

        if t.is_keyword("module") || t.is_keyword("macromodule") {
            in_header = true;
            header_depth = 0;
        }
        if in_header {
            facts.in_decl.insert(i);
            match t.lexeme.as_str() {
                "(" | "[" | "{" if t.kind == TokenKind::Punctuation => header_depth += 1,
                ")" | "]" | "}" if t.kind == TokenKind::Punctuation => header_depth -= 1,
                ";" if header_depth == 0 => in_header = false,
                _ => {}
            }
        }

        if t.kind == TokenKind::Keyword && DECL_KEYWORDS.contains(&t.lexeme.as_str()) {
            in_decl = true;
            depth = 0;
            after_eq = false;
        } else if t.kind == TokenKind::Keyword && STATEMENT_KEYWORDS.contains(&t.lexeme.as_str()) {
            in_decl = false;
        }
        if in_decl {
            facts.in_decl.insert(i);
            match (t.kind, t.lexeme.as_str()) {
                (TokenKind::Punctuation, "(" | "[" | "{") => depth += 1,
                (TokenKind::Punctuation, ")" | "]" | "}") => {
                    if depth == 0 {
                        // Closing paren of an ANSI port list or `#(...)`.
                        in_decl = false;
                    } else {
                        depth -= 1;
                    }
                }
                (TokenKind::Punctuation, ";") if depth == 0 => in_decl = false,
                (TokenKind::Punctuation, ",") if depth == 0 => after_eq = false,
                (TokenKind::Operator, "=") if depth == 0 => after_eq = true,
                (TokenKind::Identifier, name) if depth == 0 && !after_eq => {
                    let declares = prev.is_some_and(|p| {
                        (p.kind == TokenKind::Keyword
                            && (DECL_KEYWORDS.contains(&p.lexeme.as_str())
                                || TYPE_MODIFIERS.contains(&p.lexeme.as_str())))
                            || p.is_punct("]")
                            || p.is_punct(",")
                    });
                    if declares && !name.starts_with('\\') {
                        facts.declared.insert(name.to_string());
                    }
                }
                _ => {}
            }
        }

        match (t.kind, t.lexeme.as_str()) {
            (TokenKind::Punctuation, "(" | "[" | "{") => nest += 1,
            (TokenKind::Punctuation, ")" | "]" | "}") => nest = (nest - 1).max(0),
            (TokenKind::Punctuation, ";") => seen_assign = false,
            (TokenKind::Keyword, "begin" | "end" | "else" | "always" | "initial" | "endcase") => {
                seen_assign = false
            }
            (TokenKind::Operator, "=") if nest == 0 => seen_assign = true,
            (TokenKind::Operator, "<=") if nest == 0 && !seen_assign => {
                facts.nonblocking.insert(i);
                seen_assign = true;
            }
            _ => {}
        }
    }
    facts
}

/// Identifiers declared anywhere in the module (ports, nets, variables,
/// parameters, genvars).
pub fn declared_identifiers(module: &SourceModule) -> BTreeSet<String> {
    analyze(module.tokens()).declared
}

fn site(t: &Token, pattern: BugPattern, candidates: Vec<String>) -> Option<MutationSite> {
    if candidates.is_empty() || t.is_opaque() {
        return None;
    }
    debug_assert!(candidates.iter().all(|c| c != &t.lexeme));
    let start = t.col - 1;
    Some(MutationSite {
        line: t.line,
        col_span: (start, start + t.lexeme.len()),
        pattern,
        original: t.lexeme.clone(),
        replacement_candidates: candidates,
    })
}

/// All places where `pattern` can inject a bug, in source order.
pub fn enumerate_sites(
    module: &SourceModule,
    pattern: BugPattern,
    cfg: &MutationConfig,
) -> Vec<MutationSite> {
    let tokens = module.tokens();
    let facts = analyze(tokens);
    let sig: Vec<usize> = (0..tokens.len())
        .filter(|&i| tokens[i].kind != TokenKind::Comment)
        .collect();
    let mut out = Vec::new();
    for (k, &i) in sig.iter().enumerate() {
        let t = &tokens[i];
        let at = |d: isize| -> Option<&Token> {
            let j = k as isize + d;
            (j >= 0)
                .then(|| sig.get(j as usize).map(|&x| &tokens[x]))
                .flatten()
        };
        let candidates = match pattern {
            BugPattern::OperatorMisuse => operator_candidates(t, i, &facts, cfg),
            BugPattern::NumericValue => numeric_candidates(t, at(-1), at(1), at(-2), at(2), cfg),
            BugPattern::KeywordMisuse => match (t.kind, t.lexeme.as_str()) {
                (TokenKind::Keyword, "wire") => vec!["reg".to_string()],
                (TokenKind::Keyword, "reg") => vec!["wire".to_string()],
                _ => vec![],
            },
            BugPattern::VariableConfusion => {
                if t.kind == TokenKind::Identifier
                    && facts.declared.contains(&t.lexeme)
                    && !facts.in_decl.contains(&i)
                    && t.lexeme != module.name()
                    && !at(-1).is_some_and(|p| p.is_punct("."))
                {
                    facts
                        .declared
                        .iter()
                        .filter(|d| **d != t.lexeme && d.as_str() != module.name())
                        .cloned()
                        .collect()
                } else {
                    vec![]
                }
            }
            BugPattern::EdgeError => match (t.kind, t.lexeme.as_str()) {
                (TokenKind::Keyword, "posedge") => vec!["negedge".to_string()],
                (TokenKind::Keyword, "negedge") => vec!["posedge".to_string()],
                _ => vec![],
            },
        };
        out.extend(site(t, pattern, candidates));
    }
    out
}

fn operator_candidates(t: &Token, idx: usize, facts: &Facts, cfg: &MutationConfig) -> Vec<String> {
    if t.kind != TokenKind::Operator {
        return vec![];
    }
    let op = t.lexeme.as_str();
    if op == "<=" && facts.nonblocking.contains(&idx) {
        return vec![];
    }
    let class: &[&str] = match op {
        "+" | "-" => &["+", "-"],
        "&" | "|" if cfg.allow_cross_class_ops => &["&", "|", "&&", "||"],
        "&&" | "||" if cfg.allow_cross_class_ops => &["&", "|", "&&", "||"],
        "&" | "|" => &["&", "|"],
        "&&" | "||" => &["&&", "||"],
        "<" | ">" => &["<", ">"],
        "<=" | ">=" => &["<=", ">="],
        "==" | "!=" => &["==", "!="],
        "<<" | ">>" => &["<<", ">>"],
        _ => &[],
    };
    class
        .iter()
        .filter(|c| **c != op)
        .map(|c| c.to_string())
        .collect()
}

/// A sized literal such as `8'hFF` split into its parts.
#[derive(Debug, Clone, PartialEq, Eq)]
struct SizedLiteral {
    width: u32,
    signed: String,
    base_char: char,
    radix: u32,
    value: u128,
    digit_count: usize,
    upper: bool,
}

impl SizedLiteral {
    fn parse(lexeme: &str) -> Option<Self> {
        let (w, rest) = lexeme.split_once('\'')?;
        let width: u32 = w.replace('_', "").parse().ok()?;
        if width == 0 || width > 64 {
            return None;
        }
        let mut chars = rest.chars();
        let mut c = chars.next()?;
        let mut signed = String::new();
        if c == 's' || c == 'S' {
            signed.push(c);
            c = chars.next()?;
        }
        let radix = match c.to_ascii_lowercase() {
            'b' => 2,
            'o' => 8,
            'd' => 10,
            'h' => 16,
            _ => return None,
        };
        let digits: String = chars.as_str().chars().filter(|&ch| ch != '_').collect();
        if digits.is_empty() {
            return None;
        }
        let value = u128::from_str_radix(&digits, radix).ok()?;
        if value >> width != 0 {
            return None;
        }
        Some(Self {
            width,
            signed,
            base_char: c,
            radix,
            value,
            digit_count: digits.len(),
            upper: digits.chars().any(|ch| ch.is_ascii_uppercase()),
        })
    }

    fn render(&self, width: u32, value: u128) -> String {
        let mut digits = match self.radix {
            2 => format!("{value:b}"),
            8 => format!("{value:o}"),
            16 if self.upper => format!("{value:X}"),
            16 => format!("{value:x}"),
            _ => value.to_string(),
        };
        if self.radix != 10 && digits.len() < self.digit_count {
            digits = format!("{}{digits}", "0".repeat(self.digit_count - digits.len()));
        }
        format!("{width}'{}{}{digits}", self.signed, self.base_char)
    }

    fn max_value(&self) -> u128 {
        (1u128 << self.width) - 1
    }
}

fn plain_decimal(t: &Token) -> Option<u64> {
    if t.kind != TokenKind::Number || !t.lexeme.bytes().all(|b| b.is_ascii_digit() || b == b'_') {
        return None;
    }
    t.lexeme.replace('_', "").parse().ok()
}

fn numeric_candidates(
    t: &Token,
    prev: Option<&Token>,
    next: Option<&Token>,
    prev2: Option<&Token>,
    next2: Option<&Token>,
    cfg: &MutationConfig,
) -> Vec<String> {
    if t.kind != TokenKind::Number {
        return vec![];
    }
    let mut out = Vec::new();
    if let Some(lit) = SizedLiteral::parse(&t.lexeme) {
        if lit.width > 1 && lit.value < (1u128 << (lit.width - 1)) {
            out.push(lit.render(lit.width - 1, lit.value));
        }
        if lit.width < 64 {
            out.push(lit.render(lit.width + 1, lit.value));
        }
        match cfg.numeric_mode {
            NumericMode::Step => {
                if lit.value > 0 {
                    out.push(lit.render(lit.width, lit.value - 1));
                }
                if lit.value < lit.max_value() {
                    out.push(lit.render(lit.width, lit.value + 1));
                }
            }
            NumericMode::Randomize => {
                let mut h = splitmix64(t.offset as u64 ^ (lit.value as u64).rotate_left(17));
                let mut seen = BTreeSet::new();
                let space = lit.max_value().saturating_add(1);
                for _ in 0..32 {
                    if seen.len() == 8 {
                        break;
                    }
                    h = splitmix64(h);
                    let v = u128::from(h) % space;
                    if v != lit.value && seen.insert(v) {
                        out.push(lit.render(lit.width, v));
                    }
                }
            }
        }
        out.retain(|c| c != &t.lexeme);
        out.dedup();
        return out;
    }
    // Range bound: `[ msb : lsb ]` with both bounds plain decimals, msb >= lsb.
    let Some(v) = plain_decimal(t) else {
        return out;
    };
    let is_msb = prev.is_some_and(|p| p.is_punct("["))
        && next.is_some_and(|n| n.is_punct(":"))
        && next2.and_then(plain_decimal).is_some();
    let is_lsb = next.is_some_and(|n| n.is_punct("]"))
        && prev.is_some_and(|p| p.is_punct(":"))
        && prev2.and_then(plain_decimal).is_some();
    if is_msb {
        let lsb = next2.and_then(plain_decimal).unwrap_or(0);
        if v < lsb {
            return out;
        }
        if v > lsb {
            out.push((v - 1).to_string());
        }
        out.push((v + 1).to_string());
    } else if is_lsb {
        let msb = prev2.and_then(plain_decimal).unwrap_or(0);
        if msb < v {
            return out;
        }
        if v > 0 {
            out.push((v - 1).to_string());
        }
        if v < msb {
            out.push((v + 1).to_string());
        }
    }
    out
}
