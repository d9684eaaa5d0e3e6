// SPDX-License-Identifier: Apache-2.0

//! Line- and token-level view of Verilog source.

pub mod corpus;
pub mod lexer;
pub mod module;

pub use corpus::{load_corpus, read_corpus, CorpusEntry, CorpusError, LoadedCorpus};
pub use lexer::{is_keyword, tokenize, LexError, Token, TokenKind};
pub use module::{load_module, split_lines, LineRecord, LoadConfig, LoadError, SourceModule};
