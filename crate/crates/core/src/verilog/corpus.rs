// SPDX-License-Identifier: Apache-2.0

//! Corpus input: a directory of `.v` files or a JSONL file of
//! `{"id", "text"}` objects (an optional `"description"` is carried along).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{read_jsonl, JsonlError};

use super::module::{load_module, LoadConfig, LoadError, SourceModule};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

/// Read raw entries. Directory entries are sorted by file name and take the
/// file stem as their id.
pub fn read_corpus(path: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    if !path.is_dir() {
        return Ok(read_jsonl(path)?);
    }
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "v"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(|source| CorpusError::Io {
                path: p.clone(),
                source,
            })?;
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(CorpusEntry {
                id,
                text,
                description: None,
            })
        })
        .collect()
}

/// Outcome of loading a whole corpus: accepted modules plus per-entry rejections.
#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub modules: Vec<SourceModule>,
    pub rejected: Vec<(String, LoadError)>,
}

pub fn load_corpus(entries: &[CorpusEntry], cfg: &LoadConfig) -> LoadedCorpus {
    let mut out = LoadedCorpus::default();
    for e in entries {
        match load_module(&e.text, &e.id, cfg) {
            Ok(m) => out.modules.push(m),
            Err(err) => out.rejected.push((e.id.clone(), err)),
        }
    }
    out
}
