// SPDX-License-Identifier: Apache-2.0

//! Output files and their provenance sidecars.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use vbugloc_core::jsonl::{read_jsonl, to_jsonl_string};

use crate::config::RunConfig;
use crate::error::{invalid, CliError};

pub const TOOL: &str = "vbugloc";

/// Path of the metadata file written next to `out`.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Provenance record: tool version, effective config and its hash, seeds.
/// Contains no timestamps, so reruns produce identical files.
pub struct Meta<'a> {
    pub command: &'a str,
    pub cfg: &'a RunConfig,
    pub seeds: BTreeMap<&'a str, u64>,
    pub inputs: Vec<&'a Path>,
    pub summary: Value,
}

impl Meta<'_> {
    fn to_json(&self) -> Value {
        json!({
            "tool": TOOL,
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config_sha256": config_hash(self.cfg),
            "seeds": self.seeds,
            "inputs": self.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "summary": self.summary,
            "config": self.cfg,
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_meta(out: &Path, meta: &Meta) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&meta.to_json()).expect("meta serializes") + "\n";
    write_file(&meta_path(out), &text)
}

/// Refuse to overwrite any input.
pub fn check_outputs(outputs: &[&Path], inputs: &[&Path]) -> Result<(), CliError> {
    let canon = |p: &Path| std::fs::canonicalize(p).ok();
    for o in outputs {
        let Some(co) = canon(o) else { continue };
        if inputs.iter().any(|i| canon(i).as_ref() == Some(&co)) {
            return Err(CliError::Usage(format!(
                "output {} is also an input; inputs are never overwritten",
                o.display()
            )));
        }
    }
    Ok(())
}

pub fn write_records<T: Serialize>(out: &Path, records: &[T], meta: &Meta) -> Result<(), CliError> {
    write_file(out, &to_jsonl_string(records))?;
    write_meta(out, meta)
}

pub fn write_document<T: Serialize>(out: &Path, doc: &T, meta: &Meta) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc).expect("document serializes") + "\n";
    write_file(out, &text)?;
    write_meta(out, meta)
}

#[derive(serde::Deserialize)]
struct DescriptionLine {
    id: String,
    description: String,
}

/// `{"id","description"}` JSONL into a map.
pub fn read_descriptions(path: Option<&Path>) -> Result<HashMap<String, String>, CliError> {
    let Some(path) = path else {
        return Ok(HashMap::new());
    };
    let lines: Vec<DescriptionLine> = read_jsonl(path).map_err(invalid)?;
    Ok(lines.into_iter().map(|l| (l.id, l.description)).collect())
}

pub fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_jsonl(path).map_err(invalid)
}
