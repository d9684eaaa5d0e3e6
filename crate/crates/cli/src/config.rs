// SPDX-License-Identifier: Apache-2.0

//! TOML run configuration. Every key is optional; command-line flags win.

use std::path::Path;

use serde::{Deserialize, Serialize};

use vbugloc_core::dataset::GenerateOptions;
use vbugloc_core::dedup::DedupConfig;
use vbugloc_core::eval::EvalConfig;
use vbugloc_core::gateway::EndpointConfig;
use vbugloc_core::mutation::{LegalityConfig, MutationConfig};
use vbugloc_core::preference::SimpoParams;
use vbugloc_core::verilog::LoadConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Seed for every randomized subcommand.
    pub seed: Option<u64>,
    pub load: LoadConfig,
    pub dedup: DedupConfig,
    pub mutation: MutationConfig,
    pub legality: LegalityConfig,
    pub mutate: MutateSection,
    pub testset: TestsetSection,
    pub dataset: DatasetSection,
    pub generate: GenerateOptions,
    pub gateway: EndpointConfig,
    pub eval: EvalConfig,
    pub sweep: SweepSection,
    pub simpo: SimpoParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutateSection {
    /// A pattern name or `any`.
    pub pattern: String,
    pub per_module: usize,
}

impl Default for MutateSection {
    fn default() -> Self {
        Self {
            pattern: "any".into(),
            per_module: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestsetSection {
    /// `pattern=count` list.
    pub counts: String,
}

impl Default for TestsetSection {
    fn default() -> Self {
        Self {
            counts: "operator=25,numeric=26,variable=24,keyword=13,edge=14".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    /// Drop samples whose text exceeds this many characters.
    pub max_chars: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub temperatures: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            temperatures: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

/// Default value of the section a key belongs to, rendered as TOML.
fn example_for(key: &str) -> String {
    let defaults = toml::Value::try_from(RunConfig::default()).expect("defaults serialize");
    let section = key.split('.').next().unwrap_or("");
    match defaults.get(section) {
        Some(v @ toml::Value::Table(_)) => {
            let mut t = toml::Table::new();
            t.insert(section.to_string(), v.clone());
            toml::to_string(&t).unwrap_or_default()
        }
        _ => "seed = 7\n".into(),
    }
}

/// Dotted paths present in `given` but absent from `known`.
fn unknown_keys(given: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in given {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (v, known.get(k)) {
            (_, None) => out.push(path),
            (toml::Value::Table(g), Some(toml::Value::Table(kn))) => {
                unknown_keys(g, kn, &path, out)
            }
            _ => {}
        }
    }
}

pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, CliError> {
    let given: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        CliError::Usage(format!("{origin}: {}", e.message().trim()))
    })?;
    let cfg: RunConfig =
        toml::Value::Table(given.clone())
            .try_into()
            .map_err(|e: toml::de::Error| {
                CliError::Usage(format!("{origin}: {}", e.message().trim()))
            })?;
    // Anything the parsed config does not serialize back was ignored by serde.
    let known = toml::Table::try_from(&cfg).expect("config serializes");
    let mut unknown = Vec::new();
    unknown_keys(&given, &known, "", &mut unknown);
    if let Some(key) = unknown.first() {
        return Err(CliError::Usage(format!(
            "{origin}: unknown config key `{key}`. Example of valid keys:\n{}",
            example_for(key)
        )));
    }
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}
