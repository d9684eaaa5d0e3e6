// SPDX-License-Identifier: Apache-2.0

//! MinHash/LSH near-duplicate removal.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

use crate::par::{self, Exec};
use crate::rng::splitmix64;

pub type ShingleSet = BTreeSet<u64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DedupError {
    #[error("cannot sign an empty shingle set")]
    EmptyShingleSet,
    #[error("signatures differ in length or seed")]
    IncompatibleSignatures,
    #[error("invalid LSH parameters: {0}")]
    InvalidParams(String),
}

fn collapse(text: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(b' ');
        }
        out.extend(word.to_lowercase().bytes());
    }
    out
}

/// Hashes of every `k`-byte window of the lowercased, whitespace-collapsed
/// text. Shorter texts give the hash of the whole (collapsed) text.
pub fn shingles(text: &str, k: usize) -> ShingleSet {
    assert!(k >= 1, "shingle width must be positive");
    let bytes = collapse(text);
    if bytes.len() < k {
        return std::iter::once(xxh3_64(&bytes)).collect();
    }
    bytes.windows(k).map(xxh3_64).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub num_hashes: usize,
    pub seed: u64,
}

/// Salt of the `i`-th hash function. The family is
/// `h_i(x) = splitmix64(x ^ salt_i)`.
fn salts(num_hashes: usize, seed: u64) -> Vec<u64> {
    let mut state = seed;
    (0..num_hashes)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            splitmix64(state)
        })
        .collect()
}

pub fn signature(
    sh: &ShingleSet,
    num_hashes: usize,
    seed: u64,
) -> Result<MinHashSignature, DedupError> {
    if sh.is_empty() {
        return Err(DedupError::EmptyShingleSet);
    }
    let values = salts(num_hashes, seed)
        .into_iter()
        .map(|salt| {
            sh.iter()
                .map(|&x| splitmix64(x ^ salt))
                .min()
                .unwrap_or(u64::MAX)
        })
        .collect();
    Ok(MinHashSignature {
        values,
        num_hashes,
        seed,
    })
}

pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, DedupError> {
    if a.num_hashes != b.num_hashes || a.seed != b.seed || a.values.len() != b.values.len() {
        return Err(DedupError::IncompatibleSignatures);
    }
    if a.values.is_empty() {
        return Ok(0.0);
    }
    let agree = a
        .values
        .iter()
        .zip(&b.values)
        .filter(|(x, y)| x == y)
        .count();
    Ok(agree as f64 / a.values.len() as f64)
}

/// Exact Jaccard similarity of two shingle sets.
pub fn exact_jaccard(a: &ShingleSet, b: &ShingleSet) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LshParams {
    pub bands: usize,
    pub rows: usize,
}

impl Default for LshParams {
    fn default() -> Self {
        Self { bands: 16, rows: 8 }
    }
}

impl LshParams {
    pub fn num_hashes(&self) -> usize {
        self.bands * self.rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub threshold: f64,
    pub lsh: LshParams,
    pub shingle_k: usize,
    pub seed: u64,
    /// Confirm candidates with exact Jaccard instead of the signature estimate.
    pub exact_verify: bool,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            threshold: 0.7,
            lsh: LshParams::default(),
            shingle_k: 8,
            seed: 0,
            exact_verify: false,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), DedupError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(DedupError::InvalidParams(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        if self.lsh.bands == 0 || self.lsh.rows == 0 {
            return Err(DedupError::InvalidParams(
                "bands and rows must be positive".into(),
            ));
        }
        if self.shingle_k == 0 {
            return Err(DedupError::InvalidParams(
                "shingle width must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub kept: String,
    pub dropped: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DedupOutcome {
    /// Indices into the input, in input order.
    pub retained: Vec<usize>,
    pub report: Vec<DuplicatePair>,
}

impl DedupOutcome {
    pub fn retained_ids<'a>(&self, corpus: &'a [(String, String)]) -> Vec<&'a str> {
        self.retained
            .iter()
            .map(|&i| corpus[i].0.as_str())
            .collect()
    }
}

fn band_key(values: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    xxh3_64(&bytes)
}

pub fn deduplicate(
    corpus: &[(String, String)],
    cfg: &DedupConfig,
) -> Result<DedupOutcome, DedupError> {
    deduplicate_with(corpus, cfg, Exec::default())
}

/// Documents are visited in input order. Each one is compared only with
/// already-retained documents that share at least one LSH band; the first
/// retained match at or above the threshold drops it. The earliest member of
/// any duplicate cluster is therefore always kept.
pub fn deduplicate_with(
    corpus: &[(String, String)],
    cfg: &DedupConfig,
    exec: Exec,
) -> Result<DedupOutcome, DedupError> {
    cfg.validate()?;
    let n = cfg.lsh.num_hashes();
    let k = cfg.shingle_k;
    let prepared: Vec<(ShingleSet, MinHashSignature)> = par::map(exec, corpus, |(_, text)| {
        let sh = shingles(text, k);
        let sig = signature(&sh, n, cfg.seed).expect("shingle sets are never empty");
        (sh, sig)
    });

    let rows = cfg.lsh.rows;
    let mut buckets: Vec<HashMap<u64, Vec<usize>>> = vec![HashMap::new(); cfg.lsh.bands];
    let mut out = DedupOutcome::default();
    for (i, (sh, sig)) in prepared.iter().enumerate() {
        let keys: Vec<u64> = sig.values.chunks(rows).map(band_key).collect();
        let mut candidates = BTreeSet::new();
        for (b, key) in keys.iter().enumerate() {
            if let Some(ids) = buckets[b].get(key) {
                candidates.extend(ids.iter().copied());
            }
        }
        let hit = candidates.into_iter().find_map(|j| {
            let (other_sh, other_sig) = &prepared[j];
            let sim = if cfg.exact_verify {
                exact_jaccard(sh, other_sh)
            } else {
                estimate_jaccard(sig, other_sig).expect("same parameters")
            };
            (sim >= cfg.threshold).then_some((j, sim))
        });
        match hit {
            Some((j, sim)) => out.report.push(DuplicatePair {
                kept: corpus[j].0.clone(),
                dropped: corpus[i].0.clone(),
                similarity: sim,
            }),
            None => {
                for (b, key) in keys.into_iter().enumerate() {
                    buckets[b].entry(key).or_default().push(i);
                }
                out.retained.push(i);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> (String, String) {
        (id.to_string(), text.to_string())
    }

    #[test]
    fn short_text_is_one_shingle() {
        assert_eq!(shingles("abc", 3).len(), 1);
        assert_eq!(shingles("ab", 8).len(), 1);
        assert_eq!(shingles("abcd", 3).len(), 2);
    }

    #[test]
    fn whitespace_runs_and_case_do_not_matter() {
        assert_eq!(
            shingles("assign  y =\ta  +   b;", 4),
            shingles("ASSIGN y = a + b;", 4)
        );
    }

    #[test]
    fn self_similarity_is_one() {
        let s = signature(&shingles("module top; endmodule", 8), 128, 3).unwrap();
        assert_eq!(estimate_jaccard(&s, &s).unwrap(), 1.0);
    }

    #[test]
    fn empty_set_and_mismatch_errors() {
        assert_eq!(
            signature(&ShingleSet::new(), 8, 0),
            Err(DedupError::EmptyShingleSet)
        );
        let a = signature(&shingles("x", 1), 8, 0).unwrap();
        let b = signature(&shingles("x", 1), 8, 1).unwrap();
        let c = signature(&shingles("x", 1), 16, 0).unwrap();
        assert_eq!(
            estimate_jaccard(&a, &b),
            Err(DedupError::IncompatibleSignatures)
        );
        assert_eq!(
            estimate_jaccard(&a, &c),
            Err(DedupError::IncompatibleSignatures)
        );
    }

    #[test]
    fn disjoint_singletons_estimate_zero() {
        let a = signature(&shingles("x", 8), 128, 0).unwrap();
        let b = signature(&shingles("y", 8), 128, 0).unwrap();
        assert_eq!(estimate_jaccard(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn identical_docs_drop_the_second() {
        let corpus = vec![
            doc("a", "module a(input x); assign y = x; endmodule"),
            doc("b", "module a(input x); assign y = x; endmodule"),
        ];
        let out = deduplicate(&corpus, &DedupConfig::default()).unwrap();
        assert_eq!(out.retained_ids(&corpus), vec!["a"]);
        assert_eq!(out.report.len(), 1);
        assert_eq!(out.report[0].kept, "a");
        assert_eq!(out.report[0].dropped, "b");
        assert_eq!(out.report[0].similarity, 1.0);
    }

    #[test]
    fn dissimilar_docs_are_all_kept() {
        let corpus = vec![
            doc("a", "module alpha(input clk); reg [7:0] q; endmodule"),
            doc("b", "the quick brown fox jumps over the lazy dog"),
            doc("c", "completely unrelated sentence about rivers and hills"),
        ];
        let out = deduplicate(&corpus, &DedupConfig::default()).unwrap();
        assert_eq!(out.retained, vec![0, 1, 2]);
        assert!(out.report.is_empty());
    }

    #[test]
    fn threshold_must_be_open_unit_interval() {
        for t in [0.0, 1.0, -0.5, f64::NAN] {
            let cfg = DedupConfig {
                threshold: t,
                ..DedupConfig::default()
            };
            assert!(deduplicate(&[], &cfg).is_err());
        }
    }

    #[test]
    fn exact_verify_uses_true_jaccard() {
        let corpus = vec![doc("a", "abcdefghijklmnop"), doc("b", "abcdefghijklmnop")];
        let cfg = DedupConfig {
            exact_verify: true,
            ..DedupConfig::default()
        };
        let out = deduplicate(&corpus, &cfg).unwrap();
        assert_eq!(out.report[0].similarity, 1.0);
    }
}
