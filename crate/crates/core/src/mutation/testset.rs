// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use crate::eval::TestCase;
use crate::rng::{mix_seed, SeededRng};
use crate::text::normalize_ws;
use crate::verilog::SourceModule;

use super::legality::{legality_verdict, LegalityConfig};
use super::{apply_site, enumerate_sites, BugPattern, MutationConfig, MutationError};

pub type PatternCounts = BTreeMap<BugPattern, usize>;

/// Parse `operator=25,numeric=26,...`. Unlisted patterns get zero.
pub fn parse_counts(spec: &str) -> Result<PatternCounts, String> {
    let mut out = PatternCounts::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, n) = part
            .split_once('=')
            .ok_or_else(|| format!("`{part}` is not of the form pattern=count"))?;
        let pattern: BugPattern = name.parse().map_err(|e| format!("{e}"))?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| format!("`{n}` is not a non-negative integer"))?;
        if out.insert(pattern, n).is_some() {
            return Err(format!("pattern `{pattern}` listed twice"));
        }
    }
    Ok(out)
}

/// A buggy line identical to another line cannot be told apart by content.
fn duplicates_other_line(module: &SourceModule, line_no: usize, mutated: &str) -> bool {
    let target = normalize_ws(mutated);
    module
        .lines()
        .iter()
        .any(|l| l.index != line_no && normalize_ws(&l.text) == target)
}

/// Build an evaluation testset whose pattern histogram equals `counts`.
///
/// Each case uses a distinct (module, site). For every pattern the pool of all
/// sites across the corpus is shuffled with `mix_seed(seed, pattern)`; sites are
/// drawn in that order, a replacement is picked uniformly, and the mutant is kept
/// if it passes the legality check and its buggy line matches no other line of
/// the module. Output is grouped by pattern in canonical order.
pub fn build_testset(
    corpus: &[(SourceModule, String)],
    counts: &PatternCounts,
    seed: u64,
    cfg: &MutationConfig,
    legality: &LegalityConfig,
) -> Result<Vec<TestCase>, MutationError> {
    if counts.values().all(|&n| n == 0) {
        return Ok(Vec::new());
    }
    if corpus.is_empty() {
        return Err(MutationError::EmptyCorpus);
    }
    let mut cases = Vec::new();
    for (&pattern, &requested) in counts {
        if requested == 0 {
            continue;
        }
        let pattern_seed = mix_seed(seed, pattern.ordinal());
        let mut pool: Vec<(usize, super::MutationSite)> = corpus
            .iter()
            .enumerate()
            .flat_map(|(mi, (m, _))| {
                enumerate_sites(m, pattern, cfg)
                    .into_iter()
                    .map(move |s| (mi, s))
            })
            .collect();
        let mut rng = SeededRng::new(pattern_seed);
        rng.shuffle(&mut pool);
        let mut taken = 0usize;
        for (draw, (mi, site)) in pool.iter().enumerate() {
            if taken == requested {
                break;
            }
            let (module, description) = &corpus[*mi];
            let candidate = rng.below(site.replacement_candidates.len());
            let record = apply_site(module, site, candidate, mix_seed(pattern_seed, draw as u64));
            if duplicates_other_line(module, record.line_no, &record.mutated_line)
                || !legality_verdict(&record, module, legality)?.is_legal()
            {
                continue;
            }
            taken += 1;
            cases.push(TestCase {
                case_id: format!("{}-{}-{:03}", module.id(), pattern, taken),
                module_id: module.id().to_string(),
                design_description: description.clone(),
                buggy_code: record.mutated_text,
                buggy_line_no: record.line_no,
                buggy_line: record.mutated_line,
                pattern,
            });
        }
        if taken < requested {
            return Err(MutationError::InsufficientSites {
                pattern,
                requested,
                available: taken,
            });
        }
    }
    Ok(cases)
}
