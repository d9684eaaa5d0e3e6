// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use crate::par::{self, Exec};
use crate::rng::{mix_seed, splitmix64, SeededRng};
use crate::verilog::SourceModule;

use super::legality::{legality_verdict, LegalityConfig, Verdict};
use super::{
    enumerate_sites, BugPattern, MutationConfig, MutationError, MutationRecord, MutationSite,
};

/// Build the record for replacing `site` with its `candidate`-th replacement.
pub fn apply_site(
    module: &SourceModule,
    site: &MutationSite,
    candidate: usize,
    seed: u64,
) -> MutationRecord {
    let original_line = module
        .line(site.line)
        .expect("site line exists")
        .to_string();
    let (start, end) = site.col_span;
    let mutated_line = format!(
        "{}{}{}",
        &original_line[..start],
        site.replacement_candidates[candidate],
        &original_line[end..]
    );
    let mutated_text = module.render_with(Some((site.line, &mutated_line)));
    MutationRecord {
        module_id: module.id().to_string(),
        pattern: site.pattern,
        line_no: site.line,
        original_line,
        mutated_line,
        mutated_text,
        seed,
    }
}

/// Inject one `pattern` bug, choosing the site and then the replacement
/// uniformly with a generator seeded by `seed`.
pub fn inject(
    module: &SourceModule,
    pattern: BugPattern,
    seed: u64,
    cfg: &MutationConfig,
) -> Result<MutationRecord, MutationError> {
    let sites = enumerate_sites(module, pattern, cfg);
    if sites.is_empty() {
        return Err(MutationError::NoSites(pattern));
    }
    let mut rng = SeededRng::new(seed);
    let site = &sites[rng.below(sites.len())];
    let candidate = rng.below(site.replacement_candidates.len());
    Ok(apply_site(module, site, candidate, seed))
}

/// Which pattern a corpus-level run injects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternChoice {
    Fixed(BugPattern),
    /// Uniform over the patterns that have at least one site in the module.
    Any,
}

/// Result of [`mutate_corpus`].
#[derive(Debug, Default)]
pub struct CorpusMutation {
    pub records: Vec<MutationRecord>,
    /// (module id, reason) for tasks that produced no record.
    pub skipped: Vec<(String, String)>,
}

const PATTERN_PICK_SALT: u64 = 0xA5A5_5A5A_C3C3_3C3C;

/// Inject `per_module` bugs into every module.
///
/// Task `j` of module `i` uses seed `mix_seed(seed, i * per_module + j)`, so
/// the output is independent of worker count and `exec`. Mutants that fail the
/// legality check, and duplicates of an earlier mutant of the same module,
/// are skipped.
pub fn mutate_corpus(
    modules: &[SourceModule],
    choice: PatternChoice,
    per_module: usize,
    seed: u64,
    cfg: &MutationConfig,
    legality: &LegalityConfig,
    exec: Exec,
) -> Result<CorpusMutation, MutationError> {
    let per_module_results = par::map_indexed(exec, modules, |i, module| {
        let mut records = Vec::new();
        let mut skipped = Vec::new();
        let mut seen = HashSet::new();
        for j in 0..per_module {
            let task_seed = mix_seed(seed, (i * per_module + j) as u64);
            let pattern = match choice {
                PatternChoice::Fixed(p) => p,
                PatternChoice::Any => {
                    let available: Vec<BugPattern> = BugPattern::ALL
                        .into_iter()
                        .filter(|&p| !enumerate_sites(module, p, cfg).is_empty())
                        .collect();
                    let mut rng = SeededRng::new(splitmix64(task_seed ^ PATTERN_PICK_SALT));
                    match rng.choose(&available) {
                        Some(&p) => p,
                        None => {
                            skipped.push((module.id().to_string(), "no mutation sites".into()));
                            continue;
                        }
                    }
                }
            };
            let record = match inject(module, pattern, task_seed, cfg) {
                Ok(r) => r,
                Err(e) => {
                    skipped.push((module.id().to_string(), e.to_string()));
                    continue;
                }
            };
            match legality_verdict(&record, module, legality)? {
                Verdict::Legal => {
                    if seen.insert(record.mutated_text.clone()) {
                        records.push(record);
                    } else {
                        skipped.push((module.id().to_string(), "duplicate mutant".into()));
                    }
                }
                Verdict::Illegal(why) => skipped.push((module.id().to_string(), why.to_string())),
            }
        }
        Ok::<_, MutationError>((records, skipped))
    });
    let mut out = CorpusMutation::default();
    for r in per_module_results {
        let (records, skipped) = r?;
        out.records.extend(records);
        out.skipped.extend(skipped);
    }
    Ok(out)
}
