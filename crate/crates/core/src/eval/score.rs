// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};

use crate::mutation::BugPattern;
use crate::par::{self, Exec};
use crate::text::{levenshtein, normalize_ws};

use super::{CaseScore, EvalError, EvalReport, ResponseSet, ScoringMode, TestCase};

/// 1-based index of the non-blank line closest to `output` in edit distance,
/// both sides whitespace-normalized. Ties go to the smaller index.
pub fn locate_line<S: AsRef<str>>(output: &str, code_lines: &[S]) -> Result<usize, EvalError> {
    let out = normalize_ws(output);
    let mut best: Option<(usize, usize)> = None;
    for (i, line) in code_lines.iter().enumerate() {
        let norm = normalize_ws(line.as_ref());
        if norm.is_empty() {
            continue;
        }
        let d = levenshtein(&out, &norm);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, i + 1));
            if d == 0 {
                break;
            }
        }
    }
    best.map(|(_, i)| i).ok_or(EvalError::AllLinesBlank)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Unbiased pass@k estimate `1 − C(n−c, k) / C(n, k)`.
///
/// Evaluated as the product `Π (n−c−i)/(n−i)` over `i < k`. The product is
/// kept as a reduced integer fraction while it fits in 128 bits, so the
/// returned value is the correctly rounded rational; only very large `n`
/// falls back to floating-point accumulation.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, EvalError> {
    if c > n || k == 0 || k > n {
        return Err(EvalError::Domain { n, c, k });
    }
    if c == 0 {
        return Ok(0.0);
    }
    if n - c < k {
        return Ok(1.0);
    }
    let (mut num, mut den) = (1u128, 1u128);
    for i in 0..k {
        let a = (n - c - i) as u128;
        let b = (n - i) as u128;
        match (num.checked_mul(a), den.checked_mul(b)) {
            (Some(x), Some(y)) => {
                let g = gcd(x, y);
                num = x / g;
                den = y / g;
            }
            _ => return Ok(pass_at_k_float(n, c, k)),
        }
    }
    Ok((den - num) as f64 / den as f64)
}

fn pass_at_k_float(n: usize, c: usize, k: usize) -> f64 {
    let prod: f64 = (0..k)
        .map(|i| (n - c - i) as f64 / (n - i) as f64)
        .product();
    (1.0 - prod).clamp(0.0, 1.0)
}

fn is_correct(output: &str, case: &TestCase, lines: &[String], mode: ScoringMode) -> bool {
    match mode {
        ScoringMode::EditDistance => locate_line(output, lines) == Ok(case.buggy_line_no),
        ScoringMode::Substring => {
            let target = normalize_ws(&case.buggy_line);
            !target.is_empty() && normalize_ws(output).contains(&target)
        }
    }
}

/// Number of outputs judged correct.
pub fn score_case(
    case: &TestCase,
    responses: &ResponseSet,
    mode: ScoringMode,
) -> Result<usize, EvalError> {
    if case.case_id != responses.case_id {
        return Err(EvalError::CaseMismatch {
            case: case.case_id.clone(),
            responses: responses.case_id.clone(),
        });
    }
    let lines = case.code_lines();
    if mode == ScoringMode::EditDistance && lines.iter().all(|l| l.trim().is_empty()) {
        return Err(EvalError::AllLinesBlank);
    }
    Ok(responses
        .outputs
        .iter()
        .filter(|o| is_correct(o, case, &lines, mode))
        .count())
}

/// Mean of `values` independent of their order: sorted, then tree-summed.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    par::pairwise_sum(Exec::Sequential, &values) / values.len() as f64
}

pub(super) fn report_from_scores(
    mut per_case: Vec<CaseScore>,
    ks: &[usize],
) -> Result<EvalReport, EvalError> {
    per_case.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    if per_case.is_empty() {
        log::warn!("no scored cases; all pass@k values are reported as 0");
    }
    let mut pass_at = BTreeMap::new();
    for &k in ks {
        let vals = per_case
            .iter()
            .map(|s| pass_at_k(s.n, s.c, k))
            .collect::<Result<Vec<_>, _>>()?;
        pass_at.insert(k, order_free_mean(vals));
    }
    let mut by_pattern: BTreeMap<BugPattern, Vec<f64>> = BTreeMap::new();
    for s in &per_case {
        by_pattern
            .entry(s.pattern)
            .or_default()
            .push(pass_at_k(s.n, s.c, 1)?);
    }
    let per_pattern_pass1 = by_pattern
        .into_iter()
        .map(|(p, v)| (p, order_free_mean(v)))
        .collect();
    Ok(EvalReport {
        per_case,
        pass_at,
        per_pattern_pass1,
        ..EvalReport::default()
    })
}

pub fn aggregate(
    cases: &[TestCase],
    response_sets: &[ResponseSet],
    ks: &[usize],
    mode: ScoringMode,
) -> Result<EvalReport, EvalError> {
    aggregate_with(cases, response_sets, ks, mode, Exec::default())
}

/// Score every case against its response set and summarize. Response sets
/// whose id matches no case are ignored. The report does not depend on the
/// order of `cases`.
pub fn aggregate_with(
    cases: &[TestCase],
    response_sets: &[ResponseSet],
    ks: &[usize],
    mode: ScoringMode,
    exec: Exec,
) -> Result<EvalReport, EvalError> {
    let by_id: HashMap<&str, &ResponseSet> = response_sets
        .iter()
        .map(|r| (r.case_id.as_str(), r))
        .collect();
    let mut paired = Vec::with_capacity(cases.len());
    for case in cases {
        let r = by_id
            .get(case.case_id.as_str())
            .ok_or_else(|| EvalError::MissingResponses(case.case_id.clone()))?;
        if r.outputs.is_empty() {
            return Err(EvalError::EmptyResponses(case.case_id.clone()));
        }
        paired.push((case, *r));
    }
    let scores = par::map(exec, &paired, |(case, r)| {
        score_case(case, r, mode).map(|c| CaseScore {
            case_id: case.case_id.clone(),
            pattern: case.pattern,
            n: r.outputs.len(),
            c,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    report_from_scores(scores, ks)
}

/// Share of cases whose list is present and contains the buggy line number.
/// A missing list counts as a miss.
pub fn hit_rate(cases: &[TestCase], line_lists: &HashMap<String, Option<Vec<usize>>>) -> f64 {
    if cases.is_empty() {
        log::warn!("hit rate over zero cases is reported as 0");
        return 0.0;
    }
    let hits = cases
        .iter()
        .filter(|c| {
            matches!(line_lists.get(&c.case_id), Some(Some(list)) if list.contains(&c.buggy_line_no))
        })
        .count();
    hits as f64 / cases.len() as f64
}
