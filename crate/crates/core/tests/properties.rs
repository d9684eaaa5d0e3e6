// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use proptest::prelude::*;

use vbugloc_core::dataset::{
    build_sft_sample, build_simpo_sample, generate_thoughts, select_negative_line,
    validate_thought, GenerateOptions, PromptTemplate, DEFAULT_THOUGHT_TEMPLATE,
};
use vbugloc_core::dedup::{deduplicate, estimate_jaccard, shingles, signature, DedupConfig};
use vbugloc_core::eval::{aggregate, locate_line, pass_at_k, ResponseSet, ScoringMode, TestCase};
use vbugloc_core::gateway::{
    ChatRequest, EndpointConfig, Gateway, ScriptedTransport, TranscriptEntry, TranscriptTransport,
    TransportFailure,
};
use vbugloc_core::mutation::{
    enumerate_sites, inject, legality_check, BugPattern, LegalityConfig, MutationConfig,
};
use vbugloc_core::preference::{
    avg_logprob, batch_objective, simpo_grad_from_avg, simpo_loss, simpo_loss_from_avg,
    SimpoParams, TokenLogProbs,
};
use vbugloc_core::text::normalize_ws;
use vbugloc_core::verilog::{
    load_corpus, load_module, read_corpus, tokenize, LoadConfig, SourceModule, TokenKind,
};
use vbugloc_core::Exec;

fn corpus() -> &'static [SourceModule] {
    static MODULES: OnceLock<Vec<SourceModule>> = OnceLock::new();
    MODULES.get_or_init(|| {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini_corpus");
        load_corpus(&read_corpus(&dir).unwrap(), &LoadConfig::default()).modules
    })
}

fn pattern() -> impl Strategy<Value = BugPattern> {
    prop::sample::select(BugPattern::ALL.to_vec())
}

/// Text built from Verilog-ish fragments, including comments and strings.
fn verilogish() -> impl Strategy<Value = String> {
    let piece = prop::sample::select(vec![
        "module",
        "m",
        " ",
        "  ",
        "\n",
        "\t",
        "wire",
        "reg",
        "[7:0]",
        "a",
        "b_1",
        "<=",
        "=",
        "&&",
        "|",
        "+",
        "8'hFF",
        "4'b10x1",
        "12",
        "(",
        ")",
        ";",
        ",",
        "// note\n",
        "/* c * d */",
        "\"s t\"",
        "\"esc \\\" q\"",
        "@(posedge clk)",
        "begin",
        "end",
        "endmodule",
        "`define X 1\n",
    ]);
    prop::collection::vec(piece, 0..60).prop_map(|v| v.concat())
}

fn edit_distance_dp(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 0..=a.len() {
        d[i][0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            d[i][j] = (d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1)
                .min(d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]));
        }
    }
    d[a.len()][b.len()]
}

// ---------------------------------------------------------------- verilog

proptest! {
    #[test]
    fn lines_reproduce_raw_text(i in 0usize..12) {
        let m = &corpus()[i % corpus().len()];
        let joined: Vec<&str> = m.lines().iter().map(|l| l.text.as_str()).collect();
        let mut text = joined.join("\n");
        if m.has_trailing_newline() {
            text.push('\n');
        }
        prop_assert_eq!(text, m.raw_text());
        let reloaded = load_module(m.raw_text(), m.id(), &LoadConfig::default()).unwrap();
        prop_assert_eq!(&reloaded, m);
    }

    #[test]
    fn tokenize_is_deterministic_and_spans_do_not_overlap(text in verilogish()) {
        let first = tokenize(&text);
        prop_assert_eq!(&first, &tokenize(&text));
        if let Ok(tokens) = first {
            let opaque: Vec<(usize, usize)> = tokens
                .iter()
                .filter(|t| matches!(t.kind, TokenKind::Comment | TokenKind::StringLiteral))
                .map(|t| (t.offset, t.end_offset()))
                .collect();
            for t in &tokens {
                prop_assert_eq!(&text[t.offset..t.end_offset()], t.lexeme.as_str());
                if matches!(t.kind, TokenKind::Keyword | TokenKind::Identifier | TokenKind::Operator | TokenKind::Number) {
                    for &(s, e) in &opaque {
                        prop_assert!(t.end_offset() <= s || t.offset >= e, "{t:?} overlaps {s}..{e}");
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------- mutation

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn injection_changes_exactly_one_line(i in 0usize..12, p in pattern(), seed: u64) {
        let m = &corpus()[i % corpus().len()];
        let cfg = MutationConfig::default();
        let Ok(r) = inject(m, p, seed, &cfg) else { return Ok(()) };
        let before: Vec<&str> = m.raw_text().split('\n').collect();
        let after: Vec<&str> = r.mutated_text.split('\n').collect();
        prop_assert_eq!(before.len(), after.len());
        let changed: Vec<usize> = (0..before.len()).filter(|&k| before[k] != after[k]).map(|k| k + 1).collect();
        prop_assert_eq!(changed, vec![r.line_no]);
        prop_assert_eq!(after[r.line_no - 1], r.mutated_line.as_str());
        prop_assert_eq!(&inject(m, p, seed, &cfg).unwrap(), &r);
        if legality_check(&r, m, &LegalityConfig::default()).unwrap() {
            prop_assert!(tokenize(&r.mutated_text).is_ok());
        }
    }

    #[test]
    fn sites_avoid_comments_and_strings(i in 0usize..12, p in pattern()) {
        let m = &corpus()[i % corpus().len()];
        let starts: Vec<usize> = {
            let mut acc = 0;
            m.lines().iter().map(|l| { let s = acc; acc += l.text.len() + 1; s }).collect()
        };
        for site in enumerate_sites(m, p, &MutationConfig::default()) {
            let (s, e) = (starts[site.line - 1] + site.col_span.0, starts[site.line - 1] + site.col_span.1);
            prop_assert_eq!(&m.raw_text()[s..e], site.original.as_str());
            prop_assert!(site.replacement_candidates.iter().all(|c| *c != site.original));
            for t in m.tokens().iter().filter(|t| t.is_opaque()) {
                prop_assert!(e <= t.offset || s >= t.end_offset());
            }
        }
    }
}

#[test]
fn site_choice_is_uniform() {
    // Exactly k keyword sites, each with a single replacement.
    let k = 5;
    let mut src = String::from("module uni(input clk);\n");
    for j in 0..k {
        src.push_str(&format!("  wire w{j};\n"));
    }
    for j in 0..k {
        src.push_str(&format!("  assign w{j} = clk;\n"));
    }
    while src.lines().count() < 24 {
        src.push_str("  // padding\n");
    }
    src.push_str("endmodule\n");
    let m = load_module(&src, "uni", &LoadConfig::default()).unwrap();
    let cfg = MutationConfig::default();
    assert_eq!(
        enumerate_sites(&m, BugPattern::KeywordMisuse, &cfg).len(),
        k
    );

    let trials = 5000u64;
    let mut hits = HashMap::new();
    for s in 0..trials {
        let r = inject(&m, BugPattern::KeywordMisuse, s, &cfg).unwrap();
        *hits.entry(r.line_no).or_insert(0u64) += 1;
    }
    let p = 1.0 / k as f64;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    assert_eq!(hits.len(), k);
    for (line, &h) in &hits {
        let dev = (h as f64 - trials as f64 * p).abs();
        assert!(
            dev <= 4.0 * sigma,
            "line {line}: {h} hits, expected {} ± {:.1}",
            trials as f64 * p,
            4.0 * sigma
        );
    }
}

// ---------------------------------------------------------------- dedup

fn doc() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "assign", "wire", "x", "y", "<=", "+", ";", "8'd3", "always",
        ]),
        3..40,
    )
    .prop_map(|v| v.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jaccard_estimate_is_symmetric(a in doc(), b in doc(), seed: u64) {
        let sa = signature(&shingles(&a, 8), 128, seed).unwrap();
        let sb = signature(&shingles(&b, 8), 128, seed).unwrap();
        prop_assert_eq!(estimate_jaccard(&sa, &sb).unwrap(), estimate_jaccard(&sb, &sa).unwrap());
    }

    #[test]
    fn dedup_partitions_input_and_keeps_first(
        docs in prop::collection::vec(doc(), 1..25),
        dup_of in prop::collection::vec(any::<prop::sample::Index>(), 0..10),
        seed: u64,
    ) {
        let mut texts = docs.clone();
        for ix in &dup_of {
            let src = texts[ix.index(texts.len())].clone();
            texts.push(src);
        }
        let corpus: Vec<(String, String)> = texts.into_iter().enumerate().map(|(i, t)| (format!("d{i}"), t)).collect();
        let cfg = DedupConfig { seed, ..DedupConfig::default() };
        let out = deduplicate(&corpus, &cfg).unwrap();
        prop_assert_eq!(&out, &deduplicate(&corpus, &cfg).unwrap());

        let kept: BTreeSet<&str> = out.retained_ids(&corpus).into_iter().collect();
        let dropped: BTreeSet<&str> = out.report.iter().map(|p| p.dropped.as_str()).collect();
        prop_assert!(kept.is_disjoint(&dropped));
        prop_assert_eq!(kept.len() + dropped.len(), corpus.len());
        prop_assert_eq!(out.report.len(), dropped.len());

        // The first document with a given text is never dropped in favour of a later one.
        let mut seen = BTreeSet::new();
        for (id, text) in &corpus {
            if seen.insert(text.as_str()) {
                prop_assert!(!dropped.contains(id.as_str()) || out.report.iter().any(|p| p.dropped == *id && id_num(&p.kept) < id_num(id)));
            }
        }
        for p in &out.report {
            prop_assert!(id_num(&p.kept) < id_num(&p.dropped));
            prop_assert!(kept.contains(p.kept.as_str()));
        }
    }
}

fn id_num(id: &str) -> usize {
    id[1..].parse().unwrap()
}

// ---------------------------------------------------------------- dataset

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn labels_appear_as_prompt_lines(i in 0usize..12, p in pattern(), seed: u64, outputs in prop::collection::vec(".{0,30}", 0..6), numbered: bool) {
        let m = &corpus()[i % corpus().len()];
        let Ok(r) = inject(m, p, seed, &MutationConfig::default()) else { return Ok(()) };
        let sft = build_sft_sample(&r, "A design.", numbered);
        prop_assert!(sft.prompt.lines().any(|l| l.trim_end().ends_with(sft.label.as_str())));
        if !numbered {
            prop_assert!(sft.prompt.lines().any(|l| l.trim_end() == sft.label));
        }
        let s = build_simpo_sample(&r, "A design.", &outputs, seed, numbered).unwrap();
        prop_assert_ne!(&s.chosen, &s.rejected);
        for line in [&s.chosen, &s.rejected] {
            prop_assert!(s.prompt.lines().any(|l| l.trim_end().ends_with(line.as_str())));
        }
    }

    #[test]
    fn negative_is_never_the_buggy_line(
        lines in prop::collection::vec("[a-c ;]{0,6}", 2..10),
        outputs in prop::collection::vec("[a-c ;]{0,6}", 0..8),
        pick in any::<prop::sample::Index>(),
        seed: u64,
    ) {
        let buggy = pick.index(lines.len()) + 1;
        if let Ok(n) = select_negative_line(&outputs, &lines, buggy, seed) {
            prop_assert_ne!(n, buggy);
            prop_assert_ne!(normalize_ws(&lines[n - 1]), normalize_ws(&lines[buggy - 1]));
        }
    }

    #[test]
    fn padding_never_flips_a_valid_thought(
        pre in "[a-z ]{0,10}", post in "[a-z ]{0,10}", body in "[a-z =;]{1,20}",
        pad_l in " {0,4}", pad_r in " {0,4}",
    ) {
        let line = format!("{pre}x{post}");
        let thought = format!("{}\nso the answer follows.\nBuggy line: {line}", "reasoning ".repeat(25) + &body);
        let plain = validate_thought(&thought, &line);
        let padded = validate_thought(&thought, &format!("{pad_l}{line}{pad_r}"));
        if plain.valid {
            prop_assert!(padded.valid);
        }
        prop_assert!(!plain.valid || normalize_ws(plain.extracted_line.as_deref().unwrap()) == normalize_ws(&line));
    }
}

#[test]
fn thought_generation_is_reproducible() {
    let modules = corpus();
    let records: Vec<_> = modules
        .iter()
        .enumerate()
        .filter_map(|(i, m)| {
            inject(
                m,
                BugPattern::ALL[i % 5],
                i as u64,
                &MutationConfig::default(),
            )
            .ok()
        })
        .collect();
    let desc: HashMap<String, String> = modules
        .iter()
        .map(|m| (m.id().to_string(), format!("{} design", m.name())))
        .collect();
    let run = || {
        let entries = records
            .iter()
            .map(|r| TranscriptEntry {
                pattern: r.mutated_text.clone(),
                responses: vec![format!(
                    "{}\nBuggy line: {}",
                    "Step through the logic. ".repeat(12),
                    r.mutated_line
                )],
                failures: vec![],
            })
            .collect();
        let gw = Gateway::new(EndpointConfig::default(), TranscriptTransport::new(entries));
        let out = generate_thoughts(
            &records,
            &desc,
            &gw,
            &PromptTemplate::new(DEFAULT_THOUGHT_TEMPLATE),
            &GenerateOptions::default(),
        )
        .unwrap();
        out.into_iter()
            .map(|o| o.result.unwrap())
            .collect::<Vec<_>>()
    };
    let a = run();
    assert!(a.iter().all(|t| t.valid));
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&run()).unwrap()
    );
}

// ---------------------------------------------------------------- preference

fn logprobs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..=0.0, 1..30)
}

proptest! {
    #[test]
    fn repeating_tokens_keeps_average(v in logprobs(), k in 1usize..6) {
        let once = avg_logprob(&TokenLogProbs::new(v.clone()).unwrap()).unwrap();
        let rep: Vec<f64> = v.iter().flat_map(|&x| std::iter::repeat(x).take(k)).collect();
        let many = avg_logprob(&TokenLogProbs::new(rep).unwrap()).unwrap();
        prop_assert!((once - many).abs() <= 1e-12 * once.abs().max(1.0));
    }

    #[test]
    fn loss_is_monotone(pw in -15.0f64..0.0, pl in -15.0f64..0.0, d in 0.01f64..2.0, beta in 0.1f64..4.0, gamma in 0.0f64..3.0) {
        let p = SimpoParams { beta, gamma };
        let base = simpo_loss_from_avg(pw, pl, &p).0;
        prop_assert!(simpo_loss_from_avg(pw + d, pl, &p).0 < base);
        prop_assert!(simpo_loss_from_avg(pw, pl + d, &p).0 > base);
        let stricter = SimpoParams { beta, gamma: gamma + d };
        prop_assert!(simpo_loss_from_avg(pw, pl, &stricter).0 > base);
    }

    #[test]
    fn gradients_match_finite_differences(pw in -10.0f64..0.0, pl in -10.0f64..0.0, beta in 0.1f64..5.0, gamma in 0.0f64..3.0) {
        let p = SimpoParams { beta, gamma };
        let (_, m) = simpo_loss_from_avg(pw, pl, &p);
        prop_assume!(m.abs() <= 30.0);
        let h = 1e-6;
        let (gw, gl) = simpo_grad_from_avg(pw, pl, &p);
        let fw = (simpo_loss_from_avg(pw + h, pl, &p).0 - simpo_loss_from_avg(pw - h, pl, &p).0) / (2.0 * h);
        let fl = (simpo_loss_from_avg(pw, pl + h, &p).0 - simpo_loss_from_avg(pw, pl - h, &p).0) / (2.0 * h);
        prop_assert!((fw - gw).abs() <= 1e-6 * gw.abs(), "{fw} vs {gw}");
        prop_assert!((fl - gl).abs() <= 1e-6 * gl.abs(), "{fl} vs {gl}");
        prop_assert_eq!(gw + gl, 0.0);
    }

    #[test]
    fn valid_inputs_give_finite_results(w in logprobs(), l in logprobs(), beta in 1e-3f64..100.0, gamma in 0.0f64..100.0) {
        let p = SimpoParams::new(beta, gamma).unwrap();
        let (w, l) = (TokenLogProbs::new(w).unwrap(), TokenLogProbs::new(l).unwrap());
        let (loss, m) = simpo_loss(&w, &l, &p).unwrap();
        prop_assert!(loss.is_finite() && m.is_finite() && loss >= 0.0);
        prop_assert!(batch_objective(&[(w, l)], &p).unwrap().is_finite());
    }
}

// ---------------------------------------------------------------- eval

proptest! {
    #[test]
    fn pass_at_k_is_monotone(n in 1usize..40, c in 0usize..40, k in 1usize..40) {
        let c = c.min(n);
        let k = k.min(n);
        let v = pass_at_k(n, c, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        if k < n {
            prop_assert!(pass_at_k(n, c, k + 1).unwrap() >= v);
        }
        if c < n {
            prop_assert!(pass_at_k(n, c + 1, k).unwrap() >= v);
        }
        prop_assert_eq!(pass_at_k(n, c, 1).unwrap(), c as f64 / n as f64);
        prop_assert_eq!(pass_at_k(n, 0, k).unwrap(), 0.0);
        if c >= 1 {
            prop_assert_eq!(pass_at_k(n, c, n).unwrap(), 1.0);
        }
    }

    #[test]
    fn located_line_is_a_global_minimum(output in "[ab ;=]{0,12}", lines in prop::collection::vec("[ab ;=]{0,10}", 1..8)) {
        prop_assume!(lines.iter().any(|l| !normalize_ws(l).is_empty()));
        let got = locate_line(&output, &lines).unwrap();
        let o = normalize_ws(&output);
        let best = lines
            .iter()
            .filter(|l| !normalize_ws(l).is_empty())
            .map(|l| edit_distance_dp(&o, &normalize_ws(l)))
            .min()
            .unwrap();
        prop_assert!(!normalize_ws(&lines[got - 1]).is_empty());
        prop_assert_eq!(edit_distance_dp(&o, &normalize_ws(&lines[got - 1])), best);
    }

    #[test]
    fn aggregate_ignores_case_order(
        hits in prop::collection::vec((0usize..6, 0usize..5), 1..15),
        perm in Just(()).prop_perturb(|_, mut rng| rng.next_u64()),
    ) {
        let code = "module t;\n  assign a = b;\n  assign c = d;\n  assign e = f;\nendmodule";
        let patterns = BugPattern::ALL;
        let mut cases = Vec::new();
        let mut responses = Vec::new();
        for (i, &(c, pat)) in hits.iter().enumerate() {
            cases.push(TestCase {
                case_id: format!("c{i:02}"),
                module_id: String::new(),
                design_description: "d".into(),
                buggy_code: code.into(),
                buggy_line_no: 3,
                buggy_line: "  assign c = d;".into(),
                pattern: patterns[pat],
            });
            let outputs = (0..6).map(|j| if j < c { "assign c = d;" } else { "assign e = f;" }.to_string()).collect();
            responses.push(ResponseSet { case_id: format!("c{i:02}"), outputs, temperature: 0.3 });
        }
        let a = aggregate(&cases, &responses, &[1, 5], ScoringMode::EditDistance).unwrap();
        let mut shuffled = cases.clone();
        let mut r = perm;
        for i in (1..shuffled.len()).rev() {
            r = r.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (r >> 33) as usize % (i + 1));
        }
        responses.reverse();
        let b = aggregate(&shuffled, &responses, &[1, 5], ScoringMode::EditDistance).unwrap();
        prop_assert_eq!(a, b);
    }
}

// ---------------------------------------------------------------- gateway

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retries_are_bounded(max_retries in 0u32..5, failures in 0usize..8, n in 1u32..4) {
        let mut script: Vec<Result<Vec<String>, TransportFailure>> = (0..failures).map(|_| Err(TransportFailure::Timeout)).collect();
        script.extend((0..n).map(|i| Ok(vec![format!("r{i}")])));
        let cfg = EndpointConfig { max_retries, backoff_base_secs: 0.0, ..EndpointConfig::default() };
        let gw = Gateway::new(cfg, ScriptedTransport::new(script));
        let res = gw.complete(&ChatRequest::new("q").with_n(n));
        prop_assert_eq!(res.is_ok(), failures <= max_retries as usize);
        if res.is_err() {
            prop_assert_eq!(gw.attempts(), max_retries as usize + 1);
        }
    }

    #[test]
    fn transcript_mock_is_deterministic(prompt in "[a-z ]{0,20}", n in 1u32..6, responses in prop::collection::vec("[a-z]{1,5}", 1..4)) {
        let entries = vec![TranscriptEntry { pattern: String::new(), responses, failures: vec![] }];
        let req = ChatRequest::new(prompt).with_n(n);
        let a = Gateway::new(EndpointConfig::default(), TranscriptTransport::new(entries.clone())).complete(&req).unwrap();
        let b = Gateway::new(EndpointConfig::default(), TranscriptTransport::new(entries)).complete(&req).unwrap();
        prop_assert_eq!(a.len(), n as usize);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn executors_agree() {
    let pairs: Vec<_> = (0..257)
        .map(|i| {
            let w = TokenLogProbs::new(vec![-(i as f64) / 50.0, -0.25]).unwrap();
            let l = TokenLogProbs::new(vec![-((i * 7 % 13) as f64) / 3.0]).unwrap();
            (w, l)
        })
        .collect();
    let p = SimpoParams::default();
    assert_eq!(
        vbugloc_core::preference::batch_objective_with(&pairs, &p, Exec::Sequential).unwrap(),
        vbugloc_core::preference::batch_objective_with(&pairs, &p, Exec::Parallel).unwrap()
    );
}
