// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use vbugloc_core::dataset::{
    build_pt_sample, build_sft_sample, build_simpo_sample, generate_thoughts, sample_outputs,
    within_char_cap, DatasetError, PromptTemplate, SftRecord,
};
use vbugloc_core::dedup::{deduplicate_with, LshParams};
use vbugloc_core::eval::{
    aggregate_with, hit_rate, report_file_name, run_eval, EvalReport, ResponseSet, ScoringMode,
    TestCase,
};
use vbugloc_core::gateway::{EndpointConfig, Gateway, GatewayError, TransportKind};
use vbugloc_core::mutation::{
    build_testset, mutate_corpus, parse_counts, BugPattern, MutationError, MutationRecord,
    NumericMode, PatternChoice,
};
use vbugloc_core::preference::{avg_logprob, batch_objective_with, simpo_loss, TokenLogProbs};
use vbugloc_core::rng::mix_seed;
use vbugloc_core::verilog::{load_corpus, read_corpus, LoadedCorpus};
use vbugloc_core::Exec;

use crate::config::RunConfig;
use crate::error::{invalid, CliError};
use crate::output::{
    check_outputs, read_descriptions, read_records, write_document, write_records, Meta,
};

pub struct Context {
    pub exec: Exec,
    pub jobs: Option<usize>,
    pub config_path: Option<PathBuf>,
}

impl Context {
    fn inputs<'a>(&'a self, mut paths: Vec<&'a Path>) -> Vec<&'a Path> {
        if let Some(c) = &self.config_path {
            paths.push(c);
        }
        paths
    }
}

fn require_seed(flag: Option<u64>, cfg: &mut RunConfig, command: &str) -> Result<u64, CliError> {
    if let Some(s) = flag {
        cfg.seed = Some(s);
    }
    cfg.seed.ok_or_else(|| {
        CliError::Usage(format!(
            "`{command}` is randomized and needs a seed: pass `--seed 7` or set `seed = 7` in the config file"
        ))
    })
}

fn seeds(seed: u64) -> BTreeMap<&'static str, u64> {
    BTreeMap::from([("seed", seed)])
}

fn mutation_error(e: MutationError) -> CliError {
    match e {
        MutationError::ExternalToolFailure { .. } => CliError::External(e.to_string()),
        other => invalid(other),
    }
}

fn load_modules(
    path: &Path,
    cfg: &RunConfig,
) -> Result<(LoadedCorpus, Vec<Option<String>>), CliError> {
    let entries = read_corpus(path).map_err(invalid)?;
    let loaded = load_corpus(&entries, &cfg.load);
    for (id, err) in &loaded.rejected {
        log::info!("skipping module {id}: {err}");
    }
    if !loaded.rejected.is_empty() {
        eprintln!(
            "loaded {} modules, skipped {} (too short, too long or not a module)",
            loaded.modules.len(),
            loaded.rejected.len()
        );
    }
    if loaded.modules.is_empty() {
        return Err(CliError::Invalid(format!(
            "{}: no usable modules",
            path.display()
        )));
    }
    let by_id: HashMap<&str, Option<String>> = entries
        .iter()
        .map(|e| (e.id.as_str(), e.description.clone()))
        .collect();
    let descriptions = loaded
        .modules
        .iter()
        .map(|m| by_id.get(m.id()).cloned().flatten())
        .collect();
    Ok((loaded, descriptions))
}

// ---------------------------------------------------------------- gateway

#[derive(Debug, Args)]
pub struct GatewayArgs {
    /// `http` for an OpenAI-compatible endpoint, `mock` to replay a transcript
    /// without any network I/O.
    #[arg(long, value_parser = ["http", "mock"])]
    transport: Option<String>,
    /// Transcript JSONL for the mock transport.
    #[arg(long, value_name = "FILE")]
    transcript: Option<PathBuf>,
    /// Endpoint base URL, e.g. https://api.openai.com/v1.
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Name of the environment variable that holds the API key.
    #[arg(long, value_name = "VAR")]
    api_key_env: Option<String>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Per-request timeout in seconds.
    #[arg(long, value_name = "SECS")]
    timeout: Option<f64>,
}

impl GatewayArgs {
    fn apply(self, g: &mut EndpointConfig) {
        if let Some(t) = self.transport {
            g.transport = if t == "mock" {
                TransportKind::Mock
            } else {
                TransportKind::Http
            };
        }
        if self.transcript.is_some() {
            g.transcript = self.transcript;
        }
        if let Some(v) = self.base_url {
            g.base_url = v;
        }
        if let Some(v) = self.model {
            g.model = v;
        }
        if let Some(v) = self.api_key_env {
            g.api_key_env = v;
        }
        if let Some(v) = self.max_retries {
            g.max_retries = v;
        }
        if let Some(v) = self.timeout {
            g.timeout_secs = v;
        }
    }
}

fn gateway(cfg: &EndpointConfig) -> Result<Gateway, CliError> {
    Gateway::from_config(cfg).map_err(|e| match e {
        GatewayError::InvalidConfig(m) => CliError::Usage(format!(
            "{m} (e.g. `--transport mock --transcript t.jsonl`)"
        )),
        other => CliError::External(other.to_string()),
    })
}

fn dataset_error(e: DatasetError) -> CliError {
    match e {
        DatasetError::AllFailed { .. } => CliError::External(e.to_string()),
        other => invalid(other),
    }
}

// ---------------------------------------------------------------- dedup

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// Corpus: JSONL of {"id","text"} or a directory of .v files.
    #[arg(long, short)]
    input: PathBuf,
    /// Retained documents, JSONL {"id","text"}.
    #[arg(long, short)]
    out: PathBuf,
    /// Duplicate report, JSONL {"kept","dropped","similarity"}.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Similarity at or above which a later document is dropped.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    /// Shingle width in bytes.
    #[arg(long)]
    shingle_k: Option<usize>,
    /// Seed of the MinHash family.
    #[arg(long)]
    seed: Option<u64>,
    /// Confirm candidate pairs with exact Jaccard similarity.
    #[arg(long)]
    exact_verify: bool,
}

pub fn run_dedup(a: DedupArgs, mut cfg: RunConfig, ctx: &Context) -> Result<(), CliError> {
    let d = &mut cfg.dedup;
    if let Some(v) = a.threshold {
        d.threshold = v;
    }
    d.lsh = LshParams {
        bands: a.bands.unwrap_or(d.lsh.bands),
        rows: a.rows.unwrap_or(d.lsh.rows),
    };
    if let Some(v) = a.shingle_k {
        d.shingle_k = v;
    }
    if let Some(v) = a.seed {
        d.seed = v;
    }
    d.exact_verify |= a.exact_verify;
    let mut outs = vec![a.out.as_path()];
    outs.extend(a.report.as_deref());
    check_outputs(&outs, &[&a.input])?;

    let entries = read_corpus(&a.input).map_err(invalid)?;
    let corpus: Vec<(String, String)> = entries
        .iter()
        .map(|e| (e.id.clone(), e.text.clone()))
        .collect();
    let outcome = deduplicate_with(&corpus, &cfg.dedup, ctx.exec).map_err(|e| {
        CliError::Usage(format!("{e} (e.g. `--threshold 0.7 --bands 16 --rows 8`)"))
    })?;
    let retained: Vec<_> = outcome
        .retained
        .iter()
        .map(|&i| entries[i].clone())
        .collect();
    let meta = Meta {
        command: "dedup",
        cfg: &cfg,
        seeds: BTreeMap::from([("minhash_seed", cfg.dedup.seed)]),
        inputs: ctx.inputs(vec![&a.input]),
        summary: json!({"documents": entries.len(), "retained": retained.len(), "dropped": outcome.report.len()}),
    };
    write_records(&a.out, &retained, &meta)?;
    if let Some(r) = &a.report {
        write_records(r, &outcome.report, &meta)?;
    }
    eprintln!(
        "dedup: kept {} of {} documents",
        retained.len(),
        entries.len()
    );
    Ok(())
}

// ---------------------------------------------------------------- mutate

#[derive(Debug, Args)]
pub struct MutationArgs {
    /// Shell command that must accept each mutant; `{}` is the mutant's path.
    #[arg(long, value_name = "CMD")]
    synth_command: Option<String>,
    /// Allow `&`/`|` to swap with `&&`/`||`.
    #[arg(long)]
    allow_cross_class: bool,
    /// `step` (±1 width/value) or `randomize`.
    #[arg(long, value_parser = ["step", "randomize"])]
    numeric_mode: Option<String>,
    /// Modules with fewer lines are skipped.
    #[arg(long)]
    min_lines: Option<usize>,
}

impl MutationArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if self.synth_command.is_some() {
            cfg.legality.synth_command = self.synth_command;
        }
        cfg.mutation.allow_cross_class_ops |= self.allow_cross_class;
        if let Some(m) = self.numeric_mode {
            cfg.mutation.numeric_mode = if m == "randomize" {
                NumericMode::Randomize
            } else {
                NumericMode::Step
            };
        }
        if let Some(n) = self.min_lines {
            cfg.load.min_lines = n;
        }
    }
}

#[derive(Debug, Args)]
pub struct MutateArgs {
    /// Corpus: JSONL of {"id","text"} or a directory of .v files.
    #[arg(long)]
    corpus: PathBuf,
    /// Output JSONL; a `<out>.meta.json` sidecar is written next to it.
    #[arg(long, short)]
    out: PathBuf,
    /// operator, numeric, keyword, variable, edge, or any.
    #[arg(long)]
    pattern: Option<String>,
    /// Bugs attempted per module.
    #[arg(long)]
    per_module: Option<usize>,
    /// Base seed [default: `seed` in the config file].
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    mutation: MutationArgs,
}

fn pattern_choice(name: &str) -> Result<PatternChoice, CliError> {
    if name.eq_ignore_ascii_case("any") {
        return Ok(PatternChoice::Any);
    }
    name.parse::<BugPattern>().map(PatternChoice::Fixed).map_err(|e| {
        CliError::Usage(format!(
            "{e}; expected one of operator, numeric, keyword, variable, edge, any (e.g. `--pattern operator`)"
        ))
    })
}

pub fn run_mutate(a: MutateArgs, mut cfg: RunConfig, ctx: &Context) -> Result<(), CliError> {
    let seed = require_seed(a.seed, &mut cfg, "mutate")?;
    if let Some(p) = a.pattern {
        cfg.mutate.pattern = p;
    }
    if let Some(n) = a.per_module {
        cfg.mutate.per_module = n;
    }
    a.mutation.apply(&mut cfg);
    let choice = pattern_choice(&cfg.mutate.pattern)?;
    check_outputs(&[&a.out], &[&a.corpus])?;

    let (loaded, _) = load_modules(&a.corpus, &cfg)?;
    let out = mutate_corpus(
        &loaded.modules,
        choice,
        cfg.mutate.per_module,
        seed,
        &cfg.mutation,
        &cfg.legality,
        ctx.exec,
    )
    .map_err(mutation_error)?;
    for (id, why) in &out.skipped {
        log::info!("{id}: {why}");
    }
    let meta = Meta {
        command: "mutate",
        cfg: &cfg,
        seeds: seeds(seed),
        inputs: ctx.inputs(vec![&a.corpus]),
        summary: json!({"modules": loaded.modules.len(), "records": out.records.len(), "skipped": out.skipped.len()}),
    };
    write_records(&a.out, &out.records, &meta)?;
    eprintln!(
        "mutate: {} records from {} modules ({} attempts skipped)",
        out.records.len(),
        loaded.modules.len(),
        out.skipped.len()
    );
    Ok(())
}

// ---------------------------------------------------------------- build-testset

#[derive(Debug, Args)]
pub struct BuildTestsetArgs {
    /// Corpus: JSONL of {"id","text","description"?} or a directory of .v files.
    #[arg(long)]
    corpus: PathBuf,
    /// Design descriptions, JSONL {"id","description"}.
    #[arg(long)]
    descriptions: Option<PathBuf>,
    /// Cases per pattern, e.g. operator=25,numeric=26,variable=24,keyword=13,edge=14.
    #[arg(long)]
    counts: Option<String>,
    /// Base seed [default: `seed` in the config file].
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSONL; a `<out>.meta.json` sidecar is written next to it.
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    mutation: MutationArgs,
}

pub fn run_build_testset(
    a: BuildTestsetArgs,
    mut cfg: RunConfig,
    ctx: &Context,
) -> Result<(), CliError> {
    let seed = require_seed(a.seed, &mut cfg, "build-testset")?;
    if let Some(c) = a.counts {
        cfg.testset.counts = c;
    }
    a.mutation.apply(&mut cfg);
    let counts = parse_counts(&cfg.testset.counts).map_err(|e| {
        CliError::Usage(format!(
            "--counts: {e} (e.g. `--counts operator=25,numeric=26,variable=24,keyword=13,edge=14`)"
        ))
    })?;
    let mut inputs = vec![a.corpus.as_path()];
    inputs.extend(a.descriptions.as_deref());
    check_outputs(&[&a.out], &inputs)?;

    let (loaded, embedded) = load_modules(&a.corpus, &cfg)?;
    let external = read_descriptions(a.descriptions.as_deref())?;
    let mut missing = 0usize;
    let corpus: Vec<_> = loaded
        .modules
        .into_iter()
        .zip(embedded)
        .map(|(m, d)| {
            let d = d
                .or_else(|| external.get(m.id()).cloned())
                .unwrap_or_else(|| {
                    missing += 1;
                    String::new()
                });
            (m, d)
        })
        .collect();
    if missing > 0 {
        log::warn!("{missing} modules have no design description");
    }
    let cases = build_testset(&corpus, &counts, seed, &cfg.mutation, &cfg.legality)
        .map_err(mutation_error)?;
    let mut histogram: BTreeMap<BugPattern, usize> = BTreeMap::new();
    for c in &cases {
        *histogram.entry(c.pattern).or_default() += 1;
    }
    let meta = Meta {
        command: "build-testset",
        cfg: &cfg,
        seeds: seeds(seed),
        inputs: ctx.inputs(inputs),
        summary: json!({"cases": cases.len(), "per_pattern": histogram}),
    };
    write_records(&a.out, &cases, &meta)?;
    eprintln!("build-testset: {} cases", cases.len());
    Ok(())
}

// ---------------------------------------------------------------- datasets

#[derive(Debug, Args)]
pub struct RecordInputs {
    /// Mutation records from `mutate`.
    #[arg(long)]
    records: PathBuf,
    /// Design descriptions, JSONL {"id","description"}.
    #[arg(long)]
    descriptions: Option<PathBuf>,
    /// Output JSONL; a `<out>.meta.json` sidecar is written next to it.
    #[arg(long, short)]
    out: PathBuf,
    /// Drop samples longer than this many characters.
    #[arg(long)]
    max_chars: Option<usize>,
}

struct LoadedRecords {
    records: Vec<MutationRecord>,
    descriptions: HashMap<String, String>,
}

impl RecordInputs {
    fn load(
        &self,
        cfg: &mut RunConfig,
        extra_outputs: &[&Path],
    ) -> Result<LoadedRecords, CliError> {
        if self.max_chars.is_some() {
            cfg.dataset.max_chars = self.max_chars;
        }
        let mut outs = vec![self.out.as_path()];
        outs.extend_from_slice(extra_outputs);
        check_outputs(&outs, &self.inputs())?;
        let records: Vec<MutationRecord> = read_records(&self.records)?;
        let descriptions = read_descriptions(self.descriptions.as_deref())?;
        let missing = records
            .iter()
            .filter(|r| !descriptions.contains_key(&r.module_id))
            .count();
        if missing > 0 {
            log::warn!("{missing} records have no design description");
        }
        Ok(LoadedRecords {
            records,
            descriptions,
        })
    }

    fn inputs(&self) -> Vec<&Path> {
        let mut v = vec![self.records.as_path()];
        v.extend(self.descriptions.as_deref());
        v
    }
}

impl LoadedRecords {
    fn description(&self, r: &MutationRecord) -> &str {
        self.descriptions
            .get(&r.module_id)
            .map(String::as_str)
            .unwrap_or("")
    }
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

impl SamplingArgs {
    fn apply(self, cfg: &mut RunConfig, ctx: &Context) {
        if let Some(t) = self.temperature {
            cfg.generate.temperature = t;
        }
        if let Some(m) = self.max_tokens {
            cfg.generate.max_tokens = m;
        }
        if let Some(j) = ctx.jobs {
            cfg.generate.in_flight = j;
        }
        self.gateway.apply(&mut cfg.gateway);
    }
}

#[derive(Debug, Args)]
pub struct BuildPtArgs {
    #[command(flatten)]
    io: RecordInputs,
    /// Also write every generated thought with its verdict.
    #[arg(long)]
    thoughts_out: Option<PathBuf>,
    /// Prompt template with {description}, {code} and {buggy_line}.
    #[arg(long)]
    template: Option<PathBuf>,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Serialize)]
struct ThoughtLog<'a> {
    module_id: &'a str,
    line_no: usize,
    pattern: BugPattern,
    #[serde(skip_serializing_if = "Option::is_none")]
    thought_text: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extracted_line: Option<&'a str>,
    valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn run_build_pt(a: BuildPtArgs, mut cfg: RunConfig, ctx: &Context) -> Result<(), CliError> {
    a.sampling.apply(&mut cfg, ctx);
    let extra: Vec<&Path> = a.thoughts_out.iter().map(PathBuf::as_path).collect();
    let data = a.io.load(&mut cfg, &extra)?;
    let template = match &a.template {
        Some(p) => PromptTemplate::new(
            std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        ),
        None => PromptTemplate::default(),
    };
    let gw = gateway(&cfg.gateway)?;
    let outcomes = generate_thoughts(
        &data.records,
        &data.descriptions,
        &gw,
        &template,
        &cfg.generate,
    )
    .map_err(dataset_error)?;

    let mut samples = Vec::new();
    let mut logs = Vec::new();
    let (mut invalid_thoughts, mut failed, mut too_long) = (0, 0, 0);
    for o in &outcomes {
        let mut log = ThoughtLog {
            module_id: &o.record.module_id,
            line_no: o.record.line_no,
            pattern: o.record.pattern,
            thought_text: None,
            extracted_line: None,
            valid: false,
            error: None,
        };
        match &o.result {
            Ok(t) => {
                log.thought_text = Some(&t.thought_text);
                log.extracted_line = t.extracted_line.as_deref();
                log.valid = t.valid;
                match build_pt_sample(&o.record, data.description(&o.record), t) {
                    Ok(s) if within_char_cap(&s.text, cfg.dataset.max_chars) => samples.push(s),
                    Ok(_) => too_long += 1,
                    Err(_) => invalid_thoughts += 1,
                }
            }
            Err(e) => {
                failed += 1;
                log.error = Some(e.to_string());
            }
        }
        logs.push(log);
    }
    let mut inputs = a.io.inputs();
    inputs.extend(a.template.as_deref());
    let meta = Meta {
        command: "build-pt",
        cfg: &cfg,
        seeds: BTreeMap::new(),
        inputs: ctx.inputs(inputs),
        summary: json!({"records": outcomes.len(), "samples": samples.len(), "invalid_thoughts": invalid_thoughts, "request_failures": failed, "over_length": too_long}),
    };
    write_records(&a.io.out, &samples, &meta)?;
    if let Some(p) = &a.thoughts_out {
        write_records(p, &logs, &meta)?;
    }
    eprintln!(
        "build-pt: {} samples, {invalid_thoughts} rejected thoughts, {failed} failed requests",
        samples.len()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct BuildSftArgs {
    #[command(flatten)]
    io: RecordInputs,
    /// Prefix code lines with their numbers in the prompt.
    #[arg(long)]
    number_lines: bool,
}

pub fn run_build_sft(a: BuildSftArgs, mut cfg: RunConfig, ctx: &Context) -> Result<(), CliError> {
    cfg.generate.number_lines |= a.number_lines;
    let data = a.io.load(&mut cfg, &[])?;
    let rows: Vec<SftRecord> = data
        .records
        .iter()
        .map(|r| build_sft_sample(r, data.description(r), cfg.generate.number_lines))
        .filter(|s| within_char_cap(&s.prompt, cfg.dataset.max_chars))
        .map(|s| s.to_record())
        .collect();
    let meta = Meta {
        command: "build-sft",
        cfg: &cfg,
        seeds: BTreeMap::new(),
        inputs: ctx.inputs(a.io.inputs()),
        summary: json!({"records": data.records.len(), "samples": rows.len()}),
    };
    write_records(&a.io.out, &rows, &meta)?;
    eprintln!("build-sft: {} samples", rows.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct BuildSimpoArgs {
    #[command(flatten)]
    io: RecordInputs,
    /// Base seed [default: `seed` in the config file].
    #[arg(long)]
    seed: Option<u64>,
    /// Model answers sampled per record to pick the rejected line.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    number_lines: bool,
    #[command(flatten)]
    sampling: SamplingArgs,
}

pub fn run_build_simpo(
    a: BuildSimpoArgs,
    mut cfg: RunConfig,
    ctx: &Context,
) -> Result<(), CliError> {
    let seed = require_seed(a.seed, &mut cfg, "build-simpo")?;
    if let Some(n) = a.n {
        cfg.generate.n = n;
    }
    cfg.generate.number_lines |= a.number_lines;
    a.sampling.apply(&mut cfg, ctx);
    if cfg.generate.n == 0 {
        return Err(CliError::Usage(
            "--n must be at least 1 (e.g. --n 20)".into(),
        ));
    }
    let data = a.io.load(&mut cfg, &[])?;
    let gw = gateway(&cfg.gateway)?;
    let outputs = sample_outputs(&data.records, &data.descriptions, &gw, &cfg.generate)
        .map_err(dataset_error)?;

    let mut samples = Vec::new();
    let (mut failed, mut no_negative) = (0, 0);
    for (i, (r, out)) in data.records.iter().zip(&outputs).enumerate() {
        match out {
            Ok(texts) => {
                match build_simpo_sample(
                    r,
                    data.description(r),
                    texts,
                    mix_seed(seed, i as u64),
                    cfg.generate.number_lines,
                ) {
                    Ok(s) if within_char_cap(&s.prompt, cfg.dataset.max_chars) => samples.push(s),
                    Ok(_) => {}
                    Err(e) => {
                        no_negative += 1;
                        log::warn!("{} line {}: {e}", r.module_id, r.line_no);
                    }
                }
            }
            Err(e) => {
                failed += 1;
                log::warn!("{} line {}: {e}", r.module_id, r.line_no);
            }
        }
    }
    let meta = Meta {
        command: "build-simpo",
        cfg: &cfg,
        seeds: seeds(seed),
        inputs: ctx.inputs(a.io.inputs()),
        summary: json!({"records": data.records.len(), "samples": samples.len(), "request_failures": failed, "no_negative": no_negative}),
    };
    write_records(&a.io.out, &samples, &meta)?;
    eprintln!(
        "build-simpo: {} samples, {failed} failed requests",
        samples.len()
    );
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Args)]
pub struct EvalFlags {
    /// Testset JSONL from `build-testset`.
    #[arg(long)]
    testset: PathBuf,
    /// Samples per case.
    #[arg(long)]
    n: Option<usize>,
    /// pass@k cutoffs, comma separated.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// `edit-distance` (nearest line) or `substring` (buggy line quoted anywhere).
    #[arg(long, value_parser = ["edit-distance", "substring"])]
    scoring: Option<String>,
    #[arg(long)]
    number_lines: bool,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

impl EvalFlags {
    fn apply(self, cfg: &mut RunConfig, ctx: &Context) -> Result<Vec<TestCase>, CliError> {
        let e = &mut cfg.eval;
        if let Some(n) = self.n {
            e.n = n;
        }
        if let Some(ks) = self.ks {
            e.ks = ks;
        }
        if let Some(s) = self.scoring {
            e.scoring = if s == "substring" {
                ScoringMode::Substring
            } else {
                ScoringMode::EditDistance
            };
        }
        e.number_lines |= self.number_lines;
        if let Some(m) = self.max_tokens {
            e.max_tokens = m;
        }
        if let Some(j) = ctx.jobs {
            e.in_flight = j;
        }
        self.gateway.apply(&mut cfg.gateway);
        let cases: Vec<TestCase> = read_records(&self.testset)?;
        for c in &cases {
            c.validate().map_err(invalid)?;
        }
        Ok(cases)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    flags: EvalFlags,
    /// Report JSON.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    temperature: Option<f64>,
    /// Score saved responses instead of querying a model.
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Write the collected responses here.
    #[arg(long)]
    responses_out: Option<PathBuf>,
    /// Line lists of a list-output localizer, JSONL {"case_id","lines"}; sets the hit rate.
    #[arg(long)]
    line_lists: Option<PathBuf>,
}

#[derive(Deserialize)]
struct LineList {
    case_id: String,
    lines: Option<Vec<usize>>,
}

fn print_report(report: &EvalReport) {
    let parts: Vec<String> = report
        .pass_at
        .iter()
        .map(|(k, v)| format!("pass@{k}={v:.4}"))
        .collect();
    let mut line = format!("cases={} {}", report.case_count(), parts.join(" "));
    if let Some(t) = report.temperature {
        line = format!("t={t} {line}");
    }
    if let Some(h) = report.hit_rate {
        line.push_str(&format!(" hit_rate={h:.4}"));
    }
    if !report.excluded.is_empty() {
        line.push_str(&format!(" excluded={}", report.excluded.len()));
    }
    println!("{line}");
}

fn all_failed(cases: &[TestCase], report: &EvalReport) -> bool {
    !cases.is_empty() && report.case_count() == 0
}

pub fn run_eval_cmd(a: EvalArgs, mut cfg: RunConfig, ctx: &Context) -> Result<(), CliError> {
    if let Some(t) = a.temperature {
        cfg.eval.temperature = t;
    }
    let testset = a.flags.testset.clone();
    let cases = a.flags.apply(&mut cfg, ctx)?;
    let mut inputs = vec![testset.as_path()];
    inputs.extend(a.responses.as_deref());
    inputs.extend(a.line_lists.as_deref());
    let mut outs = vec![a.out.as_path()];
    outs.extend(a.responses_out.as_deref());
    check_outputs(&outs, &inputs)?;

    let (mut report, responses) = match &a.responses {
        Some(path) => {
            let sets: Vec<ResponseSet> = read_records(path)?;
            let report = aggregate_with(&cases, &sets, &cfg.eval.ks, cfg.eval.scoring, ctx.exec)
                .map_err(invalid)?;
            (report, None)
        }
        None => {
            cfg.eval
                .validate()
                .map_err(|e| CliError::Usage(format!("{e} (e.g. `--n 20 --ks 1,5`)")))?;
            let gw = gateway(&cfg.gateway)?;
            let run = run_eval(&cases, &gw, &cfg.eval).map_err(invalid)?;
            (run.report, Some(run.responses))
        }
    };
    if let Some(path) = &a.line_lists {
        let lists: Vec<LineList> = read_records(path)?;
        let map: HashMap<String, Option<Vec<usize>>> =
            lists.into_iter().map(|l| (l.case_id, l.lines)).collect();
        report.hit_rate = Some(hit_rate(&cases, &map));
    }
    let meta = Meta {
        command: "eval",
        cfg: &cfg,
        seeds: BTreeMap::new(),
        inputs: ctx.inputs(inputs),
        summary: json!({"cases": cases.len(), "scored": report.case_count(), "excluded": report.excluded.len()}),
    };
    write_document(&a.out, &report, &meta)?;
    if let (Some(p), Some(r)) = (&a.responses_out, &responses) {
        write_records(p, r, &meta)?;
    }
    print_report(&report);
    if all_failed(&cases, &report) {
        return Err(CliError::External(
            "every case failed to get a response".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    flags: EvalFlags,
    /// Directory for report_t<temp>.json files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Temperatures, comma separated, e.g. 0.1,0.3,0.5.
    #[arg(long, value_delimiter = ',')]
    temperatures: Option<Vec<f64>>,
}

pub fn run_sweep(a: SweepArgs, mut cfg: RunConfig, ctx: &Context) -> Result<(), CliError> {
    if let Some(t) = a.temperatures {
        cfg.sweep.temperatures = t;
    }
    if cfg.sweep.temperatures.is_empty() {
        return Err(CliError::Usage(
            "no temperatures given (e.g. `--temperatures 0.1,0.3,0.5`)".into(),
        ));
    }
    let testset = a.flags.testset.clone();
    let cases = a.flags.apply(&mut cfg, ctx)?;
    cfg.eval
        .validate()
        .map_err(|e| CliError::Usage(format!("{e} (e.g. `--n 20 --ks 1,5`)")))?;
    let gw = gateway(&cfg.gateway)?;
    let mut failed_points = 0;
    for &t in &cfg.sweep.temperatures {
        let point = vbugloc_core::eval::EvalConfig {
            temperature: t,
            ..cfg.eval.clone()
        };
        let run = run_eval(&cases, &gw, &point).map_err(invalid)?;
        let out = a.out_dir.join(report_file_name(t));
        let meta = Meta {
            command: "sweep",
            cfg: &cfg,
            seeds: BTreeMap::new(),
            inputs: ctx.inputs(vec![&testset]),
            summary: json!({"temperature": t, "cases": cases.len(), "scored": run.report.case_count()}),
        };
        write_document(&out, &run.report, &meta)?;
        print_report(&run.report);
        if all_failed(&cases, &run.report) {
            failed_points += 1;
        }
    }
    if failed_points == cfg.sweep.temperatures.len() && !cases.is_empty() {
        return Err(CliError::External(
            "every case failed at every temperature".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------- simpo-score

#[derive(Debug, Args)]
pub struct SimpoScoreArgs {
    /// JSONL {"chosen_logprobs":[...],"rejected_logprobs":[...]}.
    #[arg(long, short)]
    input: PathBuf,
    /// Per-pair margin and loss, JSONL.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Deserialize)]
struct LogProbPair {
    chosen_logprobs: Vec<f64>,
    rejected_logprobs: Vec<f64>,
}

#[derive(Serialize)]
struct PairScore {
    index: usize,
    avg_logprob_chosen: f64,
    avg_logprob_rejected: f64,
    margin: f64,
    loss: f64,
}

pub fn run_simpo_score(
    a: SimpoScoreArgs,
    mut cfg: RunConfig,
    ctx: &Context,
) -> Result<(), CliError> {
    if let Some(b) = a.beta {
        cfg.simpo.beta = b;
    }
    if let Some(g) = a.gamma {
        cfg.simpo.gamma = g;
    }
    cfg.simpo
        .validate()
        .map_err(|e| CliError::Usage(format!("{e} (e.g. `--beta 2.0 --gamma 1.0`)")))?;
    check_outputs(&[&a.out], &[&a.input])?;
    let raw: Vec<LogProbPair> = read_records(&a.input)?;
    if raw.is_empty() {
        return Err(CliError::Invalid(format!(
            "{}: no pairs",
            a.input.display()
        )));
    }
    let pairs = raw
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let at = |e| invalid(format!("{} record {}: {e}", a.input.display(), i + 1));
            Ok((
                TokenLogProbs::new(p.chosen_logprobs).map_err(at)?,
                TokenLogProbs::new(p.rejected_logprobs).map_err(at)?,
            ))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let scores = pairs
        .iter()
        .enumerate()
        .map(|(index, (w, l))| {
            let (loss, margin) = simpo_loss(w, l, &cfg.simpo)?;
            Ok(PairScore {
                index,
                avg_logprob_chosen: avg_logprob(w)?,
                avg_logprob_rejected: avg_logprob(l)?,
                margin,
                loss,
            })
        })
        .collect::<Result<Vec<_>, vbugloc_core::preference::PreferenceError>>()
        .map_err(invalid)?;
    let mean = batch_objective_with(&pairs, &cfg.simpo, ctx.exec).map_err(invalid)?;
    let meta = Meta {
        command: "simpo-score",
        cfg: &cfg,
        seeds: BTreeMap::new(),
        inputs: ctx.inputs(vec![&a.input]),
        summary: json!({"pairs": pairs.len(), "mean_loss": mean}),
    };
    write_records(&a.out, &scores, &meta)?;
    println!("{}", json!({"pairs": pairs.len(), "mean_loss": mean}));
    Ok(())
}
