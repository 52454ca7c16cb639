//! Subcommand argument surfaces and implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use docre::corpus::{check_inverse_consistency, corpus_stats, serialize_corpus, Document};
use docre::eval::{
    evaluate_run, evaluate_stage, render_table, EvalMetadata, EvalRow,
};
use docre::ontology::RelationOntology;
use docre::pipeline::{
    predictions_from_jsonl, predictions_to_jsonl, run_corpus, run_stage_corpus,
    stage_predictions_from_jsonl, stage_predictions_to_jsonl, traces_to_jsonl, Paradigm,
};
use docre::prompts::Stage;
use docre::tuningdata::{generate_samples, write_samples, TuningOpts};

use crate::config::{
    overlay, overlay_bool, overlay_opt, OptsConfig, RoutingConfig, RunConfig,
};
use crate::runner;

#[derive(Parser)]
#[command(
    name = "docre",
    version,
    about = "Document-level relation extraction over chat-model backends"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Parse a corpus, remove duplicate facts, and print corpus statistics.
    Ingest(IngestArgs),
    /// Run an extraction paradigm (or one stage) over a corpus.
    Extract(ExtractArgs),
    /// Score a predictions file against a corpus, or audit published counts.
    Eval(EvalArgs),
    /// Generate the three-stage instruction-tuning dataset.
    GenTuning(GenTuningArgs),
    /// Run all four paradigms with one backend and print one table.
    CompareParadigms(CompareArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Corpus JSON file (DocRED-format array).
    #[arg(long)]
    corpus: PathBuf,
    /// Ontology TOML file; defaults to the embedded Re-DocRED inventory.
    #[arg(long)]
    ontology: Option<PathBuf>,
    /// Collect unknown relation codes instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Append missing reciprocal facts (training-data preparation only).
    #[arg(long)]
    fix_inverses: bool,
    /// Write the processed corpus to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
pub struct BackendArgs {
    /// Answer stage prompts from gold annotations.
    #[arg(long)]
    oracle: bool,
    /// Replay-only response cache directory; a miss is an error.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Chat-completions endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name for all stages.
    #[arg(long)]
    model: Option<String>,
    /// Per-stage model/adapter overrides.
    #[arg(long)]
    relation_model: Option<String>,
    #[arg(long)]
    head_model: Option<String>,
    #[arg(long)]
    fact_model: Option<String>,
    /// Environment variable holding the API key (default DOCRE_API_KEY).
    #[arg(long)]
    api_key_env: Option<String>,
    /// Allow a keyless endpoint.
    #[arg(long)]
    no_api_key: bool,
    /// Record/replay cache directory for remote calls.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Per-minute request budget for the remote backend.
    #[arg(long)]
    rpm: Option<u32>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Retries after the first attempt on transient errors.
    #[arg(long)]
    max_retries: Option<u32>,
}

#[derive(Args, Default)]
pub struct RunArgs {
    /// TOML run configuration; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus JSON file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Split tag recorded in outputs (e.g. dev, test).
    #[arg(long)]
    split: Option<String>,
    /// Ontology TOML file; defaults to the embedded inventory.
    #[arg(long)]
    ontology: Option<PathBuf>,
    /// Collect unknown relation codes instead of failing.
    #[arg(long)]
    lenient: bool,
    #[command(flatten)]
    backend: BackendArgs,
    /// Include relation descriptions in head/fact prompts.
    #[arg(long)]
    with_description: bool,
    /// Reject parsed entities that are not in the passage text.
    #[arg(long)]
    strict_entities: bool,
    /// Skip relation listing and use the gold relations (prior-knowledge setting).
    #[arg(long)]
    gold_relation_prior: bool,
    /// Open relation instruction instead of the candidate list.
    #[arg(long)]
    open_relations: bool,
    /// Concurrent document runs.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Per-document call cap.
    #[arg(long)]
    call_budget: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Run on a seeded sample of N documents.
    #[arg(long)]
    sample: Option<usize>,
    /// Seed for any randomized utility (document sampling).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Extraction paradigm: df, drsf, drf or drhf.
    #[arg(long, conflicts_with = "stage")]
    paradigm: Option<String>,
    /// Run one stage in isolation with gold upstream inputs: relation, head or fact.
    #[arg(long)]
    stage: Option<String>,
    /// Output directory for predictions, traces, summary and config snapshot.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory; per-paradigm runs land in subdirectories.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predictions JSONL file from `extract`.
    #[arg(long, required_unless_present_any = ["audit", "stage_file"])]
    predictions: Option<PathBuf>,
    /// Corpus the predictions were produced from.
    #[arg(long, required_unless_present = "audit")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
    /// Score a stage predictions file: relation, head or fact.
    #[arg(long)]
    stage: Option<String>,
    /// Stage predictions files rendered as one module table; repeatable,
    /// e.g. --stage-file relation=rel.jsonl --stage-file fact=facts.jsonl.
    #[arg(long, value_name = "STAGE=PATH", conflicts_with = "predictions")]
    stage_file: Vec<String>,
    /// Counts-only audit file: rows of {label, tp, fp, total_gold, expect?}.
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Also print per-relation rows.
    #[arg(long)]
    per_relation: bool,
    /// Split tag recorded in the report.
    #[arg(long)]
    split: Option<String>,
    /// Paradigm label recorded in the report.
    #[arg(long)]
    paradigm: Option<String>,
    /// Write report.json and report.txt here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenTuningArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
    /// Omit relation descriptions from head/fact instructions.
    #[arg(long)]
    no_description: bool,
    /// Add head samples with empty completions for absent relations.
    #[arg(long)]
    include_negatives: bool,
    /// Append missing reciprocal facts before generating samples.
    #[arg(long)]
    fix_inverses: bool,
    /// Output JSONL path; the manifest lands next to it.
    #[arg(long)]
    out: PathBuf,
}

/// Classified failure with the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError {
            code: 2,
            message: format!("{err:#}"),
        }
    }
}

impl CliError {
    fn input(err: impl std::fmt::Display) -> Self {
        CliError {
            code: 2,
            message: err.to_string(),
        }
    }

    fn backend(err: impl std::fmt::Display) -> Self {
        CliError {
            code: 3,
            message: err.to_string(),
        }
    }

    fn mismatch(err: impl std::fmt::Display) -> Self {
        CliError {
            code: 1,
            message: err.to_string(),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Eval(args) => cmd_eval(args),
        Command::GenTuning(args) => cmd_gen_tuning(args),
        Command::CompareParadigms(args) => cmd_compare(args),
    }
}

fn cmd_ingest(args: IngestArgs) -> Result<(), CliError> {
    let ontology = runner::load_ontology(args.ontology.as_deref())?;
    let (mut docs, skipped, removed) =
        runner::load_corpus(&args.corpus, &ontology, args.lenient)?;

    let mut inverse_added = 0;
    if args.fix_inverses {
        for doc in &mut docs {
            inverse_added += check_inverse_consistency(doc, &ontology, true).added;
        }
    }

    // Outputs land before any stdout chatter so a closed pipe cannot lose them.
    if let Some(out) = &args.out {
        std::fs::write(out, serialize_corpus(&docs))
            .with_context(|| format!("writing {}", out.display()))?;
        if let Some(dir) = out.parent() {
            let config = RunConfig {
                corpus: Some(args.corpus.clone()),
                ontology: args.ontology.clone(),
                ..RunConfig::default()
            };
            config.write_snapshot(dir)?;
        }
    }

    let stats = corpus_stats(&docs);
    println!("{} documents / {} gold facts", stats.n_documents, stats.n_gold_facts);
    println!("distinct relations: {}", stats.n_distinct_relations);
    println!("max facts per doc: {}", stats.max_facts_per_doc);
    println!("max relations per doc: {}", stats.max_relations_per_doc);
    println!("duplicate facts removed: {removed}");
    if args.fix_inverses {
        println!("inverse facts added: {inverse_added}");
    }
    if !skipped.is_empty() {
        println!("skipped labels: {}", skipped.len());
        for s in skipped.iter().take(10) {
            println!("  doc {} ({}): label {}: {}", s.doc_ordinal, s.doc_id, s.label_index, s.reason);
        }
    }
    if let Some(out) = &args.out {
        println!("processed corpus written to {}", out.display());
    }
    Ok(())
}

/// Merge the config file (when given) with flag overrides; flags win.
fn resolve_config(run: &RunArgs, paradigm: Option<&str>, stage: Option<&str>, out_dir: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut config = match &run.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    overlay_opt(&mut config.corpus, run.corpus.clone());
    overlay_opt(&mut config.split, run.split.clone());
    overlay_opt(&mut config.ontology, run.ontology.clone());
    overlay_opt(&mut config.paradigm, paradigm.map(str::to_string));
    overlay_opt(&mut config.stage, stage.map(str::to_string));
    overlay_opt(&mut config.out_dir, out_dir.map(Path::to_path_buf));

    let RoutingConfig {
        endpoint,
        model,
        relation_model,
        head_model,
        fact_model,
        api_key_env,
        no_api_key,
        requests_per_minute,
        timeout_secs,
        max_retries,
    } = &mut config.routing;
    overlay_opt(endpoint, run.backend.endpoint.clone());
    overlay_opt(model, run.backend.model.clone());
    overlay_opt(relation_model, run.backend.relation_model.clone());
    overlay_opt(head_model, run.backend.head_model.clone());
    overlay_opt(fact_model, run.backend.fact_model.clone());
    overlay_opt(api_key_env, run.backend.api_key_env.clone());
    overlay_bool(no_api_key, run.backend.no_api_key);
    overlay_opt(requests_per_minute, run.backend.rpm);
    overlay_opt(timeout_secs, run.backend.timeout_secs);
    overlay_opt(max_retries, run.backend.max_retries);

    let OptsConfig {
        with_description,
        strict_entities,
        gold_relation_prior,
        open_relations,
        parallelism,
        call_budget,
        temperature,
        max_tokens,
        cache_dir,
        oracle,
        replay,
        sample,
        seed,
    } = &mut config.opts;
    overlay_bool(with_description, run.with_description);
    overlay_bool(strict_entities, run.strict_entities);
    overlay_bool(gold_relation_prior, run.gold_relation_prior);
    overlay_bool(open_relations, run.open_relations);
    overlay(parallelism, run.parallelism);
    overlay(call_budget, run.call_budget);
    overlay(temperature, run.temperature);
    overlay(max_tokens, run.max_tokens);
    overlay_opt(cache_dir, run.backend.cache_dir.clone());
    overlay_bool(oracle, run.backend.oracle);
    overlay_opt(replay, run.backend.replay.clone());
    overlay_opt(sample, run.sample);
    overlay(seed, run.seed);

    config.validate()?;
    Ok(config)
}

struct LoadedRun {
    config: RunConfig,
    ontology: RelationOntology,
    docs: Vec<Document>,
}

fn load_run(config: RunConfig, lenient: bool) -> Result<LoadedRun, CliError> {
    let ontology =
        runner::load_ontology(config.ontology.as_deref())?;
    let corpus_path = config
        .corpus
        .clone()
        .ok_or_else(|| CliError::input("no corpus given: pass --corpus or set it in the config"))?;
    let (docs, _, _) =
        runner::load_corpus(&corpus_path, &ontology, lenient)?;
    let docs = match config.opts.sample {
        Some(n) => runner::sample_docs(docs, n, config.opts.seed),
        None => docs,
    };
    Ok(LoadedRun {
        config,
        ontology,
        docs,
    })
}

fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, content) in files {
        std::fs::write(dir.join(name), content)
            .with_context(|| format!("writing {}", dir.join(name).display()))?;
    }
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<(), CliError> {
    let config = resolve_config(
        &args.run,
        args.paradigm.as_deref(),
        args.stage.as_deref(),
        args.out_dir.as_deref(),
    )?;
    if config.paradigm.is_none() && config.stage.is_none() {
        return Err(CliError::input("pass --paradigm or --stage"));
    }
    let out_dir = config
        .out_dir
        .clone()
        .ok_or_else(|| CliError::input("no output directory: pass --out-dir"))?;
    let run = load_run(config, args.run.lenient)?;
    let (routing, backend_desc) =
        runner::build_routing(&run.config, &run.docs, &run.ontology)?;
    let opts = runner::run_opts(&run.config);
    if opts.with_description {
        run.ontology.ensure_descriptions().map_err(CliError::input)?;
    }
    let parallelism = run.config.opts.parallelism;

    run.config.write_snapshot(&out_dir)?;

    let failures = if let Some(stage_name) = run.config.stage.clone() {
        let stage = parse_stage(&stage_name)?;
        let output = run_stage_corpus(&run.docs, &run.ontology, stage, &routing, &opts, parallelism);
        write_outputs(
            &out_dir,
            &[
                ("stage_predictions.jsonl", stage_predictions_to_jsonl(&output.predictions)),
                ("traces.jsonl", traces_to_jsonl(&output.traces)),
                ("summary.json", to_json(&output.summary)?),
            ],
        )?;
        println!(
            "stage {} over {} docs via {}: {} predictions, {} calls",
            stage, output.summary.n_documents, backend_desc, output.summary.n_predictions,
            output.summary.n_calls
        );
        output.summary.failures
    } else {
        let paradigm = parse_paradigm(run.config.paradigm.as_deref().unwrap_or("drhf"))?;
        let output = run_corpus(&run.docs, &run.ontology, paradigm, &routing, &opts, parallelism);
        write_outputs(
            &out_dir,
            &[
                ("predictions.jsonl", predictions_to_jsonl(&output.predictions)),
                ("traces.jsonl", traces_to_jsonl(&output.traces)),
                ("summary.json", to_json(&output.summary)?),
            ],
        )?;
        println!(
            "{} over {} docs via {}: {} predictions, {} calls ({} truncated)",
            paradigm, output.summary.n_documents, backend_desc, output.summary.n_predictions,
            output.summary.n_calls, output.summary.n_truncated
        );
        output.summary.failures
    };

    println!("outputs written to {}", out_dir.display());
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("failed doc {}: {}", f.doc_id, f.error);
        }
        return Err(CliError::backend(format!(
            "{} document(s) failed; see traces for details",
            failures.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct AuditRow {
    label: String,
    tp: usize,
    fp: usize,
    #[serde(default)]
    total_gold: Option<usize>,
    #[serde(default)]
    expect: Option<AuditExpect>,
}

#[derive(Debug, Deserialize)]
struct AuditExpect {
    #[serde(default)]
    recall: Option<f64>,
    #[serde(default)]
    precision: Option<f64>,
    #[serde(default)]
    f1: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct AuditFile {
    #[serde(default)]
    total_gold: Option<usize>,
    rows: Vec<AuditRow>,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    if let Some(audit_path) = &args.audit {
        return cmd_eval_audit(audit_path, args.out_dir.as_deref());
    }
    let ontology = runner::load_ontology(args.ontology.as_deref())?;
    let corpus_path = args.corpus.as_ref().expect("clap enforces corpus");
    let (docs, _, _) =
        runner::load_corpus(corpus_path, &ontology, args.lenient)?;
    if !args.stage_file.is_empty() {
        return cmd_eval_stage_table(&args, &ontology, &docs);
    }
    let predictions_path = args.predictions.as_ref().expect("clap enforces predictions");
    let text = std::fs::read_to_string(predictions_path)
        .with_context(|| format!("reading {}", predictions_path.display()))?;

    let mut report = match &args.stage {
        Some(stage_name) => {
            let stage = parse_stage(stage_name)?;
            let preds = stage_predictions_from_jsonl(&text, stage, &ontology)
                .map_err(CliError::input)?;
            evaluate_stage(&preds, &docs).map_err(CliError::input)?
        }
        None => {
            let preds = predictions_from_jsonl(&text, &ontology).map_err(CliError::input)?;
            evaluate_run(&preds, &docs).map_err(CliError::input)?
        }
    };
    report.metadata = EvalMetadata {
        split: args.split.clone(),
        paradigm: args.paradigm.clone(),
        backend: None,
    };

    let mut overall = report.overall.clone();
    if let Some(paradigm) = &args.paradigm {
        overall.label = paradigm.clone();
    }
    let header = if args.stage.is_some() { "Module" } else { "Paradigm" };
    let mut table = render_table(header, &[overall]);
    if args.per_relation && !report.per_relation.is_empty() {
        table.push('\n');
        table.push_str(&render_table("Relation", &report.per_relation));
    }
    print!("{table}");
    println!("duplicate correct predictions (neither TP nor FP): {}", report.duplicate_hits);

    if let Some(dir) = &args.out_dir {
        let snapshot = serde_json::json!({
            "command": "eval",
            "predictions": predictions_path,
            "corpus": corpus_path,
            "ontology": args.ontology,
            "stage": args.stage,
            "split": args.split,
            "paradigm": args.paradigm,
        });
        write_outputs(
            dir,
            &[
                ("report.json", to_json(&report)?),
                ("report.txt", table.clone()),
                ("config_snapshot.json", to_json(&snapshot)?),
            ],
        )?;
        println!("report written to {}", dir.display());
    }
    Ok(())
}

/// Score several stage files and render one module row per stage.
fn cmd_eval_stage_table(
    args: &EvalArgs,
    ontology: &RelationOntology,
    docs: &[Document],
) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut duplicate_hits = 0;
    for spec in &args.stage_file {
        let (stage_name, path) = spec.split_once('=').ok_or_else(|| {
            CliError::input(format!("expected STAGE=PATH, got {spec:?}"))
        })?;
        let stage = parse_stage(stage_name)?;
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {path}"))?;
        let preds =
            stage_predictions_from_jsonl(&text, stage, ontology).map_err(CliError::input)?;
        let report = evaluate_stage(&preds, docs).map_err(CliError::input)?;
        let mut row = report.overall.clone();
        row.label = stage.as_str().to_string();
        rows.push(row);
        duplicate_hits += report.duplicate_hits;
    }
    let table = render_table("Module", &rows);
    print!("{table}");
    println!("duplicate correct predictions (neither TP nor FP): {duplicate_hits}");
    if let Some(dir) = &args.out_dir {
        let report = serde_json::json!({
            "per_stage": rows,
            "duplicate_hits": duplicate_hits,
            "metadata": {"split": args.split, "paradigm": args.paradigm},
        });
        write_outputs(
            dir,
            &[("report.json", to_json(&report)?), ("report.txt", table.clone())],
        )?;
        println!("report written to {}", dir.display());
    }
    Ok(())
}

fn cmd_eval_audit(path: &Path, out_dir: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let audit: AuditFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    let mut rows = Vec::new();
    let mut mismatches = Vec::new();
    for row in &audit.rows {
        let total_gold = row.total_gold.or(audit.total_gold).ok_or_else(|| {
            CliError::input(format!("row {:?} has no total_gold", row.label))
        })?;
        let eval_row = EvalRow::from_counts(row.label.clone(), row.tp, row.fp, total_gold);
        if let Some(expect) = &row.expect {
            for (name, got, want) in [
                ("recall", eval_row.recall, expect.recall),
                ("precision", eval_row.precision, expect.precision),
                ("f1", eval_row.f1, expect.f1),
            ] {
                if let Some(want) = want {
                    if (got - want).abs() > 0.01 {
                        mismatches.push(format!(
                            "{}: {} computed {:.2}, expected {:.2}",
                            row.label, name, got, want
                        ));
                    }
                }
            }
        }
        rows.push(eval_row);
    }
    let table = render_table("Paradigm", &rows);
    print!("{table}");
    if let Some(dir) = out_dir {
        write_outputs(dir, &[("report.txt", table.clone())])?;
    }
    if !mismatches.is_empty() {
        return Err(CliError::mismatch(format!(
            "audit mismatches:\n  {}",
            mismatches.join("\n  ")
        )));
    }
    println!("all audited rows match within 0.01");
    Ok(())
}

fn cmd_gen_tuning(args: GenTuningArgs) -> Result<(), CliError> {
    let ontology = runner::load_ontology(args.ontology.as_deref())?;
    let (mut docs, _, _) =
        runner::load_corpus(&args.corpus, &ontology, args.lenient)?;
    if args.fix_inverses {
        let mut added = 0;
        for doc in &mut docs {
            added += check_inverse_consistency(doc, &ontology, true).added;
        }
        println!("inverse facts added: {added}");
    }
    let opts = TuningOpts {
        with_description: !args.no_description,
        include_negatives: args.include_negatives,
    };
    if opts.with_description {
        ontology.ensure_descriptions().map_err(CliError::input)?;
    }
    let samples = generate_samples(&docs, &ontology, &opts);
    let m = write_samples(&samples, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let manifest_path = args.out.with_extension("manifest.json");
    std::fs::write(&manifest_path, to_json(&m)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    if let Some(dir) = args.out.parent() {
        let snapshot = serde_json::json!({
            "command": "gen-tuning",
            "corpus": args.corpus,
            "ontology": args.ontology,
            "with_description": opts.with_description,
            "include_negatives": opts.include_negatives,
            "fix_inverses": args.fix_inverses,
            "out": args.out,
        });
        std::fs::write(dir.join("config_snapshot.json"), to_json(&snapshot)?)
            .with_context(|| format!("writing {}", dir.join("config_snapshot.json").display()))?;
    }
    println!(
        "samples: {} (relation {} / head {} / fact {})",
        m.total, m.n_relation, m.n_head, m.n_fact
    );
    println!(
        "stage shares: {:.2}% / {:.2}% / {:.2}%",
        m.relation_share_pct, m.head_share_pct, m.fact_share_pct
    );
    println!("written to {} and {}", args.out.display(), manifest_path.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let config = resolve_config(&args.run, None, None, args.out_dir.as_deref())?;
    let out_dir = config
        .out_dir
        .clone()
        .ok_or_else(|| CliError::input("no output directory: pass --out-dir"))?;
    let run = load_run(config, args.run.lenient)?;
    let (routing, backend_desc) =
        runner::build_routing(&run.config, &run.docs, &run.ontology)?;
    let opts = runner::run_opts(&run.config);
    let parallelism = run.config.opts.parallelism;
    run.config.write_snapshot(&out_dir)?;

    let mut rows = Vec::new();
    let mut calls = Vec::new();
    let mut failure_count = 0;
    for paradigm in Paradigm::ALL {
        let output = run_corpus(&run.docs, &run.ontology, paradigm, &routing, &opts, parallelism);
        let report = evaluate_run(&output.predictions, &run.docs).map_err(CliError::input)?;
        let mut row = report.overall.clone();
        row.label = paradigm.label().to_string();
        rows.push(row);
        calls.push(output.summary.n_calls);
        failure_count += output.summary.failures.len();
        let sub_dir = out_dir.join(paradigm.tag());
        write_outputs(
            &sub_dir,
            &[
                ("predictions.jsonl", predictions_to_jsonl(&output.predictions)),
                ("traces.jsonl", traces_to_jsonl(&output.traces)),
                ("summary.json", to_json(&output.summary)?),
            ],
        )?;
    }

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<10}  {:>8}  {:>8}  {:>7}  {:>7}  {:>7}  {:>8}",
        "Paradigm", "TP", "FP", "R", "P", "F1", "Calls"
    );
    for (row, n_calls) in rows.iter().zip(&calls) {
        let _ = writeln!(
            table,
            "{:<10}  {:>8}  {:>8}  {:>7.2}  {:>7.2}  {:>7.2}  {:>8}",
            row.label, row.tp, row.fp, row.recall, row.precision, row.f1, n_calls
        );
    }
    print!("{table}");
    println!("backend: {backend_desc}; outputs under {}", out_dir.display());
    write_outputs(&out_dir, &[("comparison.txt", table)])?;
    if failure_count > 0 {
        return Err(CliError::backend(format!("{failure_count} document run(s) failed")));
    }
    Ok(())
}

fn parse_paradigm(s: &str) -> Result<Paradigm, CliError> {
    s.parse::<Paradigm>().map_err(CliError::input)
}

fn parse_stage(s: &str) -> Result<Stage, CliError> {
    match s.to_lowercase().as_str() {
        "relation" | "relations" => Ok(Stage::RelationExtraction),
        "head" | "heads" => Ok(Stage::HeadExtraction),
        "fact" | "facts" => Ok(Stage::FactExtraction),
        other => Err(CliError::input(format!(
            "unknown stage {other:?}; expected relation, head or fact"
        ))),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(CliError::input)
}
