//! Shared plumbing for commands: ontology/corpus loading, document sampling,
//! and backend routing construction from a resolved configuration.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use docre::backend::{
    CacheStore, CachedBackend, ChatBackend, HttpBackend, HttpBackendConfig, OracleBackend,
    StageRouting,
};
use docre::corpus::{dedup_facts, parse_corpus_file, Document, ParseMode, SkippedLabel};
use docre::ontology::RelationOntology;
use docre::pipeline::RunOpts;

use crate::config::{RunConfig, DEFAULT_API_KEY_ENV};

pub fn load_ontology(path: Option<&Path>) -> Result<RelationOntology> {
    match path {
        Some(path) => RelationOntology::load(path)
            .with_context(|| format!("loading ontology {}", path.display())),
        None => Ok(RelationOntology::re_docred().clone()),
    }
}

/// Parse a corpus and apply duplicate-fact removal per document.
pub fn load_corpus(
    path: &Path,
    ontology: &RelationOntology,
    lenient: bool,
) -> Result<(Vec<Document>, Vec<SkippedLabel>, usize)> {
    let mode = if lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let parsed = parse_corpus_file(path, ontology, mode)
        .with_context(|| format!("parsing corpus {}", path.display()))?;
    let mut docs = parsed.documents;
    let mut removed = 0;
    for doc in &mut docs {
        removed += dedup_facts(doc);
    }
    Ok((docs, parsed.skipped, removed))
}

/// Seeded sample of `n` documents, kept in corpus order.
pub fn sample_docs(docs: Vec<Document>, n: usize, seed: u64) -> Vec<Document> {
    if n >= docs.len() {
        return docs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..docs.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(n);
    indices.sort_unstable();
    let keep: std::collections::HashSet<usize> = indices.into_iter().collect();
    docs.into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, d)| d)
        .collect()
}

pub fn run_opts(config: &RunConfig) -> RunOpts {
    RunOpts {
        with_description: config.opts.with_description,
        strict_entities: config.opts.strict_entities,
        gold_relation_prior: config.opts.gold_relation_prior,
        open_relations: config.opts.open_relations,
        call_budget: config.opts.call_budget,
        decode: docre::backend::DecodeParams {
            temperature: config.opts.temperature,
            max_tokens: config.opts.max_tokens,
            stop: Vec::new(),
        },
    }
}

/// Build the per-stage routing from the configuration. The oracle and replay
/// backends need no network configuration; a remote endpoint requires an API
/// key in the configured environment variable unless keyless access is
/// explicitly allowed.
pub fn build_routing(
    config: &RunConfig,
    docs: &[Document],
    ontology: &RelationOntology,
) -> Result<(StageRouting, String)> {
    if config.opts.oracle {
        let backend: Arc<dyn ChatBackend> = Arc::new(OracleBackend::new(docs, ontology));
        return Ok((StageRouting::uniform(backend), "oracle".to_string()));
    }
    if let Some(dir) = &config.opts.replay {
        let store = CacheStore::open(dir)
            .with_context(|| format!("opening replay cache {}", dir.display()))?;
        let backend: Arc<dyn ChatBackend> = Arc::new(CachedBackend::replay(store));
        return Ok((
            StageRouting::uniform(backend),
            format!("replay:{}", dir.display()),
        ));
    }
    let Some(endpoint) = &config.routing.endpoint else {
        bail!("no backend configured: pass --oracle, --replay <dir>, or --endpoint <url>");
    };
    let api_key = if config.routing.no_api_key {
        None
    } else {
        let var = config
            .routing
            .api_key_env
            .as_deref()
            .unwrap_or(DEFAULT_API_KEY_ENV);
        match std::env::var(var) {
            Ok(key) if !key.is_empty() => Some(key),
            _ => bail!(
                "environment variable {var} is not set; export the API key or pass --no-api-key"
            ),
        }
    };
    let default_model = config.routing.model.as_deref().unwrap_or_default();
    let model_for = |stage_model: &Option<String>| -> Result<String> {
        let model = stage_model.as_deref().unwrap_or(default_model);
        if model.is_empty() {
            bail!("no model configured: pass --model or per-stage model flags");
        }
        Ok(model.to_string())
    };
    let mut backends: Vec<Arc<dyn ChatBackend>> = Vec::with_capacity(3);
    for stage_model in [
        &config.routing.relation_model,
        &config.routing.head_model,
        &config.routing.fact_model,
    ] {
        let defaults = HttpBackendConfig::default();
        let http = HttpBackend::new(HttpBackendConfig {
            endpoint: endpoint.clone(),
            model: model_for(stage_model)?,
            api_key: api_key.clone(),
            max_in_flight: config.opts.parallelism.max(1),
            requests_per_minute: config.routing.requests_per_minute,
            timeout: config
                .routing
                .timeout_secs
                .map(std::time::Duration::from_secs)
                .unwrap_or(defaults.timeout),
            max_retries: config.routing.max_retries.unwrap_or(defaults.max_retries),
            ..defaults
        })
        .map_err(|e| anyhow::anyhow!("building http backend: {e}"))?;
        let backend: Arc<dyn ChatBackend> = match &config.opts.cache_dir {
            Some(dir) => {
                let store = CacheStore::open(dir)
                    .with_context(|| format!("opening cache {}", dir.display()))?;
                Arc::new(CachedBackend::recording(store, Arc::new(http)))
            }
            None => Arc::new(http),
        };
        backends.push(backend);
    }
    let fact = backends.pop().unwrap();
    let head = backends.pop().unwrap();
    let relation = backends.pop().unwrap();
    let description = format!("http:{endpoint}");
    Ok((StageRouting::new(relation, head, fact), description))
}
