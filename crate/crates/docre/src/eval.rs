//! Strict micro-F1 scoring with alias semantics.
//!
//! A prediction counts as a true positive only if its relation, head text and
//! tail text all match a gold fact; head/tail comparison accepts any alias of
//! the gold entity (exact string equality after NFC normalization and
//! trimming, no case folding). Each gold fact is creditable at most once; a
//! correct prediction whose every matching gold is already credited is a
//! duplicate hit, which is neither a true positive nor a false positive.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Document;
use crate::pipeline::{PredictedFact, StagePredictions};

/// NFC-normalize and trim, the comparison form for entity strings.
pub fn normalize_alias(s: &str) -> String {
    s.trim().nfc().collect()
}

/// Per-document matching totals.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    /// Indices of credited gold facts within the document.
    pub matched_gold: HashSet<usize>,
    /// Correct predictions whose every matching gold was already credited.
    pub duplicate_hits: usize,
}

/// Recall/precision/F1 in percent, full precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Micro-averaged metrics from raw counts; 0/0 divisions yield 0.
pub fn micro_f1(tp: usize, fp: usize, total_gold: usize) -> Metrics {
    let recall = if total_gold == 0 {
        0.0
    } else {
        100.0 * tp as f64 / total_gold as f64
    };
    let precision = if tp + fp == 0 {
        0.0
    } else {
        100.0 * tp as f64 / (tp + fp) as f64
    };
    let f1 = if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        recall,
        precision,
        f1,
    }
}

/// Match predictions against one document's gold facts.
///
/// Greedy in prediction order: each prediction is credited to the first
/// unmatched gold fact it fits. A prediction fitting only already-credited
/// golds is a duplicate hit; a prediction fitting no gold is a false positive.
pub fn match_document(preds: &[PredictedFact], doc: &Document) -> MatchResult {
    let alias_sets: Vec<HashSet<String>> = doc
        .entities
        .iter()
        .map(|e| e.mentions.iter().map(|m| normalize_alias(&m.text)).collect())
        .collect();
    let mut result = MatchResult::default();
    for pred in preds {
        let head = normalize_alias(&pred.head_text);
        let tail = normalize_alias(&pred.tail_text);
        let mut fits_any = false;
        let mut credited = false;
        for (gi, gold) in doc.gold_facts.iter().enumerate() {
            if gold.relation_id != pred.relation.id {
                continue;
            }
            if !alias_sets[gold.head_idx].contains(&head)
                || !alias_sets[gold.tail_idx].contains(&tail)
            {
                continue;
            }
            fits_any = true;
            if !result.matched_gold.contains(&gi) {
                result.matched_gold.insert(gi);
                result.tp += 1;
                credited = true;
                break;
            }
        }
        if !credited {
            if fits_any {
                result.duplicate_hits += 1;
            } else {
                result.fp += 1;
            }
        }
    }
    result
}

/// One row of an evaluation table.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub label: String,
    pub tp: usize,
    pub fp: usize,
    pub total_gold: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl EvalRow {
    pub fn from_counts(label: impl Into<String>, tp: usize, fp: usize, total_gold: usize) -> Self {
        let m = micro_f1(tp, fp, total_gold);
        EvalRow {
            label: label.into(),
            tp,
            fp,
            total_gold,
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
        }
    }
}

/// Free-form run context recorded on a report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EvalMetadata {
    pub split: Option<String>,
    pub paradigm: Option<String>,
    pub backend: Option<String>,
}

/// Full evaluation report: overall counts plus per-relation and per-stage rows.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub overall: EvalRow,
    pub duplicate_hits: usize,
    pub per_relation: Vec<EvalRow>,
    pub per_stage: Vec<EvalRow>,
    pub metadata: EvalMetadata,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions reference unknown doc ids: {doc_ids:?}")]
    UnknownDocIds { doc_ids: Vec<String> },
}

fn index_docs(docs: &[Document]) -> HashMap<&str, &Document> {
    docs.iter().map(|d| (d.doc_id.as_str(), d)).collect()
}

fn check_doc_ids<'a>(
    ids: impl Iterator<Item = &'a str>,
    by_id: &HashMap<&str, &Document>,
) -> Result<(), EvalError> {
    let mut unknown: Vec<String> = ids
        .filter(|id| !by_id.contains_key(id))
        .map(|s| s.to_string())
        .collect();
    if unknown.is_empty() {
        return Ok(());
    }
    unknown.sort();
    unknown.dedup();
    Err(EvalError::UnknownDocIds { doc_ids: unknown })
}

/// Evaluate a full prediction run against a corpus.
pub fn evaluate_run(preds: &[PredictedFact], docs: &[Document]) -> Result<EvalReport, EvalError> {
    let by_id = index_docs(docs);
    check_doc_ids(preds.iter().map(|p| p.doc_id.as_str()), &by_id)?;

    let mut grouped: HashMap<&str, Vec<&PredictedFact>> = HashMap::new();
    for p in preds {
        grouped.entry(p.doc_id.as_str()).or_default().push(p);
    }

    let mut tp = 0;
    let mut fp = 0;
    let mut duplicate_hits = 0;
    // relation id -> (tp, fp, gold)
    let mut per_relation: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let mut total_gold = 0;

    for doc in docs {
        total_gold += doc.gold_facts.len();
        let doc_preds: Vec<PredictedFact> = grouped
            .get(doc.doc_id.as_str())
            .map(|v| v.iter().map(|p| (*p).clone()).collect())
            .unwrap_or_default();
        let result = match_document(&doc_preds, doc);
        tp += result.tp;
        fp += result.fp;
        duplicate_hits += result.duplicate_hits;

        attribute_per_relation(&doc_preds, doc, &mut per_relation);
        for gold in &doc.gold_facts {
            per_relation
                .entry(gold.relation_id.clone())
                .or_insert((0, 0, 0))
                .2 += 1;
        }
    }

    let per_relation_rows = per_relation
        .into_iter()
        .map(|(rid, (r_tp, r_fp, r_gold))| EvalRow::from_counts(rid, r_tp, r_fp, r_gold))
        .collect();

    Ok(EvalReport {
        overall: EvalRow::from_counts("overall", tp, fp, total_gold),
        duplicate_hits,
        per_relation: per_relation_rows,
        per_stage: Vec::new(),
        metadata: EvalMetadata::default(),
    })
}

fn attribute_per_relation(
    doc_preds: &[PredictedFact],
    doc: &Document,
    per_relation: &mut BTreeMap<String, (usize, usize, usize)>,
) {
    // The overall pass is greedy across relations, but predictions only ever
    // compete for golds of their own relation, so restricting by relation
    // gives identical totals.
    let mut by_relation: BTreeMap<&str, Vec<PredictedFact>> = BTreeMap::new();
    for p in doc_preds {
        by_relation
            .entry(p.relation.id.as_str())
            .or_default()
            .push(p.clone());
    }
    for (rid, preds) in by_relation {
        let result = match_document(&preds, doc);
        let entry = per_relation.entry(rid.to_string()).or_insert((0, 0, 0));
        entry.0 += result.tp;
        entry.1 += result.fp;
    }
}

/// Evaluate one stage in isolation (the per-module setting of the subtask
/// tables): relation predictions against per-document gold relation sets,
/// head predictions against gold (relation, head) pairs with alias semantics,
/// fact predictions exactly like [`evaluate_run`].
pub fn evaluate_stage(
    preds: &StagePredictions,
    docs: &[Document],
) -> Result<EvalReport, EvalError> {
    let by_id = index_docs(docs);
    let stage = preds.stage();
    let (tp, fp, duplicate_hits, total_gold) = match preds {
        StagePredictions::Relations(preds) => {
            check_doc_ids(preds.iter().map(|p| p.doc_id.as_str()), &by_id)?;
            let mut credited: HashSet<(String, String)> = HashSet::new();
            let mut gold: HashSet<(String, String)> = HashSet::new();
            for doc in docs {
                for rid in doc.gold_relation_ids() {
                    gold.insert((doc.doc_id.clone(), rid.to_string()));
                }
            }
            let mut tp = 0;
            let mut fp = 0;
            let mut dup = 0;
            for p in preds {
                let key = (p.doc_id.clone(), p.relation.id.clone());
                if gold.contains(&key) {
                    if credited.insert(key) {
                        tp += 1;
                    } else {
                        dup += 1;
                    }
                } else {
                    fp += 1;
                }
            }
            (tp, fp, dup, gold.len())
        }
        StagePredictions::Heads(preds) => {
            check_doc_ids(preds.iter().map(|p| p.doc_id.as_str()), &by_id)?;
            let mut tp = 0;
            let mut fp = 0;
            let mut dup = 0;
            let mut total_gold = 0;
            // gold units: (doc, relation, head entity), creditable once
            let mut credited: HashSet<(String, String, usize)> = HashSet::new();
            let alias_sets: HashMap<&str, Vec<HashSet<String>>> = docs
                .iter()
                .map(|d| {
                    (
                        d.doc_id.as_str(),
                        d.entities
                            .iter()
                            .map(|e| {
                                e.mentions.iter().map(|m| normalize_alias(&m.text)).collect()
                            })
                            .collect(),
                    )
                })
                .collect();
            for doc in docs {
                for rid in doc.gold_relation_ids() {
                    total_gold += doc.gold_heads_for(rid).len();
                }
            }
            for p in preds {
                let doc = by_id[p.doc_id.as_str()];
                let aliases = &alias_sets[p.doc_id.as_str()];
                let head = normalize_alias(&p.head);
                let mut fits_any = false;
                let mut credited_now = false;
                for head_idx in doc.gold_heads_for(&p.relation.id) {
                    if !aliases[head_idx].contains(&head) {
                        continue;
                    }
                    fits_any = true;
                    let key = (p.doc_id.clone(), p.relation.id.clone(), head_idx);
                    if !credited.contains(&key) {
                        credited.insert(key);
                        tp += 1;
                        credited_now = true;
                        break;
                    }
                }
                if !credited_now {
                    if fits_any {
                        dup += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            (tp, fp, dup, total_gold)
        }
        StagePredictions::Facts(preds) => {
            let report = evaluate_run(preds, docs)?;
            (
                report.overall.tp,
                report.overall.fp,
                report.duplicate_hits,
                report.overall.total_gold,
            )
        }
    };
    Ok(EvalReport {
        overall: EvalRow::from_counts(stage.as_str(), tp, fp, total_gold),
        duplicate_hits,
        per_relation: Vec::new(),
        per_stage: vec![EvalRow::from_counts(stage.as_str(), tp, fp, total_gold)],
        metadata: EvalMetadata::default(),
    })
}

/// Render rows as an aligned plain-text table in the published column layout:
/// label, TP, FP, R, P, F1.
pub fn render_table(header: &str, rows: &[EvalRow]) -> String {
    let label_width = rows
        .iter()
        .map(|r| r.label.len())
        .chain([header.len()])
        .max()
        .unwrap_or(8)
        .max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<label_width$}  {:>8}  {:>8}  {:>7}  {:>7}  {:>7}",
        header, "TP", "FP", "R", "P", "F1"
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{:<label_width$}  {:>8}  {:>8}  {:>7.2}  {:>7.2}  {:>7.2}",
            row.label, row.tp, row.fp, row.recall, row.precision, row.f1
        );
    }
    out
}
