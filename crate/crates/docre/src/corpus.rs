//! Corpus ingestion for DocRED/Re-DocRED-format documents, label processing
//! (duplicate removal, reciprocal-relation consistency), and corpus statistics.
//!
//! The wire format is a UTF-8 JSON array; each element has `title`, `sents`
//! (array of arrays of token strings), `vertexSet` (array of entities, each an
//! array of mention objects with `name`, `sent_id`, `pos`, `type`) and `labels`
//! (array of objects with `h`, `t`, `r`, optional `evidence`).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::RelationOntology;

/// One surface occurrence of an entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub text: String,
    /// 0-based sentence index.
    pub sent_id: usize,
    /// Token span `[start, end)` within the sentence.
    pub start: usize,
    pub end: usize,
    /// Coarse type tag as given by the source data (PER/ORG/LOC/...).
    pub entity_type: String,
}

/// An entity as a non-empty set of aliased mentions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub mentions: Vec<Mention>,
}

impl Entity {
    /// Distinct mention texts in first-occurrence order.
    pub fn aliases(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.mentions
            .iter()
            .map(|m| m.text.as_str())
            .filter(|t| seen.insert(*t))
            .collect()
    }

    /// The first mention's surface string, used as the canonical alias.
    pub fn first_mention(&self) -> &str {
        &self.mentions[0].text
    }
}

/// A gold triplet fact over entity indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GoldFact {
    pub head_idx: usize,
    pub tail_idx: usize,
    pub relation_id: String,
    pub evidence: Option<Vec<usize>>,
}

/// One document: tokenized sentences, entities, and gold facts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    /// Stable identifier; defaults to the title, ordinal-suffixed on collision.
    pub doc_id: String,
    pub title: Option<String>,
    pub sentences: Vec<Vec<String>>,
    pub entities: Vec<Entity>,
    pub gold_facts: Vec<GoldFact>,
}

impl Document {
    /// The passage text: tokens joined by single spaces, sentences joined by
    /// single spaces. This is the text embedded in prompts and used for
    /// in-passage substring checks.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for sent in &self.sentences {
            for tok in sent {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
        out
    }

    /// Distinct relation ids in order of first appearance in `gold_facts`.
    pub fn gold_relation_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.gold_facts
            .iter()
            .map(|f| f.relation_id.as_str())
            .filter(|r| seen.insert(*r))
            .collect()
    }

    /// Distinct head-entity indices for one relation, in order of first appearance.
    pub fn gold_heads_for(&self, relation_id: &str) -> Vec<usize> {
        let mut seen = HashSet::new();
        self.gold_facts
            .iter()
            .filter(|f| f.relation_id == relation_id)
            .map(|f| f.head_idx)
            .filter(|h| seen.insert(*h))
            .collect()
    }
}

/// Aggregate counts over a parsed corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub n_documents: usize,
    pub n_gold_facts: usize,
    pub n_distinct_relations: usize,
    pub max_facts_per_doc: usize,
    pub max_relations_per_doc: usize,
}

/// A label skipped during lenient parsing, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedLabel {
    pub doc_ordinal: usize,
    pub doc_id: String,
    pub label_index: usize,
    pub reason: String,
}

/// Parse output: documents plus any labels skipped in lenient mode.
#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    pub documents: Vec<Document>,
    pub skipped: Vec<SkippedLabel>,
}

/// Unknown relation codes: reject the corpus or collect a skipped-labels report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus file: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus file is not a JSON array: {0}")]
    Json(#[from] serde_json::Error),
    #[error("doc {ordinal} ({title:?}): {path}: {problem}")]
    Invalid {
        ordinal: usize,
        title: String,
        path: String,
        problem: String,
    },
}

// Wire-format mirror of the public DocRED/Re-DocRED release.

#[derive(Debug, Serialize, Deserialize)]
struct RawDocument {
    title: String,
    sents: Vec<Vec<String>>,
    #[serde(rename = "vertexSet")]
    vertex_set: Vec<Vec<RawMention>>,
    #[serde(default)]
    labels: Vec<RawLabel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawMention {
    name: String,
    sent_id: usize,
    pos: [usize; 2],
    #[serde(rename = "type")]
    entity_type: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLabel {
    h: usize,
    t: usize,
    r: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    evidence: Option<Vec<usize>>,
}

/// Parse a corpus document (JSON array text) against an ontology.
pub fn parse_corpus(
    source: &str,
    ontology: &RelationOntology,
    mode: ParseMode,
) -> Result<ParsedCorpus, CorpusError> {
    let raw_docs: Vec<serde_json::Value> = serde_json::from_str(source)?;
    let mut documents = Vec::with_capacity(raw_docs.len());
    let mut skipped = Vec::new();
    let mut title_counts: HashMap<String, usize> = HashMap::new();

    for (ordinal, value) in raw_docs.into_iter().enumerate() {
        let title_hint = value
            .get("title")
            .and_then(|t| t.as_str())
            .unwrap_or("<untitled>")
            .to_string();
        let raw: RawDocument =
            serde_json::from_value(value).map_err(|e| CorpusError::Invalid {
                ordinal,
                title: title_hint.clone(),
                path: "<document>".to_string(),
                problem: e.to_string(),
            })?;
        let doc = convert_document(ordinal, raw, ontology, mode, &mut title_counts, &mut skipped)?;
        documents.push(doc);
    }
    Ok(ParsedCorpus { documents, skipped })
}

/// Parse a corpus from a file path.
pub fn parse_corpus_file(
    path: impl AsRef<Path>,
    ontology: &RelationOntology,
    mode: ParseMode,
) -> Result<ParsedCorpus, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text, ontology, mode)
}

fn convert_document(
    ordinal: usize,
    raw: RawDocument,
    ontology: &RelationOntology,
    mode: ParseMode,
    title_counts: &mut HashMap<String, usize>,
    skipped: &mut Vec<SkippedLabel>,
) -> Result<Document, CorpusError> {
    let invalid = |path: String, problem: String| CorpusError::Invalid {
        ordinal,
        title: raw.title.clone(),
        path,
        problem,
    };

    let seen = title_counts.entry(raw.title.clone()).or_insert(0);
    *seen += 1;
    let doc_id = if *seen == 1 {
        raw.title.clone()
    } else {
        format!("{}#{}", raw.title, *seen)
    };

    let mut entities = Vec::with_capacity(raw.vertex_set.len());
    for (ei, raw_mentions) in raw.vertex_set.iter().enumerate() {
        if raw_mentions.is_empty() {
            return Err(invalid(
                format!("vertexSet[{ei}]"),
                "entity has no mentions".to_string(),
            ));
        }
        let mut mentions = Vec::with_capacity(raw_mentions.len());
        for (mi, m) in raw_mentions.iter().enumerate() {
            let path = format!("vertexSet[{ei}][{mi}]");
            if m.name.is_empty() {
                return Err(invalid(path, "mention text is empty".to_string()));
            }
            let sent_len = raw
                .sents
                .get(m.sent_id)
                .ok_or_else(|| {
                    invalid(
                        format!("{path}.sent_id"),
                        format!("sentence index {} out of range ({} sentences)", m.sent_id, raw.sents.len()),
                    )
                })?
                .len();
            let [start, end] = m.pos;
            if start >= end || end > sent_len {
                return Err(invalid(
                    format!("{path}.pos"),
                    format!("span [{start}, {end}) invalid for sentence {} of length {sent_len}", m.sent_id),
                ));
            }
            mentions.push(Mention {
                text: m.name.clone(),
                sent_id: m.sent_id,
                start,
                end,
                entity_type: m.entity_type.clone(),
            });
        }
        entities.push(Entity { mentions });
    }

    let mut gold_facts = Vec::with_capacity(raw.labels.len());
    for (li, label) in raw.labels.into_iter().enumerate() {
        let path = format!("labels[{li}]");
        let mut problem = None;
        if label.h >= entities.len() || label.t >= entities.len() {
            problem = Some(format!(
                "entity index out of range (h={}, t={}, {} entities)",
                label.h,
                label.t,
                entities.len()
            ));
        } else if label.h == label.t {
            problem = Some(format!("head equals tail (index {})", label.h));
        } else if ontology.resolve(&label.r).is_none() {
            problem = Some(format!("unknown relation code {:?}", label.r));
        }
        if let Some(problem) = problem {
            match mode {
                ParseMode::Strict => return Err(invalid(path, problem)),
                ParseMode::Lenient => {
                    skipped.push(SkippedLabel {
                        doc_ordinal: ordinal,
                        doc_id: doc_id.clone(),
                        label_index: li,
                        reason: problem,
                    });
                    continue;
                }
            }
        }
        gold_facts.push(GoldFact {
            head_idx: label.h,
            tail_idx: label.t,
            relation_id: label.r,
            evidence: label.evidence,
        });
    }

    Ok(Document {
        doc_id,
        title: Some(raw.title),
        sentences: raw.sents,
        entities,
        gold_facts,
    })
}

/// Serialize documents back to the wire format.
pub fn serialize_corpus(docs: &[Document]) -> String {
    let raw: Vec<RawDocument> = docs
        .iter()
        .map(|d| RawDocument {
            title: d.title.clone().unwrap_or_else(|| d.doc_id.clone()),
            sents: d.sentences.clone(),
            vertex_set: d
                .entities
                .iter()
                .map(|e| {
                    e.mentions
                        .iter()
                        .map(|m| RawMention {
                            name: m.text.clone(),
                            sent_id: m.sent_id,
                            pos: [m.start, m.end],
                            entity_type: m.entity_type.clone(),
                        })
                        .collect()
                })
                .collect(),
            labels: d
                .gold_facts
                .iter()
                .map(|f| RawLabel {
                    h: f.head_idx,
                    t: f.tail_idx,
                    r: f.relation_id.clone(),
                    evidence: f.evidence.clone(),
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&raw).expect("corpus serializes")
}

/// Remove exact duplicate facts (same head, relation, tail), preserving the
/// order of first occurrences. Returns the number removed.
pub fn dedup_facts(doc: &mut Document) -> usize {
    let before = doc.gold_facts.len();
    let mut seen: HashSet<(usize, String, usize)> = HashSet::new();
    doc.gold_facts
        .retain(|f| seen.insert((f.head_idx, f.relation_id.clone(), f.tail_idx)));
    before - doc.gold_facts.len()
}

/// One fact whose declared reciprocal is absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingInverse {
    pub head_idx: usize,
    pub tail_idx: usize,
    pub relation_id: String,
    pub inverse_id: String,
}

/// Report from [`check_inverse_consistency`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct InverseReport {
    pub missing: Vec<MissingInverse>,
    /// Facts actually appended (deduplicated), when fixing.
    pub added: usize,
}

/// List every fact `(h, r, t)` whose relation has a declared inverse `r'` but
/// where `(t, r', h)` is absent. With `fix` set, the missing inverse facts are
/// appended (deduplicated).
pub fn check_inverse_consistency(
    doc: &mut Document,
    ontology: &RelationOntology,
    fix: bool,
) -> InverseReport {
    let existing: HashSet<(usize, String, usize)> = doc
        .gold_facts
        .iter()
        .map(|f| (f.head_idx, f.relation_id.clone(), f.tail_idx))
        .collect();
    let mut report = InverseReport::default();
    let mut to_add: Vec<GoldFact> = Vec::new();
    let mut queued: HashSet<(usize, String, usize)> = HashSet::new();

    for fact in &doc.gold_facts {
        let Some(relation) = ontology.resolve(&fact.relation_id) else {
            continue;
        };
        let Some(inverse) = ontology.inverse_of(relation) else {
            continue;
        };
        let wanted = (fact.tail_idx, inverse.id.clone(), fact.head_idx);
        if existing.contains(&wanted) {
            continue;
        }
        report.missing.push(MissingInverse {
            head_idx: fact.head_idx,
            tail_idx: fact.tail_idx,
            relation_id: fact.relation_id.clone(),
            inverse_id: inverse.id.clone(),
        });
        if fix && queued.insert(wanted.clone()) {
            to_add.push(GoldFact {
                head_idx: fact.tail_idx,
                tail_idx: fact.head_idx,
                relation_id: inverse.id.clone(),
                evidence: fact.evidence.clone(),
            });
        }
    }
    report.added = to_add.len();
    doc.gold_facts.extend(to_add);
    report
}

/// Aggregate counts as defined on [`CorpusStats`].
pub fn corpus_stats(docs: &[Document]) -> CorpusStats {
    let mut relations: BTreeSet<&str> = BTreeSet::new();
    let mut max_facts = 0;
    let mut max_relations = 0;
    let mut n_facts = 0;
    for doc in docs {
        n_facts += doc.gold_facts.len();
        max_facts = max_facts.max(doc.gold_facts.len());
        let doc_relations: HashSet<&str> =
            doc.gold_facts.iter().map(|f| f.relation_id.as_str()).collect();
        max_relations = max_relations.max(doc_relations.len());
        relations.extend(doc_relations);
    }
    CorpusStats {
        n_documents: docs.len(),
        n_gold_facts: n_facts,
        n_distinct_relations: relations.len(),
        max_facts_per_doc: max_facts,
        max_relations_per_doc: max_relations,
    }
}
