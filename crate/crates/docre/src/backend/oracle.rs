//! Gold-answering oracle backend.
//!
//! Answers every stage prompt exactly as a perfect model would under the
//! prompt output-format instructions, reading from gold annotations. Entity
//! strings use the first mention of each gold entity, so oracle output is
//! deterministic and always alias-correct.

use std::collections::HashMap;
use std::time::Duration;

use crate::corpus::Document;
use crate::ontology::{Relation, RelationOntology};
use crate::prompts::{format_fact_line, Stage};

use super::{BackendError, BackendResponse, ChatBackend, ChatRequest};

/// Stage context for an oracle answer.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleContext<'a> {
    pub relation: Option<&'a Relation>,
    /// Fixed subject for stage-3 prompts; absent for per-relation fact prompts.
    pub subject: Option<&'a str>,
}

fn push_unique(lines: &mut Vec<String>, line: String) {
    if !lines.contains(&line) {
        lines.push(line);
    }
}

/// The text a perfect model would emit for `stage` on `doc`.
///
/// Relation stage: gold relation names one per line, or `no relation`.
/// Head stage: first-mention strings of the relation's gold head entities.
/// Fact stage: bracketed `[head, relation, tail]` lines; restricted to the
/// context relation and subject when given, otherwise all gold facts.
pub fn oracle_answer(
    doc: &Document,
    stage: Stage,
    context: OracleContext<'_>,
    ontology: &RelationOntology,
) -> Result<String, BackendError> {
    match stage {
        Stage::RelationExtraction => {
            let mut lines = Vec::new();
            for rid in doc.gold_relation_ids() {
                let relation = ontology
                    .resolve(rid)
                    .ok_or_else(|| BackendError::Oracle(format!("unknown gold relation {rid:?}")))?;
                lines.push(relation.name.clone());
            }
            if lines.is_empty() {
                Ok("no relation".to_string())
            } else {
                Ok(lines.join("\n"))
            }
        }
        Stage::HeadExtraction => {
            let relation = context.relation.ok_or_else(|| {
                BackendError::Oracle("head stage requires a relation context".to_string())
            })?;
            let mut lines = Vec::new();
            for head_idx in doc.gold_heads_for(&relation.id) {
                push_unique(&mut lines, doc.entities[head_idx].first_mention().to_string());
            }
            Ok(lines.join("\n"))
        }
        Stage::FactExtraction => {
            let mut lines = Vec::new();
            for fact in &doc.gold_facts {
                let relation = ontology.resolve(&fact.relation_id).ok_or_else(|| {
                    BackendError::Oracle(format!("unknown gold relation {:?}", fact.relation_id))
                })?;
                if let Some(wanted) = context.relation {
                    if relation.id != wanted.id {
                        continue;
                    }
                }
                let head = doc.entities[fact.head_idx].first_mention();
                if let Some(subject) = context.subject {
                    // Mention strings in source data occasionally carry stray
                    // whitespace; parsed subjects are always trimmed.
                    if head.trim() != subject.trim() {
                        continue;
                    }
                }
                let tail = doc.entities[fact.tail_idx].first_mention();
                push_unique(&mut lines, format_fact_line(head, &relation.name, tail));
            }
            Ok(lines.join("\n"))
        }
    }
}

/// Backend that serves oracle answers, resolving the document and stage
/// context from the request metadata.
pub struct OracleBackend {
    id: String,
    docs: HashMap<String, Document>,
    ontology: RelationOntology,
}

impl OracleBackend {
    pub fn new(docs: &[Document], ontology: &RelationOntology) -> Self {
        OracleBackend {
            id: "oracle".to_string(),
            docs: docs.iter().map(|d| (d.doc_id.clone(), d.clone())).collect(),
            ontology: ontology.clone(),
        }
    }
}

impl ChatBackend for OracleBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, req: &ChatRequest) -> Result<BackendResponse, BackendError> {
        let doc = self.docs.get(&req.meta.doc_id).ok_or_else(|| {
            BackendError::Oracle(format!("unknown doc id {:?}", req.meta.doc_id))
        })?;
        let relation = match &req.meta.relation {
            Some(name) => Some(self.ontology.resolve(name).ok_or_else(|| {
                BackendError::Oracle(format!("unknown relation {name:?} in request context"))
            })?),
            None => None,
        };
        let context = OracleContext {
            relation,
            subject: req.meta.subject.as_deref(),
        };
        let text = oracle_answer(doc, req.stage, context, &self.ontology)?;
        Ok(BackendResponse {
            text,
            latency: Duration::ZERO,
            token_usage: None,
            backend_id: self.id.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, ParseMode};

    fn ontology() -> &'static RelationOntology {
        RelationOntology::re_docred()
    }

    fn docs() -> Vec<Document> {
        let json = serde_json::json!([
            {
                "title": "Musk",
                "sents": [["Elon", "Musk", "founded", "SpaceX", "in", "the", "United", "States", "."]],
                "vertexSet": [
                    [{"name": "Elon Musk", "sent_id": 0, "pos": [0, 2], "type": "PER"}],
                    [{"name": "United States", "sent_id": 0, "pos": [6, 8], "type": "LOC"}],
                    [{"name": "SpaceX", "sent_id": 0, "pos": [3, 4], "type": "ORG"}]
                ],
                "labels": [
                    {"h": 0, "t": 1, "r": "P27"},
                    {"h": 2, "t": 0, "r": "P112"},
                    {"h": 2, "t": 1, "r": "P17"}
                ]
            },
            {
                "title": "Empty",
                "sents": [["Nothing", "here", "."]],
                "vertexSet": [[{"name": "Nothing", "sent_id": 0, "pos": [0, 1], "type": "MISC"}]],
                "labels": []
            }
        ])
        .to_string();
        parse_corpus(&json, ontology(), ParseMode::Strict).unwrap().documents
    }

    #[test]
    fn relation_stage_lists_gold_relations() {
        let docs = docs();
        let text = oracle_answer(
            &docs[0],
            Stage::RelationExtraction,
            OracleContext::default(),
            ontology(),
        )
        .unwrap();
        assert_eq!(text, "country of citizenship\nfounded by\ncountry");
    }

    #[test]
    fn empty_doc_answers_no_relation() {
        let docs = docs();
        let text = oracle_answer(
            &docs[1],
            Stage::RelationExtraction,
            OracleContext::default(),
            ontology(),
        )
        .unwrap();
        assert_eq!(text, "no relation");
    }

    #[test]
    fn head_stage_lists_first_mentions() {
        let docs = docs();
        let citizenship = ontology().resolve("P27").unwrap();
        let text = oracle_answer(
            &docs[0],
            Stage::HeadExtraction,
            OracleContext {
                relation: Some(citizenship),
                subject: None,
            },
            ontology(),
        )
        .unwrap();
        assert_eq!(text, "Elon Musk");
    }

    #[test]
    fn head_stage_empty_for_absent_relation() {
        let docs = docs();
        let father = ontology().resolve("father").unwrap();
        let text = oracle_answer(
            &docs[0],
            Stage::HeadExtraction,
            OracleContext {
                relation: Some(father),
                subject: None,
            },
            ontology(),
        )
        .unwrap();
        assert_eq!(text, "");
    }

    #[test]
    fn fact_stage_with_subject() {
        let docs = docs();
        let founded_by = ontology().resolve("founded by").unwrap();
        let text = oracle_answer(
            &docs[0],
            Stage::FactExtraction,
            OracleContext {
                relation: Some(founded_by),
                subject: Some("SpaceX"),
            },
            ontology(),
        )
        .unwrap();
        assert_eq!(text, "[SpaceX, founded by, Elon Musk]");
    }

    #[test]
    fn fact_stage_emits_one_line_per_gold_tail() {
        let mut docs = docs();
        // Second citizenship fact for the same head.
        docs[0].gold_facts.push(crate::corpus::GoldFact {
            head_idx: 0,
            tail_idx: 2,
            relation_id: "P27".to_string(),
            evidence: None,
        });
        let citizenship = ontology().resolve("P27").unwrap();
        let text = oracle_answer(
            &docs[0],
            Stage::FactExtraction,
            OracleContext {
                relation: Some(citizenship),
                subject: Some("Elon Musk"),
            },
            ontology(),
        )
        .unwrap();
        assert_eq!(
            text,
            "[Elon Musk, country of citizenship, United States]\n[Elon Musk, country of citizenship, SpaceX]"
        );
    }

    #[test]
    fn fact_stage_without_context_lists_everything() {
        let docs = docs();
        let text = oracle_answer(
            &docs[0],
            Stage::FactExtraction,
            OracleContext::default(),
            ontology(),
        )
        .unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("[SpaceX, country, United States]"));
    }

    #[test]
    fn backend_resolves_context_from_meta() {
        use crate::backend::{DecodeParams, RequestMeta};
        let docs = docs();
        let backend = OracleBackend::new(&docs, ontology());
        let resp = backend
            .chat(&ChatRequest {
                prompt: "p".to_string(),
                stage: Stage::HeadExtraction,
                decode: DecodeParams::default(),
                meta: RequestMeta {
                    doc_id: "Musk".to_string(),
                    relation: Some("country".to_string()),
                    subject: None,
                },
            })
            .unwrap();
        assert_eq!(resp.text, "SpaceX");

        let err = backend
            .chat(&ChatRequest {
                prompt: "p".to_string(),
                stage: Stage::HeadExtraction,
                decode: DecodeParams::default(),
                meta: RequestMeta {
                    doc_id: "Musk".to_string(),
                    relation: Some("not a relation".to_string()),
                    subject: None,
                },
            })
            .unwrap_err();
        assert!(matches!(err, BackendError::Oracle(_)));
    }
}
