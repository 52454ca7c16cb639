//! Three-stage instruction-tuning dataset generation.
//!
//! Each document yields one relation-listing sample, one head sample per gold
//! relation focus, and one fact sample per (relation, gold head). Gold
//! completions use first-mention alias strings and are produced by the same
//! function the oracle backend answers with, so generator and oracle agree by
//! construction.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{oracle_answer, OracleContext};
use crate::corpus::Document;
use crate::ontology::{Relation, RelationOntology};
use crate::prompts::{
    render_fact_prompt, render_head_prompt, render_relation_listing_prompt, RelationListingMode,
    Stage,
};

/// Sample context: which document, and for head/fact stages which relation
/// and subject the instruction is about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

/// One instruction-tuning pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningSample {
    pub stage: Stage,
    pub instruction: String,
    pub output: String,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, Copy)]
pub struct TuningOpts {
    /// Include relation descriptions in head/fact instructions.
    pub with_description: bool,
    /// Also emit head samples for relations absent from the document, with an
    /// empty completion. Off by default: the default dataset contains only
    /// the gold-backed samples.
    pub include_negatives: bool,
}

impl Default for TuningOpts {
    fn default() -> Self {
        TuningOpts {
            with_description: true,
            include_negatives: false,
        }
    }
}

/// Generate samples for a processed corpus, deterministically ordered by
/// corpus order, then relation name, then subject.
pub fn generate_samples(
    docs: &[Document],
    ontology: &RelationOntology,
    opts: &TuningOpts,
) -> Vec<TuningSample> {
    let mut samples = Vec::new();
    for doc in docs {
        generate_doc_samples(doc, ontology, opts, &mut samples);
    }
    samples
}

fn generate_doc_samples(
    doc: &Document,
    ontology: &RelationOntology,
    opts: &TuningOpts,
    samples: &mut Vec<TuningSample>,
) {
    let oracle = |stage: Stage, relation: Option<&Relation>, subject: Option<&str>| {
        oracle_answer(doc, stage, OracleContext { relation, subject }, ontology)
            .expect("gold relations resolve in the ontology")
    };

    samples.push(TuningSample {
        stage: Stage::RelationExtraction,
        instruction: render_relation_listing_prompt(doc, ontology, RelationListingMode::Open).text,
        output: oracle(Stage::RelationExtraction, None, None),
        meta: SampleMeta {
            doc_id: doc.doc_id.clone(),
            relation: None,
            subject: None,
        },
    });

    let mut relations: Vec<&Relation> = doc
        .gold_relation_ids()
        .iter()
        .filter_map(|rid| ontology.resolve(rid))
        .collect();
    relations.sort_by(|a, b| a.name.cmp(&b.name));

    for relation in &relations {
        samples.push(TuningSample {
            stage: Stage::HeadExtraction,
            instruction: render_head_prompt(doc, relation, opts.with_description).text,
            output: oracle(Stage::HeadExtraction, Some(relation), None),
            meta: SampleMeta {
                doc_id: doc.doc_id.clone(),
                relation: Some(relation.name.clone()),
                subject: None,
            },
        });

        let mut subjects: Vec<&str> = Vec::new();
        for head_idx in doc.gold_heads_for(&relation.id) {
            let first = doc.entities[head_idx].first_mention();
            if !subjects.contains(&first) {
                subjects.push(first);
            }
        }
        subjects.sort_unstable();
        for subject in subjects {
            samples.push(TuningSample {
                stage: Stage::FactExtraction,
                instruction: render_fact_prompt(doc, relation, Some(subject), opts.with_description)
                    .text,
                output: oracle(Stage::FactExtraction, Some(relation), Some(subject)),
                meta: SampleMeta {
                    doc_id: doc.doc_id.clone(),
                    relation: Some(relation.name.clone()),
                    subject: Some(subject.to_string()),
                },
            });
        }
    }

    if opts.include_negatives {
        let present: HashSet<&str> = relations.iter().map(|r| r.id.as_str()).collect();
        let mut absent: Vec<&Relation> = ontology
            .iter()
            .filter(|r| !present.contains(r.id.as_str()))
            .collect();
        absent.sort_by(|a, b| a.name.cmp(&b.name));
        for relation in absent {
            samples.push(TuningSample {
                stage: Stage::HeadExtraction,
                instruction: render_head_prompt(doc, relation, opts.with_description).text,
                output: String::new(),
                meta: SampleMeta {
                    doc_id: doc.doc_id.clone(),
                    relation: Some(relation.name.clone()),
                    subject: None,
                },
            });
        }
    }
}

/// Per-stage counts and shares of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningManifest {
    pub n_relation: usize,
    pub n_head: usize,
    pub n_fact: usize,
    pub total: usize,
    pub relation_share_pct: f64,
    pub head_share_pct: f64,
    pub fact_share_pct: f64,
}

pub fn manifest(samples: &[TuningSample]) -> TuningManifest {
    let count = |stage: Stage| samples.iter().filter(|s| s.stage == stage).count();
    let n_relation = count(Stage::RelationExtraction);
    let n_head = count(Stage::HeadExtraction);
    let n_fact = count(Stage::FactExtraction);
    let total = samples.len();
    let pct = |n: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * n as f64 / total as f64
        }
    };
    TuningManifest {
        n_relation,
        n_head,
        n_fact,
        total,
        relation_share_pct: pct(n_relation),
        head_share_pct: pct(n_head),
        fact_share_pct: pct(n_fact),
    }
}

/// JSON-lines serialization, one sample per line.
pub fn samples_to_jsonl(samples: &[TuningSample]) -> String {
    let mut out = String::new();
    for sample in samples {
        out.push_str(&serde_json::to_string(sample).expect("sample serializes"));
        out.push('\n');
    }
    out
}

/// Write the JSON-lines sample file and return the manifest.
pub fn write_samples(samples: &[TuningSample], path: impl AsRef<Path>) -> std::io::Result<TuningManifest> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(samples_to_jsonl(samples).as_bytes())?;
    Ok(manifest(samples))
}
