//! Shared test support: random evaluation instances, an independent
//! maximum-matching scorer, and synthetic corpora for end-to-end runs.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::prelude::*;

use docre::corpus::{Document, Entity, GoldFact, Mention};
use docre::eval::normalize_alias;
use docre::ontology::{Relation, RelationOntology};
use docre::pipeline::{Paradigm, PredictedFact};

pub fn mention(text: &str) -> Mention {
    Mention {
        text: text.to_string(),
        sent_id: 0,
        start: 0,
        end: 1,
        entity_type: "MISC".to_string(),
    }
}

/// Totals from an exhaustive maximum-bipartite-matching scorer, written
/// independently of the greedy implementation it checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimalTotals {
    pub tp: usize,
    pub fp: usize,
    pub duplicate_hits: usize,
}

/// Compatibility graph + augmenting-path maximum matching. A prediction with
/// no compatible gold at all is a false positive under any assignment; the
/// remainder beyond the maximum matching are duplicate hits.
pub fn optimal_match(preds: &[PredictedFact], doc: &Document) -> OptimalTotals {
    let alias_sets: Vec<HashSet<String>> = doc
        .entities
        .iter()
        .map(|e| e.mentions.iter().map(|m| normalize_alias(&m.text)).collect())
        .collect();
    let fits: Vec<Vec<usize>> = preds
        .iter()
        .map(|p| {
            let head = normalize_alias(&p.head_text);
            let tail = normalize_alias(&p.tail_text);
            doc.gold_facts
                .iter()
                .enumerate()
                .filter(|(_, g)| {
                    g.relation_id == p.relation.id
                        && alias_sets[g.head_idx].contains(&head)
                        && alias_sets[g.tail_idx].contains(&tail)
                })
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    fn augment(
        i: usize,
        fits: &[Vec<usize>],
        visited: &mut [bool],
        matched: &mut [Option<usize>],
    ) -> bool {
        for &j in &fits[i] {
            if visited[j] {
                continue;
            }
            visited[j] = true;
            if matched[j].is_none()
                || augment(matched[j].unwrap(), fits, visited, matched)
            {
                matched[j] = Some(i);
                return true;
            }
        }
        false
    }

    let mut matched: Vec<Option<usize>> = vec![None; doc.gold_facts.len()];
    let mut tp = 0;
    for i in 0..preds.len() {
        if fits[i].is_empty() {
            continue;
        }
        let mut visited = vec![false; doc.gold_facts.len()];
        if augment(i, &fits, &mut visited, &mut matched) {
            tp += 1;
        }
    }
    let fp = fits.iter().filter(|f| f.is_empty()).count();
    OptimalTotals {
        tp,
        fp,
        duplicate_hits: preds.len() - tp - fp,
    }
}

/// One random matching instance: a small document with overlapping alias
/// pools plus perturbed predictions (alias swaps, duplications, relation
/// corruptions, pure noise).
pub fn random_instance(
    rng: &mut impl Rng,
    ontology: &RelationOntology,
) -> (Document, Vec<PredictedFact>) {
    let all: Vec<&Relation> = ontology.iter().collect();
    let relations: Vec<&Relation> = all.choose_multiple(rng, 4).copied().collect();

    // Aliases are mostly unique; occasionally an entity reuses another
    // entity's alias, which is what separates greedy from optimal crediting.
    let n_entities = rng.gen_range(2..=10);
    let mut next_alias = 0usize;
    let mut all_aliases: Vec<String> = Vec::new();
    let entities: Vec<Entity> = (0..n_entities)
        .map(|_| {
            let n_aliases = rng.gen_range(1..=3);
            let mut texts: Vec<String> = Vec::new();
            for _ in 0..n_aliases {
                let alias = if !all_aliases.is_empty() && rng.gen_bool(0.05) {
                    all_aliases.choose(rng).unwrap().clone()
                } else {
                    next_alias += 1;
                    format!("n{next_alias}")
                };
                if !texts.contains(&alias) {
                    texts.push(alias.clone());
                    all_aliases.push(alias);
                }
            }
            Entity {
                mentions: texts.iter().map(|t| mention(t)).collect(),
            }
        })
        .collect();

    let mut gold_facts: Vec<GoldFact> = Vec::new();
    let mut seen = HashSet::new();
    for _ in 0..rng.gen_range(0..=15) {
        let head_idx = rng.gen_range(0..n_entities);
        let tail_idx = rng.gen_range(0..n_entities);
        if head_idx == tail_idx {
            continue;
        }
        let relation_id = relations.choose(rng).unwrap().id.clone();
        if seen.insert((head_idx, relation_id.clone(), tail_idx)) {
            gold_facts.push(GoldFact {
                head_idx,
                tail_idx,
                relation_id,
                evidence: None,
            });
        }
    }

    let doc = Document {
        doc_id: "generated".to_string(),
        title: None,
        sentences: vec![vec!["tok".to_string()]],
        entities,
        gold_facts,
    };

    let mut preds: Vec<PredictedFact> = Vec::new();
    let make = |head: String, relation: &Relation, tail: String| PredictedFact {
        doc_id: "generated".to_string(),
        head_text: head,
        relation: relation.clone(),
        tail_text: tail,
        paradigm: Paradigm::Drhf,
        source_records: Vec::new(),
    };
    for gold in &doc.gold_facts {
        if rng.gen_bool(0.85) {
            let head = doc.entities[gold.head_idx]
                .mentions
                .choose(rng)
                .unwrap()
                .text
                .clone();
            let tail = doc.entities[gold.tail_idx]
                .mentions
                .choose(rng)
                .unwrap()
                .text
                .clone();
            let relation = if rng.gen_bool(0.15) {
                relations.choose(rng).unwrap()
            } else {
                ontology.resolve(&gold.relation_id).unwrap()
            };
            let pred = make(head, relation, tail);
            if rng.gen_bool(0.25) {
                preds.push(pred.clone());
            }
            preds.push(pred);
        }
    }
    for _ in 0..rng.gen_range(0..=3) {
        preds.push(make(
            format!("noise{}", rng.gen_range(0..9)),
            relations.choose(rng).unwrap(),
            format!("noise{}", rng.gen_range(0..9)),
        ));
    }
    preds.shuffle(rng);
    (doc, preds)
}

/// Synthetic corpus with unambiguous aliasing: mentions occur as tokens of
/// the passage (so passages are unique per document) and every gold fact is
/// uniquely reconstructible from first-mention strings, so a perfect model
/// scores exactly 100.
pub fn synthetic_corpus(rng: &mut impl Rng, ontology: &RelationOntology, n_docs: usize) -> Vec<Document> {
    let all: Vec<&Relation> = ontology.iter().collect();
    (0..n_docs)
        .map(|d| {
            let n_entities = rng.gen_range(2..=8);
            let mut sentences: Vec<Vec<String>> = vec![Vec::new(); 3];
            let entities: Vec<Entity> = (0..n_entities)
                .map(|e| {
                    let n_aliases = rng.gen_range(1..=3);
                    let mentions = (0..n_aliases)
                        .map(|a| {
                            let token = format!("Entity{d}x{e}a{a}");
                            let sent_id = rng.gen_range(0..sentences.len());
                            sentences[sent_id].push(token.clone());
                            Mention {
                                text: token,
                                sent_id,
                                start: sentences[sent_id].len() - 1,
                                end: sentences[sent_id].len(),
                                entity_type: "MISC".to_string(),
                            }
                        })
                        .collect();
                    Entity { mentions }
                })
                .collect();
            for sentence in &mut sentences {
                if sentence.is_empty() {
                    sentence.push(".".to_string());
                }
            }
            let mut gold_facts = Vec::new();
            let mut seen = HashSet::new();
            for _ in 0..rng.gen_range(0..=12) {
                let head_idx = rng.gen_range(0..n_entities);
                let tail_idx = rng.gen_range(0..n_entities);
                if head_idx == tail_idx {
                    continue;
                }
                let relation = all.choose(rng).unwrap();
                if seen.insert((head_idx, relation.id.clone(), tail_idx)) {
                    gold_facts.push(GoldFact {
                        head_idx,
                        tail_idx,
                        relation_id: relation.id.clone(),
                        evidence: None,
                    });
                }
            }
            Document {
                doc_id: format!("doc{d}"),
                title: Some(format!("doc{d}")),
                sentences,
                entities,
                gold_facts,
            }
        })
        .collect()
}
