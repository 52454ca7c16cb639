//! Prompt rendering and free-text response parsing.
//!
//! Templates ship in-repo under `templates/` with named placeholders
//! `{sentences}`, `{relation}`, `{relation_list}`, `{description}` and
//! `{subject}`. Literal braces are written `{{` and `}}`. Parsing turns model
//! output back into typed values line by line; a line is never silently
//! dropped: it is accepted into the value, rejected with a reason, or blank.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::ontology::{Relation, RelationOntology};

/// The three extraction stages, each served by its own backend binding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    RelationExtraction,
    HeadExtraction,
    FactExtraction,
}

impl Stage {
    pub const ALL: [Stage; 3] = [
        Stage::RelationExtraction,
        Stage::HeadExtraction,
        Stage::FactExtraction,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::RelationExtraction => "relation",
            Stage::HeadExtraction => "head",
            Stage::FactExtraction => "fact",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which template produced a rendered prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemplateId {
    RelationCandidates,
    RelationOpen,
    Head,
    HeadDescribed,
    FactWithSubject,
    FactWithSubjectDescribed,
    FactPerRelation,
    FactPerRelationDescribed,
    FactsDirect,
    FactsWithRelations,
}

impl TemplateId {
    fn text(&self) -> &'static str {
        match self {
            TemplateId::RelationCandidates => include_str!("../templates/relation_candidates.txt"),
            TemplateId::RelationOpen => include_str!("../templates/relation_open.txt"),
            TemplateId::Head => include_str!("../templates/head.txt"),
            TemplateId::HeadDescribed => include_str!("../templates/head_desc.txt"),
            TemplateId::FactWithSubject => include_str!("../templates/fact_subject.txt"),
            TemplateId::FactWithSubjectDescribed => {
                include_str!("../templates/fact_subject_desc.txt")
            }
            TemplateId::FactPerRelation => include_str!("../templates/fact_relation.txt"),
            TemplateId::FactPerRelationDescribed => {
                include_str!("../templates/fact_relation_desc.txt")
            }
            TemplateId::FactsDirect => include_str!("../templates/facts_direct.txt"),
            TemplateId::FactsWithRelations => include_str!("../templates/facts_with_relations.txt"),
        }
    }
}

/// A fully rendered prompt with the slot values recorded verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub stage: Stage,
    pub template: TemplateId,
    pub text: String,
    pub slots: BTreeMap<String, String>,
}

/// Candidate-list prompt (chat setting) or open instruction (tuned setting).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationListingMode {
    WithCandidates,
    Open,
}

fn fill(template: &'static str, slots: &BTreeMap<String, String>) -> String {
    let template = template.trim_end();
    let mut out = String::with_capacity(template.len());
    let mut chars = template.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '{' => {
                if let Some(&(_, '{')) = chars.peek() {
                    chars.next();
                    out.push('{');
                    continue;
                }
                let start = i + 1;
                let mut end = None;
                for (j, d) in chars.by_ref() {
                    if d == '}' {
                        end = Some(j);
                        break;
                    }
                }
                let end = end.unwrap_or_else(|| panic!("unterminated placeholder in template"));
                let name = &template[start..end];
                let value = slots
                    .get(name)
                    .unwrap_or_else(|| panic!("unfilled placeholder {{{name}}}"));
                out.push_str(value);
            }
            '}' => {
                if let Some(&(_, '}')) = chars.peek() {
                    chars.next();
                }
                out.push('}');
            }
            c => out.push(c),
        }
    }
    out
}

fn render(stage: Stage, template: TemplateId, slots: BTreeMap<String, String>) -> RenderedPrompt {
    let text = fill(template.text(), &slots);
    RenderedPrompt {
        stage,
        template,
        text,
        slots,
    }
}

fn relation_list_value(ontology: &RelationOntology) -> String {
    ontology.names().join(", ")
}

/// Stage-1 prompt: which relations can be derived from the passage.
pub fn render_relation_listing_prompt(
    doc: &Document,
    ontology: &RelationOntology,
    mode: RelationListingMode,
) -> RenderedPrompt {
    let mut slots = BTreeMap::new();
    slots.insert("sentences".to_string(), doc.text());
    match mode {
        RelationListingMode::WithCandidates => {
            slots.insert("relation_list".to_string(), relation_list_value(ontology));
            render(Stage::RelationExtraction, TemplateId::RelationCandidates, slots)
        }
        RelationListingMode::Open => {
            render(Stage::RelationExtraction, TemplateId::RelationOpen, slots)
        }
    }
}

/// Stage-2 prompt: entities that can serve as the subject of a relation.
pub fn render_head_prompt(
    doc: &Document,
    relation: &Relation,
    with_description: bool,
) -> RenderedPrompt {
    let mut slots = BTreeMap::new();
    slots.insert("sentences".to_string(), doc.text());
    slots.insert("relation".to_string(), relation.name.clone());
    if with_description {
        slots.insert("description".to_string(), relation.description.clone());
        render(Stage::HeadExtraction, TemplateId::HeadDescribed, slots)
    } else {
        render(Stage::HeadExtraction, TemplateId::Head, slots)
    }
}

/// Stage-3 prompt: triplet facts for a relation, optionally pinned to a subject.
pub fn render_fact_prompt(
    doc: &Document,
    relation: &Relation,
    subject: Option<&str>,
    with_description: bool,
) -> RenderedPrompt {
    let mut slots = BTreeMap::new();
    slots.insert("sentences".to_string(), doc.text());
    slots.insert("relation".to_string(), relation.name.clone());
    if with_description {
        slots.insert("description".to_string(), relation.description.clone());
    }
    match (subject, with_description) {
        (Some(subject), true) => {
            slots.insert("subject".to_string(), subject.to_string());
            render(Stage::FactExtraction, TemplateId::FactWithSubjectDescribed, slots)
        }
        (Some(subject), false) => {
            slots.insert("subject".to_string(), subject.to_string());
            render(Stage::FactExtraction, TemplateId::FactWithSubject, slots)
        }
        (None, true) => render(Stage::FactExtraction, TemplateId::FactPerRelationDescribed, slots),
        (None, false) => render(Stage::FactExtraction, TemplateId::FactPerRelation, slots),
    }
}

/// Single-shot prompt asking for every fact at once, candidates embedded.
pub fn render_facts_direct_prompt(doc: &Document, ontology: &RelationOntology) -> RenderedPrompt {
    let mut slots = BTreeMap::new();
    slots.insert("sentences".to_string(), doc.text());
    slots.insert("relation_list".to_string(), relation_list_value(ontology));
    render(Stage::FactExtraction, TemplateId::FactsDirect, slots)
}

/// Facts prompt with a set of predicted relations embedded.
pub fn render_facts_with_relations_prompt(
    doc: &Document,
    relations: &[&Relation],
) -> RenderedPrompt {
    let mut slots = BTreeMap::new();
    slots.insert("sentences".to_string(), doc.text());
    slots.insert(
        "relation_list".to_string(),
        relations
            .iter()
            .map(|r| r.name.as_str())
            .collect::<Vec<_>>()
            .join(", "),
    );
    render(Stage::FactExtraction, TemplateId::FactsWithRelations, slots)
}

/// Why a response line was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    NotInOntology,
    Duplicate,
    NoRelationSentinel,
    NotInPassage,
    MissingBrackets,
    RelationAnchorMissing,
    AmbiguousRelationAnchor,
    SubjectMismatch,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::NotInOntology => "not-in-ontology",
            RejectReason::Duplicate => "duplicate",
            RejectReason::NoRelationSentinel => "no-relation-sentinel",
            RejectReason::NotInPassage => "not-in-passage",
            RejectReason::MissingBrackets => "missing-brackets",
            RejectReason::RelationAnchorMissing => "relation-anchor-missing",
            RejectReason::AmbiguousRelationAnchor => "ambiguous-relation-anchor",
            RejectReason::SubjectMismatch => "subject-mismatch",
        };
        f.write_str(s)
    }
}

/// A line that did not contribute to the parsed value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub line: String,
    pub reason: RejectReason,
}

/// Line-accounted parse result: every input line lands in `value`, in
/// `rejected_lines`, or was blank.
#[derive(Debug, Clone)]
pub struct ParseOutcome<T> {
    pub value: T,
    pub rejected_lines: Vec<RejectedLine>,
    pub raw: String,
    pub blank_lines: usize,
}

/// One triple parsed from a bracketed fact line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTriple {
    pub head: String,
    pub relation: Relation,
    pub tail: String,
}

/// Strip a leading bullet or numbering marker ("- x", "* x", "1. x", "2) x",
/// "(3) x") plus surrounding whitespace.
fn strip_lead_marker(line: &str) -> &str {
    let t = line.trim();
    for bullet in ["-", "*", "•"] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return rest.trim();
        }
    }
    let bare = t.strip_prefix('(').unwrap_or(t);
    let digits = bare.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let after = &bare[digits..];
        for marker in [".", ")"] {
            if let Some(rest) = after.strip_prefix(marker) {
                return rest.trim();
            }
        }
    }
    t
}

fn is_no_relation_sentinel(line: &str) -> bool {
    let t = line.trim().trim_end_matches('.').trim();
    t.eq_ignore_ascii_case("no relation") || t.eq_ignore_ascii_case("no relations")
}

/// Parse a relation-listing response: one relation name per line, matched
/// case-insensitively against the ontology; `no relation` is the empty-result
/// sentinel; duplicates collapse to the first occurrence.
pub fn parse_relation_list(raw: &str, ontology: &RelationOntology) -> ParseOutcome<Vec<Relation>> {
    let mut value: Vec<Relation> = Vec::new();
    let mut seen_ids: Vec<String> = Vec::new();
    let mut rejected_lines = Vec::new();
    let mut blank_lines = 0;
    for line in raw.lines() {
        if line.trim().is_empty() {
            blank_lines += 1;
            continue;
        }
        let stripped = strip_lead_marker(line);
        if is_no_relation_sentinel(stripped) {
            rejected_lines.push(RejectedLine {
                line: line.to_string(),
                reason: RejectReason::NoRelationSentinel,
            });
            continue;
        }
        match ontology.resolve_name_ci(stripped) {
            Some(rel) if seen_ids.contains(&rel.id) => rejected_lines.push(RejectedLine {
                line: line.to_string(),
                reason: RejectReason::Duplicate,
            }),
            Some(rel) => {
                seen_ids.push(rel.id.clone());
                value.push(rel.clone());
            }
            None => rejected_lines.push(RejectedLine {
                line: line.to_string(),
                reason: RejectReason::NotInOntology,
            }),
        }
    }
    ParseOutcome {
        value,
        rejected_lines,
        raw: raw.to_string(),
        blank_lines,
    }
}

/// Parse an entity-listing response: one entity per line. In strict mode,
/// entities that do not occur in the passage text are rejected.
pub fn parse_entity_list(raw: &str, doc: &Document, strict: bool) -> ParseOutcome<Vec<String>> {
    let doc_text = doc.text();
    let mut value: Vec<String> = Vec::new();
    let mut rejected_lines = Vec::new();
    let mut blank_lines = 0;
    for line in raw.lines() {
        if line.trim().is_empty() {
            blank_lines += 1;
            continue;
        }
        let entity = strip_lead_marker(line);
        if entity.is_empty() {
            blank_lines += 1;
            continue;
        }
        if strict && !doc_text.contains(entity) {
            rejected_lines.push(RejectedLine {
                line: line.to_string(),
                reason: RejectReason::NotInPassage,
            });
            continue;
        }
        if value.iter().any(|v| v == entity) {
            rejected_lines.push(RejectedLine {
                line: line.to_string(),
                reason: RejectReason::Duplicate,
            });
        } else {
            value.push(entity.to_string());
        }
    }
    ParseOutcome {
        value,
        rejected_lines,
        raw: raw.to_string(),
        blank_lines,
    }
}

/// Byte offsets where `needle` occurs in `haystack`, ASCII-case-insensitively.
/// Relation names are ASCII, so offsets land on char boundaries.
fn find_ci(haystack: &str, needle: &str) -> Vec<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || h.len() < n.len() {
        return Vec::new();
    }
    (0..=h.len() - n.len())
        .filter(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
        .collect()
}

/// Split bracketed content on a comma-delimited occurrence of the relation
/// name: `head, <name>, tail`. Returns the leftmost valid split.
fn anchor_split<'a>(content: &'a str, name: &str) -> Option<(&'a str, &'a str)> {
    for idx in find_ci(content, name) {
        let before = &content[..idx];
        let after = &content[idx + name.len()..];
        let before = before.trim_end();
        let after = after.trim_start();
        let Some(head) = before.strip_suffix(',') else {
            continue;
        };
        let Some(tail) = after.strip_prefix(',') else {
            continue;
        };
        let head = head.trim();
        let tail = tail.trim();
        if !head.is_empty() && !tail.is_empty() {
            return Some((head, tail));
        }
    }
    None
}

enum Anchor<'a> {
    Known(&'a Relation),
    Search(&'a RelationOntology),
}

fn parse_fact_lines(
    raw: &str,
    anchor: Anchor<'_>,
    fixed_subject: Option<&str>,
    doc: &Document,
    strict: bool,
) -> ParseOutcome<Vec<ParsedTriple>> {
    let doc_text = doc.text();
    let mut value = Vec::new();
    let mut rejected_lines = Vec::new();
    let mut blank_lines = 0;

    for line in raw.lines() {
        if line.trim().is_empty() {
            blank_lines += 1;
            continue;
        }
        let reject = |reason: RejectReason| RejectedLine {
            line: line.to_string(),
            reason,
        };
        let stripped = strip_lead_marker(line);
        let Some(open) = stripped.find('[') else {
            rejected_lines.push(reject(RejectReason::MissingBrackets));
            continue;
        };
        let Some(close) = stripped.rfind(']') else {
            rejected_lines.push(reject(RejectReason::MissingBrackets));
            continue;
        };
        if close <= open {
            rejected_lines.push(reject(RejectReason::MissingBrackets));
            continue;
        }
        let content = &stripped[open + 1..close];

        let split = match &anchor {
            Anchor::Known(relation) => anchor_split(content, &relation.name)
                .map(|(head, tail)| ((*relation).clone(), head, tail)),
            Anchor::Search(ontology) => {
                let mut candidates: Vec<(Relation, &str, &str)> = Vec::new();
                for relation in ontology.iter() {
                    if let Some((head, tail)) = anchor_split(content, &relation.name) {
                        candidates.push((relation.clone(), head, tail));
                    }
                }
                if candidates.len() > 1 {
                    rejected_lines.push(reject(RejectReason::AmbiguousRelationAnchor));
                    continue;
                }
                candidates.pop()
            }
        };
        let Some((relation, head, tail)) = split else {
            rejected_lines.push(reject(RejectReason::RelationAnchorMissing));
            continue;
        };
        if let Some(subject) = fixed_subject {
            if head != subject.trim() {
                rejected_lines.push(reject(RejectReason::SubjectMismatch));
                continue;
            }
        }
        if strict && (!doc_text.contains(head) || !doc_text.contains(tail)) {
            rejected_lines.push(reject(RejectReason::NotInPassage));
            continue;
        }
        value.push(ParsedTriple {
            head: head.to_string(),
            relation,
            tail: tail.to_string(),
        });
    }
    ParseOutcome {
        value,
        rejected_lines,
        raw: raw.to_string(),
        blank_lines,
    }
}

/// Parse fact lines when the relation is known at parse time (per-relation
/// prompts). The relation name anchors the head/tail split, so commas inside
/// entity names survive.
pub fn parse_fact_list(
    raw: &str,
    relation: &Relation,
    fixed_subject: Option<&str>,
    doc: &Document,
    strict: bool,
) -> ParseOutcome<Vec<ParsedTriple>> {
    parse_fact_lines(raw, Anchor::Known(relation), fixed_subject, doc, strict)
}

/// Parse fact lines when the relation is unknown per line: every ontology
/// name is tried as an anchor and only a unique match is accepted.
pub fn parse_fact_list_any(
    raw: &str,
    ontology: &RelationOntology,
    doc: &Document,
    strict: bool,
) -> ParseOutcome<Vec<ParsedTriple>> {
    parse_fact_lines(raw, Anchor::Search(ontology), None, doc, strict)
}

/// The bracketed output line format the prompts ask for.
pub fn format_fact_line(head: &str, relation_name: &str, tail: &str) -> String {
    format!("[{head}, {relation_name}, {tail}]")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, ParseMode};

    fn ontology() -> &'static RelationOntology {
        RelationOntology::re_docred()
    }

    fn sample_doc() -> Document {
        let json = serde_json::json!([
            {
                "title": "T",
                "sents": [
                    ["Harvard", "University", "is", "in", "Cambridge", ",", "Massachusetts", "."],
                    ["Elon", "Musk", "lives", "in", "the", "United", "States", "."]
                ],
                "vertexSet": [
                    [{"name": "Harvard University", "sent_id": 0, "pos": [0, 2], "type": "ORG"}],
                    [{"name": "Cambridge, Massachusetts", "sent_id": 0, "pos": [4, 7], "type": "LOC"}],
                    [{"name": "Elon Musk", "sent_id": 1, "pos": [0, 2], "type": "PER"}],
                    [{"name": "United States", "sent_id": 1, "pos": [5, 7], "type": "LOC"}]
                ],
                "labels": [
                    {"h": 0, "t": 1, "r": "P131"},
                    {"h": 2, "t": 3, "r": "P27"}
                ]
            }
        ])
        .to_string();
        parse_corpus(&json, ontology(), ParseMode::Strict)
            .unwrap()
            .documents
            .remove(0)
    }

    #[test]
    fn candidate_listing_prompt_contains_sentinel_and_passage_once() {
        let doc = sample_doc();
        let prompt =
            render_relation_listing_prompt(&doc, ontology(), RelationListingMode::WithCandidates);
        assert!(prompt.text.contains("no relation"));
        assert!(prompt.text.contains("The relations must be in the relation list."));
        assert_eq!(prompt.text.matches(&doc.text()).count(), 1);
        assert_eq!(prompt.slots["sentences"], doc.text());
    }

    #[test]
    fn open_listing_prompt_has_no_candidates() {
        let doc = sample_doc();
        let prompt = render_relation_listing_prompt(&doc, ontology(), RelationListingMode::Open);
        assert!(prompt.text.contains("list any underlying relations"));
        assert!(!prompt.text.contains("relation list:"));
    }

    #[test]
    fn head_prompt_description_flag() {
        let doc = sample_doc();
        let country = ontology().resolve("country").unwrap();
        let with = render_head_prompt(&doc, country, true);
        assert!(with.text.contains(&country.description));
        assert_eq!(with.slots["relation"], "country");
        assert_eq!(with.slots["description"], country.description);

        let without = render_head_prompt(&doc, country, false);
        assert!(without.text.contains("country"));
        assert!(!without.text.contains(&country.description));
    }

    #[test]
    fn fact_prompt_format_instruction() {
        let doc = sample_doc();
        let rel = ontology().resolve("country of citizenship").unwrap();
        let with_subject = render_fact_prompt(&doc, rel, Some("Elon Musk"), false);
        assert!(with_subject
            .text
            .contains("[Elon Musk,country of citizenship,object]"));

        let without_subject = render_fact_prompt(&doc, rel, None, false);
        assert!(without_subject
            .text
            .contains("[subject,country of citizenship, object]"));
        assert!(!without_subject.text.contains(&rel.description));
    }

    #[test]
    fn rendering_is_deterministic() {
        let doc = sample_doc();
        let a = render_facts_direct_prompt(&doc, ontology());
        let b = render_facts_direct_prompt(&doc, ontology());
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn literal_braces_escape() {
        let mut slots = BTreeMap::new();
        slots.insert("sentences".to_string(), "x".to_string());
        assert_eq!(fill("a {{b}} {sentences}", &slots), "a {b} x");
    }

    #[test]
    fn relation_list_parsing() {
        let out = parse_relation_list("country of citizenship\nfather", ontology());
        let names: Vec<_> = out.value.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["country of citizenship", "father"]);
        assert!(out.rejected_lines.is_empty());
    }

    #[test]
    fn no_relation_sentinel_gives_empty_value() {
        let out = parse_relation_list("no relation", ontology());
        assert!(out.value.is_empty());
        assert_eq!(out.rejected_lines.len(), 1);
        assert_eq!(out.rejected_lines[0].reason, RejectReason::NoRelationSentinel);
    }

    #[test]
    fn relation_list_normalizes_and_dedups() {
        let out = parse_relation_list("1. country\n- country\nCOUNTRY", ontology());
        let names: Vec<_> = out.value.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["country"]);
        let dups = out
            .rejected_lines
            .iter()
            .filter(|r| r.reason == RejectReason::Duplicate)
            .count();
        assert_eq!(dups, 2);
    }

    #[test]
    fn relation_list_rejects_synonyms() {
        let out = parse_relation_list("citizenship", ontology());
        assert!(out.value.is_empty());
        assert_eq!(out.rejected_lines[0].reason, RejectReason::NotInOntology);
    }

    #[test]
    fn entity_list_strict_rejects_absent() {
        let doc = sample_doc();
        let out = parse_entity_list("Harvard University\nAtlantis", &doc, true);
        assert_eq!(out.value, vec!["Harvard University"]);
        assert_eq!(out.rejected_lines.len(), 1);
        assert_eq!(out.rejected_lines[0].reason, RejectReason::NotInPassage);
    }

    #[test]
    fn entity_list_empty_response() {
        let doc = sample_doc();
        let out = parse_entity_list("", &doc, true);
        assert!(out.value.is_empty());
        assert!(out.rejected_lines.is_empty());
    }

    #[test]
    fn fact_line_basic_split() {
        let doc = sample_doc();
        let rel = ontology().resolve("country of citizenship").unwrap();
        let out = parse_fact_list(
            "[Elon Musk, country of citizenship, United States]",
            rel,
            None,
            &doc,
            false,
        );
        assert_eq!(out.value.len(), 1);
        assert_eq!(out.value[0].head, "Elon Musk");
        assert_eq!(out.value[0].tail, "United States");
    }

    #[test]
    fn fact_line_comma_bearing_tail() {
        let doc = sample_doc();
        let rel = ontology()
            .resolve("located in the administrative territorial entity")
            .unwrap();
        let out = parse_fact_list(
            "[Harvard University, located in the administrative territorial entity, Cambridge, Massachusetts]",
            rel,
            None,
            &doc,
            false,
        );
        assert_eq!(out.value.len(), 1);
        assert_eq!(out.value[0].head, "Harvard University");
        assert_eq!(out.value[0].tail, "Cambridge, Massachusetts");
    }

    #[test]
    fn fact_line_missing_anchor_rejected() {
        let doc = sample_doc();
        let rel = ontology().resolve("country").unwrap();
        let out = parse_fact_list("[Elon Musk loves the United States]", rel, None, &doc, false);
        assert!(out.value.is_empty());
        assert_eq!(out.rejected_lines[0].reason, RejectReason::RelationAnchorMissing);
    }

    #[test]
    fn fact_line_fixed_subject_mismatch() {
        let doc = sample_doc();
        let rel = ontology().resolve("country of citizenship").unwrap();
        let out = parse_fact_list(
            "[Elon Musk, country of citizenship, United States]",
            rel,
            Some("Harvard University"),
            &doc,
            false,
        );
        assert!(out.value.is_empty());
        assert_eq!(out.rejected_lines[0].reason, RejectReason::SubjectMismatch);
    }

    #[test]
    fn fact_line_anchor_search_unique_match() {
        let doc = sample_doc();
        let out = parse_fact_list_any(
            "[Elon Musk, country of citizenship, United States]",
            ontology(),
            &doc,
            false,
        );
        assert_eq!(out.value.len(), 1);
        assert_eq!(out.value[0].relation.name, "country of citizenship");
    }

    #[test]
    fn fact_line_anchor_search_substring_names_do_not_collide() {
        // "country" is a substring of "country of citizenship" but is not
        // comma-delimited here, so the search resolves uniquely.
        let doc = sample_doc();
        let out = parse_fact_list_any(
            "[Harvard University, located in the administrative territorial entity, Cambridge, Massachusetts]",
            ontology(),
            &doc,
            false,
        );
        assert_eq!(out.value.len(), 1);
        assert_eq!(
            out.value[0].relation.name,
            "located in the administrative territorial entity"
        );
    }

    #[test]
    fn fact_line_anchor_search_ambiguous_rejected() {
        let doc = sample_doc();
        let out = parse_fact_list_any(
            "[Engine, part of, a car, has part, engine]",
            ontology(),
            &doc,
            false,
        );
        assert!(out.value.is_empty());
        assert_eq!(
            out.rejected_lines[0].reason,
            RejectReason::AmbiguousRelationAnchor
        );
    }

    #[test]
    fn strict_fact_requires_in_passage_entities() {
        let doc = sample_doc();
        let rel = ontology().resolve("country of citizenship").unwrap();
        let out = parse_fact_list(
            "[Elon Musk, country of citizenship, Mars]",
            rel,
            None,
            &doc,
            true,
        );
        assert!(out.value.is_empty());
        assert_eq!(out.rejected_lines[0].reason, RejectReason::NotInPassage);
    }

    #[test]
    fn every_line_is_accounted_for() {
        let doc = sample_doc();
        let raw = "country\n\nnot a relation\ncountry\nno relation\n";
        let out = parse_relation_list(raw, ontology());
        let total = raw.lines().count();
        assert_eq!(
            out.value.len() + out.rejected_lines.len() + out.blank_lines,
            total
        );
        let rel = ontology().resolve("country").unwrap();
        let raw = "[a, country, b]\n\njunk\n[a, country, b]";
        let out = parse_fact_list(raw, rel, None, &doc, false);
        assert_eq!(
            out.value.len() + out.rejected_lines.len() + out.blank_lines,
            raw.lines().count()
        );
    }
}
