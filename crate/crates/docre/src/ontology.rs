//! Closed relation inventory: ids, names, rewritten descriptions, and
//! reciprocal pairs.
//!
//! The inventory is loaded from a TOML file with one `[[relations]]` record
//! per relation (keys `id`, `name`, `description`, optional `inverse_id`,
//! optional `symmetric`). The Re-DocRED inventory of 96 relation types ships
//! embedded in the crate and is available through [`RelationOntology::re_docred`].

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One relation type of the closed inventory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    /// Knowledge-base property code, e.g. `"P17"`.
    pub id: String,
    /// Canonical human-readable name, e.g. `"country"`.
    pub name: String,
    /// Prose description ending in an inline example triple.
    #[serde(default)]
    pub description: String,
    /// Id of the reciprocal relation, when one is declared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse_id: Option<String>,
    /// True for relations that are their own inverse (e.g. sibling).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub symmetric: bool,
}

/// Validation and I/O errors raised while loading an ontology.
#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("failed to read ontology file: {0}")]
    Io(#[from] std::io::Error),
    #[error("ontology file is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("duplicate relation name {name:?}")]
    DuplicateName { name: String },
    #[error("duplicate relation id {id:?}")]
    DuplicateId { id: String },
    #[error("relation {id:?} has an empty {field}")]
    EmptyField { id: String, field: &'static str },
    #[error("relation {id:?} declares unknown inverse {inverse_id:?}")]
    UnknownInverse { id: String, inverse_id: String },
    #[error("asymmetric inverse pair: {a:?} declares inverse {b:?} but {b:?} declares {b_inverse:?}")]
    AsymmetricInverse {
        a: String,
        b: String,
        b_inverse: Option<String>,
    },
    #[error("relation {id:?} is its own inverse but is not flagged symmetric")]
    SelfInverse { id: String },
    #[error("relations without a description: {names:?}")]
    MissingDescriptions { names: Vec<String> },
}

#[derive(Debug, Serialize, Deserialize)]
struct OntologyFile {
    relations: Vec<Relation>,
}

/// The validated closed set of relations with name/id lookup indices.
///
/// Immutable after load; safe to share across concurrent readers.
#[derive(Debug, Clone)]
pub struct RelationOntology {
    relations: Vec<Relation>,
    by_id: HashMap<String, usize>,
    by_name: HashMap<String, usize>,
    by_name_ci: HashMap<String, usize>,
}

impl RelationOntology {
    /// Validate a relation list and build the lookup indices.
    pub fn from_relations(relations: Vec<Relation>) -> Result<Self, OntologyError> {
        let mut by_id = HashMap::new();
        let mut by_name = HashMap::new();
        let mut by_name_ci = HashMap::new();
        for (idx, rel) in relations.iter().enumerate() {
            if rel.id.is_empty() {
                return Err(OntologyError::EmptyField {
                    id: rel.name.clone(),
                    field: "id",
                });
            }
            if rel.name.is_empty() {
                return Err(OntologyError::EmptyField {
                    id: rel.id.clone(),
                    field: "name",
                });
            }
            if by_id.insert(rel.id.clone(), idx).is_some() {
                return Err(OntologyError::DuplicateId { id: rel.id.clone() });
            }
            if by_name.insert(rel.name.clone(), idx).is_some() {
                return Err(OntologyError::DuplicateName {
                    name: rel.name.clone(),
                });
            }
            by_name_ci.insert(rel.name.to_lowercase(), idx);
        }
        for rel in &relations {
            let Some(inv_id) = &rel.inverse_id else {
                continue;
            };
            let Some(&inv_idx) = by_id.get(inv_id) else {
                return Err(OntologyError::UnknownInverse {
                    id: rel.id.clone(),
                    inverse_id: inv_id.clone(),
                });
            };
            let inv = &relations[inv_idx];
            if inv.inverse_id.as_deref() != Some(rel.id.as_str()) {
                return Err(OntologyError::AsymmetricInverse {
                    a: rel.id.clone(),
                    b: inv.id.clone(),
                    b_inverse: inv.inverse_id.clone(),
                });
            }
            if inv_id == &rel.id && !rel.symmetric {
                return Err(OntologyError::SelfInverse { id: rel.id.clone() });
            }
        }
        Ok(Self {
            relations,
            by_id,
            by_name,
            by_name_ci,
        })
    }

    /// Parse and validate an ontology from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self, OntologyError> {
        let file: OntologyFile = toml::from_str(text)?;
        Self::from_relations(file.relations)
    }

    /// Load and validate an ontology from a TOML file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// The Re-DocRED inventory (96 relation types) shipped with the crate.
    pub fn re_docred() -> &'static RelationOntology {
        static ONTOLOGY: OnceLock<RelationOntology> = OnceLock::new();
        ONTOLOGY.get_or_init(|| {
            Self::from_toml_str(include_str!("../data/re_docred_relations.toml"))
                .expect("shipped ontology file is valid")
        })
    }

    /// Exact match on name or id. No fuzzy matching at this layer.
    pub fn resolve(&self, name_or_id: &str) -> Option<&Relation> {
        self.by_name
            .get(name_or_id)
            .or_else(|| self.by_id.get(name_or_id))
            .map(|&idx| &self.relations[idx])
    }

    /// Case-insensitive match on name, used when parsing model output.
    pub fn resolve_name_ci(&self, name: &str) -> Option<&Relation> {
        self.by_name_ci
            .get(&name.to_lowercase())
            .map(|&idx| &self.relations[idx])
    }

    /// The declared reciprocal relation, if any.
    pub fn inverse_of(&self, relation: &Relation) -> Option<&Relation> {
        relation
            .inverse_id
            .as_deref()
            .and_then(|id| self.resolve(id))
    }

    /// Err listing every relation with an empty description. Called before
    /// description-bearing prompts are rendered.
    pub fn ensure_descriptions(&self) -> Result<(), OntologyError> {
        let missing: Vec<String> = self
            .relations
            .iter()
            .filter(|r| r.description.is_empty())
            .map(|r| r.name.clone())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(OntologyError::MissingDescriptions { names: missing })
        }
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Relation> {
        self.relations.iter()
    }

    /// All relation names in inventory order, as embedded in candidate-list prompts.
    pub fn names(&self) -> Vec<&str> {
        self.relations.iter().map(|r| r.name.as_str()).collect()
    }

    /// Serialize back to the TOML file format.
    pub fn to_toml_string(&self) -> String {
        let file = OntologyFile {
            relations: self.relations.clone(),
        };
        toml::to_string(&file).expect("ontology serializes")
    }
}
