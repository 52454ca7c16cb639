//! Document-level relation extraction over pluggable chat-model backends.
//!
//! The crate covers the full extraction loop: a closed relation inventory
//! ([`ontology`]), DocRED-format corpus ingestion and processing ([`corpus`]),
//! prompt rendering and response parsing ([`prompts`]), chat backends with
//! per-stage routing, caching and a gold oracle ([`backend`]), the four
//! staged extraction paradigms ([`pipeline`]), strict alias-aware micro-F1
//! scoring ([`eval`]) and instruction-tuning dataset generation
//! ([`tuningdata`]).

pub mod backend;
pub mod corpus;
pub mod eval;
pub mod ontology;
pub mod pipeline;
pub mod prompts;
pub mod tuningdata;
