//! Budgeted, one-off exploration of an interactive environment instance that
//! distills what it observes into a schema-validated instance context document.
//!
//! The crate is organized around the artifacts of a run:
//!
//! - [`schema`]: the declarative document schema, the [`schema::Document`]
//!   itself, its markdown rendering/parsing, validation, gap listing and
//!   coverage measurement.
//! - [`forest`]: the TODO forest that records every explored action sequence.
//! - [`env`]: the environment abstraction, the deterministic built-in worlds
//!   and the JSON-lines bridge client.
//! - [`llm`]: prompt templates, completion providers (cassette, HTTP, oracle)
//!   and the response grammars.
//! - [`explore`]: the plan-act-extract loop.
//! - [`eval`]: downstream ReAct episodes and benchmark reports.

pub mod env;
pub mod eval;
pub mod explore;
pub mod forest;
pub mod llm;
pub mod schema;
pub mod text;
