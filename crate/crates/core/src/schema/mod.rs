//! The instance context document and the schema that constrains it.

mod coverage;
mod document;
mod gaps;
mod model;
mod parse_schema;
mod validate;

pub use coverage::{coverage_against, CoverageReport, ANY_LOCATION};
pub use document::{parse_document, parse_fragment, parse_value, render_document, ACTION_RULES_HEADER, OBSERVATIONS_HEADER};
pub use gaps::{list_gaps, list_gaps_with_inventory, GapDescriptor, GapKind};
pub use model::{
    ActionRule, AttrSlot, AttrValue, DocMeta, Document, Entity, EntityLayout, EntityTypeSpec,
    Multiplicity, Schema, SlotDomain, Violation,
};
pub use parse_schema::{check_schema, parse_schema};
pub use validate::validate_document;

pub(crate) use document::render_unchecked;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("schema line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid schema: {0}")]
    Invalid(String),
}

/// Schemas shipped with the crate, keyed by file stem.
pub mod builtin {
    pub const ROOMWORLD: &str = include_str!("../../schemas/roomworld.md");
    pub const TEXTWORLD: &str = include_str!("../../schemas/textworld.md");
    pub const ALFWORLD: &str = include_str!("../../schemas/alfworld.md");
    pub const CRAFTWORLD: &str = include_str!("../../schemas/craftworld.md");

    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "roomworld" => Some(ROOMWORLD),
            "textworld" => Some(TEXTWORLD),
            "alfworld" => Some(ALFWORLD),
            "craftworld" => Some(CRAFTWORLD),
            _ => None,
        }
    }
}
