use serde::{Deserialize, Serialize};

use super::model::{Document, Schema, SlotDomain};
use crate::env::GroundTruth;
use crate::text::wildcard_match;

/// Location stand-in for objects that count wherever they are listed.
pub const ANY_LOCATION: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoverageReport {
    pub locations_found: usize,
    pub locations_total: usize,
    pub objects_found: usize,
    pub objects_total: usize,
    pub rules_valid: usize,
    pub rules_total: usize,
    pub unknown_count: usize,
}

fn ratio(found: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        found as f64 / total as f64
    }
}

impl CoverageReport {
    pub fn location_fraction(&self) -> f64 {
        ratio(self.locations_found, self.locations_total)
    }

    pub fn object_fraction(&self) -> f64 {
        ratio(self.objects_found, self.objects_total)
    }

    /// Share of the document's rules that agree with the truth table.
    pub fn rule_fraction(&self) -> f64 {
        ratio(self.rules_valid, self.rules_total)
    }
}

/// Measures a document against environment ground truth. Keys match
/// case-insensitively; an object counts as found when some non-reference
/// value of the entity for its location names it (a trailing parenthetical
/// such as `(on counter)` is ignored).
pub fn coverage_against(doc: &Document, schema: &Schema, truth: &GroundTruth) -> CoverageReport {
    let locations_found = truth
        .locations
        .iter()
        .filter(|loc| doc.find_key(loc).is_some())
        .count();

    let objects_found = truth
        .objects
        .iter()
        .filter(|obj| {
            doc.entities
                .iter()
                .filter(|e| obj.location == ANY_LOCATION || e.key.eq_ignore_ascii_case(&obj.location))
                .any(|e| mentions(e, schema, &obj.name))
        })
        .count();

    let rules_valid = doc
        .action_rules
        .iter()
        .filter(|rule| {
            truth.rules.iter().any(|t| {
                wildcard_match(&t.action_pattern, &rule.action)
                    && t.key_effect
                        .split('|')
                        .any(|kw| contains_ci(&rule.key_result, kw.trim()))
            })
        })
        .count();

    CoverageReport {
        locations_found,
        locations_total: truth.locations.len(),
        objects_found,
        objects_total: truth.objects.len(),
        rules_valid,
        rules_total: doc.action_rules.len(),
        unknown_count: doc.unknown_count(),
    }
}

fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

fn mentions(entity: &crate::schema::Entity, schema: &Schema, object: &str) -> bool {
    let spec = schema.entity_type(&entity.type_name);
    entity.attrs.iter().any(|(slot_name, value)| {
        let qualified = spec
            .and_then(|s| s.slot(slot_name))
            .is_some_and(|s| matches!(s.domain, SlotDomain::EntityRef { qualified: true, .. }));
        !qualified
            && value
                .known_items()
                .iter()
                .any(|item| contains_ci(item.split(" (").next().unwrap_or(item), object))
    })
}
