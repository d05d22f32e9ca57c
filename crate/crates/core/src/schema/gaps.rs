use serde::{Deserialize, Serialize};

use super::model::{AttrValue, Document, Schema, SlotDomain};
use super::validate::reference_target;
use crate::text::wildcard_match;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapKind {
    UnknownAttribute,
    MissingEntity,
    UntestedAction,
}

/// One knowledge gap in a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapDescriptor {
    pub entity_key: Option<String>,
    pub slot: Option<String>,
    pub kind: GapKind,
    pub rendered: String,
}

/// Unknown attributes and dangling references, in entity order then slot
/// order. A dangling reference is reported once, at its first mention.
pub fn list_gaps(doc: &Document, schema: &Schema) -> Vec<GapDescriptor> {
    let mut out = Vec::new();
    let mut reported: Vec<(String, String)> = Vec::new();
    for entity in &doc.entities {
        let Some(spec) = schema.entity_type(&entity.type_name) else {
            continue;
        };
        for slot in &spec.slots {
            let Some(value) = entity.get(&slot.name) else {
                continue;
            };
            match value {
                AttrValue::Unknown(qualifier) => {
                    let rendered = match qualifier {
                        Some(q) => format!("{}: {} is {q} to Unknown", entity.key, slot.name),
                        None => format!("{}: {} is Unknown", entity.key, slot.name),
                    };
                    out.push(GapDescriptor {
                        entity_key: Some(entity.key.clone()),
                        slot: Some(slot.name.clone()),
                        kind: GapKind::UnknownAttribute,
                        rendered,
                    });
                }
                AttrValue::Known(_) | AttrValue::KnownList(_) => {
                    let SlotDomain::EntityRef { entity_type, .. } = &slot.domain else {
                        continue;
                    };
                    for item in value.known_items() {
                        let Some(target) = reference_target(slot, item) else {
                            continue;
                        };
                        let present = doc.entity(entity_type, target).is_some();
                        let seen = reported.iter().any(|(t, k)| {
                            t.eq_ignore_ascii_case(entity_type) && k.eq_ignore_ascii_case(target)
                        });
                        if present || seen {
                            continue;
                        }
                        reported.push((entity_type.clone(), target.to_string()));
                        out.push(GapDescriptor {
                            entity_key: Some(target.to_string()),
                            slot: None,
                            kind: GapKind::MissingEntity,
                            rendered: format!(
                                "{target} is referenced by {}: {} but has no {entity_type} entry",
                                entity.key, slot.name
                            ),
                        });
                    }
                }
                AttrValue::Nothing => {}
            }
        }
    }
    out
}

/// [`list_gaps`] plus one untested-action gap per inventory action template
/// that no action rule covers yet.
pub fn list_gaps_with_inventory(doc: &Document, schema: &Schema, inventory: &[String]) -> Vec<GapDescriptor> {
    let mut out = list_gaps(doc, schema);
    if !schema.has_action_rules {
        return out;
    }
    for template in inventory {
        let covered = doc.action_rules.iter().any(|r| {
            r.action.eq_ignore_ascii_case(template)
                || wildcard_match(template, &r.action)
                || wildcard_match(&r.action, template)
        });
        if !covered {
            out.push(GapDescriptor {
                entity_key: None,
                slot: None,
                kind: GapKind::UntestedAction,
                rendered: format!("no action rule for '{template}'"),
            });
        }
    }
    out
}
