use super::model::{
    AttrSlot, AttrValue, Document, Entity, Multiplicity, Schema, SlotDomain, Violation,
};

/// Reserved words that a Known value may not spell, since they would parse
/// back as a marker.
const MARKERS: [&str; 3] = ["unknown", "nothing", "none"];

/// Returns every violated document invariant; empty iff the document is valid.
pub fn validate_document(doc: &Document, schema: &Schema) -> Vec<Violation> {
    let mut out = Vec::new();

    for (i, entity) in doc.entities.iter().enumerate() {
        if doc.entities[..i]
            .iter()
            .any(|e| e.same_identity(&entity.type_name, &entity.key))
        {
            out.push(Violation::new(format!(
                "duplicate entity key '{}' ({})",
                entity.key, entity.type_name
            )));
        }
        validate_entity(entity, schema, &mut out);
    }

    for (i, rule) in doc.action_rules.iter().enumerate() {
        if doc.action_rules[..i]
            .iter()
            .any(|r| r.action.eq_ignore_ascii_case(&rule.action))
        {
            out.push(Violation::new(format!("duplicate action rule '{}'", rule.action)));
        }
        if !schema.has_action_rules {
            out.push(Violation::new(format!(
                "schema has no action rules section but document has rule '{}'",
                rule.action
            )));
        }
        check_line("action", &rule.action, false, &mut out);
        check_line("requirements", &rule.requirements, true, &mut out);
        check_line("key_result", &rule.key_result, true, &mut out);
        if !rule.note.is_empty() {
            check_line("note", &rule.note, true, &mut out);
        }
    }
    out
}

fn check_line(field: &str, text: &str, multiline: bool, out: &mut Vec<Violation>) {
    if text.trim().is_empty() {
        out.push(Violation::new(format!("action rule {field} is empty")));
        return;
    }
    let lines: Vec<&str> = text.split('\n').collect();
    if !multiline && lines.len() > 1 {
        out.push(Violation::new(format!("action rule {field} must be a single line")));
    }
    for line in lines {
        if line.trim().is_empty() || line.trim() != line {
            out.push(Violation::new(format!(
                "action rule {field} has an empty or untrimmed line: {line:?}"
            )));
        }
    }
}

fn validate_entity(entity: &Entity, schema: &Schema, out: &mut Vec<Violation>) {
    let Some(spec) = schema.entity_type(&entity.type_name) else {
        out.push(Violation::new(format!(
            "unknown entity type '{}' for entity '{}'",
            entity.type_name, entity.key
        )));
        return;
    };
    if !is_clean_text(&entity.key) || entity.key.contains(['[', ']']) {
        out.push(Violation::new(format!("invalid entity key {:?}", entity.key)));
    }
    for slot in &spec.slots {
        match entity.get(&slot.name) {
            None => out.push(Violation::new(format!(
                "missing slot '{}' for entity '{}'",
                slot.name, entity.key
            ))),
            Some(value) => validate_value(entity, slot, value, out),
        }
    }
    for name in entity.attrs.keys() {
        if spec.slot(name).is_none() {
            out.push(Violation::new(format!(
                "slot '{name}' is not declared for entity type '{}' (entity '{}')",
                spec.name, entity.key
            )));
        }
    }
    let mut seen: Vec<String> = Vec::new();
    for name in entity.attrs.keys() {
        let lower = name.to_ascii_lowercase();
        if seen.contains(&lower) {
            out.push(Violation::new(format!(
                "slot '{name}' appears more than once in entity '{}'",
                entity.key
            )));
        }
        seen.push(lower);
    }
}

fn is_clean_text(text: &str) -> bool {
    !text.is_empty() && !text.contains('\n') && !text.contains('\r') && text.trim() == text
}

fn validate_value(entity: &Entity, slot: &AttrSlot, value: &AttrValue, out: &mut Vec<Violation>) {
    let at = |msg: String| Violation::new(format!("entity '{}' slot '{}': {msg}", entity.key, slot.name));
    match value {
        AttrValue::Unknown(qualifier) => {
            if !slot.unknown_allowed {
                out.push(at("Unknown is not allowed here".into()));
            }
            if let Some(q) = qualifier {
                let qualified = matches!(slot.domain, SlotDomain::EntityRef { qualified: true, .. });
                if !qualified {
                    out.push(at("only qualified references may keep a qualifier on Unknown".into()));
                } else if !is_clean_text(q) || q.contains(" to ") {
                    out.push(at(format!("invalid qualifier {q:?}")));
                }
            }
        }
        AttrValue::Nothing => {
            if !slot.nothing_allowed {
                out.push(at("Nothing is not allowed here".into()));
            }
        }
        AttrValue::Known(text) => {
            if slot.multiplicity == Multiplicity::Many {
                out.push(at("multi-valued slot holds a single Known value".into()));
            }
            check_item(slot, text, out, &at);
        }
        AttrValue::KnownList(items) => {
            if slot.multiplicity == Multiplicity::One {
                out.push(at("single-valued slot holds a list".into()));
            }
            if items.is_empty() {
                out.push(at("empty list (use Nothing)".into()));
            }
            for item in items {
                if item.contains(',') {
                    out.push(at(format!("list item {item:?} contains a comma")));
                }
                check_item(slot, item, out, &at);
            }
        }
    }
}

fn check_item(slot: &AttrSlot, text: &str, out: &mut Vec<Violation>, at: &dyn Fn(String) -> Violation) {
    if !is_clean_text(text) {
        out.push(at(format!("value {text:?} must be non-empty, trimmed and single-line")));
        return;
    }
    if MARKERS.contains(&text.to_ascii_lowercase().as_str()) {
        out.push(at(format!("value {text:?} is a reserved marker word")));
    }
    match &slot.domain {
        SlotDomain::FreeText => {}
        SlotDomain::Enumerated(lits) => {
            if !lits.iter().any(|l| l == text) {
                out.push(at(format!("value {text:?} is outside {lits:?}")));
            }
        }
        SlotDomain::EntityRef { qualified, .. } => {
            if *qualified {
                match text.rsplit_once(" to ") {
                    Some((q, target)) if !q.trim().is_empty() && !target.trim().is_empty() => {
                        if target.eq_ignore_ascii_case("unknown") {
                            out.push(at("reference target Unknown must use the Unknown marker".into()));
                        }
                    }
                    _ => out.push(at(format!("value {text:?} is not of the form '<qualifier> to <target>'"))),
                }
            }
        }
    }
}

/// The referenced entity key of a Known item in a reference slot.
pub(crate) fn reference_target<'a>(slot: &AttrSlot, item: &'a str) -> Option<&'a str> {
    match &slot.domain {
        SlotDomain::EntityRef { qualified: true, .. } => item.rsplit_once(" to ").map(|(_, t)| t.trim()),
        SlotDomain::EntityRef { qualified: false, .. } => Some(item),
        _ => None,
    }
}
