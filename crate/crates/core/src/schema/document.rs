use indexmap::IndexMap;

use super::model::{
    ActionRule, AttrSlot, AttrValue, Document, Entity, EntityLayout, EntityTypeSpec, Multiplicity,
    Schema, SlotDomain, Violation,
};
use super::parse_schema::normalize_field;
use super::validate::validate_document;

pub const OBSERVATIONS_HEADER: &str = "#### Observations";
pub const ACTION_RULES_HEADER: &str = "#### Action Rules";

fn render_value(value: &AttrValue) -> String {
    match value {
        AttrValue::Known(t) => t.clone(),
        AttrValue::KnownList(items) => items.join(", "),
        AttrValue::Unknown(None) => "Unknown".into(),
        AttrValue::Unknown(Some(q)) => format!("{q} to Unknown"),
        AttrValue::Nothing => "Nothing".into(),
    }
}

fn render_field(out: &mut String, name: &str, text: &str) {
    if text.contains('\n') {
        out.push_str(&format!("  - {name}:\n"));
        for line in text.split('\n') {
            out.push_str(&format!("    - {line}\n"));
        }
    } else {
        out.push_str(&format!("  - {name}: {text}\n"));
    }
}

/// Renders the document as markdown: observations first, then action rules.
/// Refuses to render an invalid document.
pub fn render_document(doc: &Document, schema: &Schema) -> Result<String, Vec<Violation>> {
    let violations = validate_document(doc, schema);
    if !violations.is_empty() {
        return Err(violations);
    }
    Ok(render_unchecked(doc, schema))
}

pub(crate) fn render_unchecked(doc: &Document, schema: &Schema) -> String {
    let mut out = String::new();
    out.push_str(OBSERVATIONS_HEADER);
    out.push_str("\n\n");
    let mut previous_block = false;
    for entity in &doc.entities {
        let Some(spec) = schema.entity_type(&entity.type_name) else {
            continue;
        };
        match spec.layout {
            EntityLayout::Inline => {
                if previous_block {
                    out.push('\n');
                }
                let slot = &spec.slots[0];
                let value = entity.get(&slot.name).map(render_value).unwrap_or_default();
                out.push_str(&format!("- {}: {} {}\n", spec.header(&entity.key), slot.name, value));
                previous_block = false;
            }
            EntityLayout::Block { colon } => {
                if out.ends_with("\n\n") || out.is_empty() {
                } else {
                    out.push('\n');
                }
                out.push_str(&format!(
                    "- {}{}\n",
                    spec.header(&entity.key),
                    if colon { ":" } else { "" }
                ));
                for slot in &spec.slots {
                    if let Some(v) = entity.get(&slot.name) {
                        out.push_str(&format!("  - {}: {}\n", slot.name, render_value(v)));
                    }
                }
                previous_block = true;
            }
        }
    }
    if !doc.entities.is_empty() {
        out.push('\n');
    }
    out.push_str(ACTION_RULES_HEADER);
    out.push('\n');
    for rule in &doc.action_rules {
        out.push('\n');
        out.push_str(&format!("- action: {}\n", rule.action));
        render_field(&mut out, "requirements", &rule.requirements);
        render_field(&mut out, "key_result", &rule.key_result);
        if !rule.note.is_empty() {
            render_field(&mut out, "note", &rule.note);
        }
    }
    out
}

struct RawLine<'a> {
    no: usize,
    indent: usize,
    text: &'a str,
}

#[derive(PartialEq)]
enum Section {
    Preamble,
    Observations,
    Rules,
}

/// Parses rendered document text back into a [`Document`], returning every
/// structural and schema violation found.
pub fn parse_document(text: &str, schema: &Schema) -> Result<Document, Vec<Violation>> {
    let mut violations = Vec::new();
    let mut section = Section::Preamble;
    let mut obs_lines: Vec<RawLine> = Vec::new();
    let mut rule_lines: Vec<RawLine> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed == "..." {
            continue;
        }
        let hashes = trimmed.chars().take_while(|c| *c == '#').count();
        if hashes >= 2 && trimmed[hashes..].starts_with(' ') {
            match trimmed[hashes..].trim().to_ascii_lowercase().as_str() {
                "observations" | "observation" => section = Section::Observations,
                "action rules" => section = Section::Rules,
                other => violations.push(Violation::at(no, format!("unknown section '{other}'"))),
            }
            continue;
        }
        let expanded = raw.replace('\t', "    ");
        let indent = expanded.len() - expanded.trim_start().len();
        let line = RawLine {
            no,
            indent,
            text: trimmed,
        };
        match section {
            Section::Preamble => {
                violations.push(Violation::at(no, "content before the Observations section"))
            }
            Section::Observations => obs_lines.push(line),
            Section::Rules => rule_lines.push(line),
        }
    }

    let mut doc = Document::empty();
    parse_entities(&obs_lines, schema, &mut doc, &mut violations);
    parse_rules(&rule_lines, &mut doc, &mut violations);

    if violations.is_empty() {
        violations = validate_document(&doc, schema);
    }
    if violations.is_empty() {
        Ok(doc)
    } else {
        Err(violations)
    }
}

/// Reads a piece of document text without section headers, such as the body
/// of an edit. Items headed `- action:` are action rules, every other
/// top-level item is an entity. Lines that are neither are skipped. The
/// result is not validated; problems are returned next to it.
pub fn parse_fragment(text: &str, schema: &Schema) -> (Document, Vec<Violation>) {
    let mut violations = Vec::new();
    let mut entity_lines: Vec<RawLine> = Vec::new();
    let mut rule_lines: Vec<RawLine> = Vec::new();
    let mut in_rule: Option<bool> = None;
    for (idx, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed == "..." {
            continue;
        }
        let expanded = raw.replace('\t', "    ");
        let indent = expanded.len() - expanded.trim_start().len();
        if indent == 0 {
            in_rule = trimmed.strip_prefix("- ").map(|item| {
                item.split_once(':')
                    .is_some_and(|(name, _)| normalize_field(name) == "action")
            });
        }
        let line = RawLine {
            no: idx + 1,
            indent,
            text: trimmed,
        };
        match in_rule {
            Some(true) => rule_lines.push(line),
            Some(false) => entity_lines.push(line),
            None => {}
        }
    }
    let mut doc = Document::empty();
    parse_entities(&entity_lines, schema, &mut doc, &mut violations);
    parse_rules(&rule_lines, &mut doc, &mut violations);
    (doc, violations)
}

fn parse_entities(lines: &[RawLine], schema: &Schema, doc: &mut Document, out: &mut Vec<Violation>) {
    let mut i = 0;
    while i < lines.len() {
        let head = &lines[i];
        i += 1;
        let Some(item) = head.text.strip_prefix("- ") else {
            out.push(Violation::at(head.no, "expected an entity line starting with '- '"));
            continue;
        };
        if head.indent != 0 {
            out.push(Violation::at(head.no, "entity line must not be indented"));
            continue;
        }
        let start = i;
        while i < lines.len() && lines[i].indent > 0 {
            i += 1;
        }
        let children = &lines[start..i];
        let child_names: Vec<String> = children
            .iter()
            .filter_map(|c| c.text.strip_prefix("- "))
            .filter_map(|c| c.split_once(':').map(|(n, _)| n.trim().to_ascii_lowercase()))
            .collect();

        match resolve_header(item, schema, &child_names) {
            Some((spec, key, inline_rest)) => {
                let mut entity = Entity::new(spec.name.clone(), key);
                if spec.layout == EntityLayout::Inline {
                    let slot = &spec.slots[0];
                    let rest = inline_rest.unwrap_or_default();
                    let value = rest
                        .strip_prefix(slot.name.as_str())
                        .map(str::trim)
                        .unwrap_or_else(|| {
                            out.push(Violation::at(
                                head.no,
                                format!("expected '{}' after the entity header", slot.name),
                            ));
                            ""
                        });
                    entity.attrs.insert(slot.name.clone(), parse_value(slot, value));
                    for c in children {
                        out.push(Violation::at(c.no, "inline entity cannot have nested lines"));
                    }
                } else {
                    parse_block_slots(&mut entity, spec, children, out);
                }
                doc.entities.push(entity);
            }
            None => out.push(Violation::at(
                head.no,
                format!("unknown entity type for line '{}'", head.text),
            )),
        }
    }
}

fn parse_block_slots(entity: &mut Entity, spec: &EntityTypeSpec, children: &[RawLine], out: &mut Vec<Violation>) {
    let mut found: IndexMap<String, AttrValue> = IndexMap::new();
    for c in children {
        let parsed = c
            .text
            .strip_prefix("- ")
            .and_then(|t| t.split_once(':'))
            .filter(|_| c.indent == 2);
        let Some((name, value)) = parsed else {
            out.push(Violation::at(c.no, format!("malformed slot line '{}'", c.text)));
            continue;
        };
        let name = name.trim();
        let Some(slot) = spec.slot(name) else {
            out.push(Violation::at(
                c.no,
                format!("slot '{name}' is not declared for entity type '{}'", spec.name),
            ));
            continue;
        };
        if found.contains_key(&slot.name) {
            out.push(Violation::at(c.no, format!("slot '{}' repeated in entity '{}'", slot.name, entity.key)));
            continue;
        }
        found.insert(slot.name.clone(), parse_value(slot, value.trim()));
    }
    // keep schema order
    for slot in &spec.slots {
        if let Some(v) = found.shift_remove(&slot.name) {
            entity.attrs.insert(slot.name.clone(), v);
        }
    }
}

/// Finds the entity type a header line belongs to. Returns the spec, the key
/// and, for inline entities, the text after the header.
fn resolve_header<'s, 't>(
    item: &'t str,
    schema: &'s Schema,
    child_names: &[String],
) -> Option<(&'s EntityTypeSpec, String, Option<&'t str>)> {
    for spec in &schema.entity_types {
        let Some(label) = &spec.label else { continue };
        let Some(rest) = item.strip_prefix(label.as_str()) else { continue };
        let rest = rest.trim_start();
        let Some(rest) = rest.strip_prefix('[') else { continue };
        let Some((key, after)) = rest.split_once(']') else { continue };
        return header_tail(spec, key.trim(), after);
    }
    let candidates: Vec<&EntityTypeSpec> = schema
        .entity_types
        .iter()
        .filter(|s| s.label.is_none())
        .collect();
    let chosen = match candidates.len() {
        0 => return None,
        1 => candidates[0],
        _ => *candidates.iter().find(|s| {
            child_names
                .iter()
                .all(|n| s.slots.iter().any(|slot| slot.name.eq_ignore_ascii_case(n)))
        })?,
    };
    match chosen.layout {
        EntityLayout::Block { colon: true } => {
            let key = item.strip_suffix(':')?;
            Some((chosen, key.trim().to_string(), None))
        }
        EntityLayout::Block { colon: false } => {
            let key = item.strip_suffix(':').unwrap_or(item);
            Some((chosen, key.trim().to_string(), None))
        }
        EntityLayout::Inline => {
            let (key, rest) = item.split_once(": ")?;
            Some((chosen, key.trim().to_string(), Some(rest)))
        }
    }
}

fn header_tail<'s, 't>(
    spec: &'s EntityTypeSpec,
    key: &str,
    after: &'t str,
) -> Option<(&'s EntityTypeSpec, String, Option<&'t str>)> {
    match spec.layout {
        EntityLayout::Inline => {
            let rest = after.strip_prefix(':')?;
            Some((spec, key.to_string(), Some(rest.trim())))
        }
        EntityLayout::Block { .. } => {
            let after = after.trim();
            (after.is_empty() || after == ":").then(|| (spec, key.to_string(), None))
        }
    }
}

/// Interprets one rendered slot value according to its slot.
pub fn parse_value(slot: &AttrSlot, text: &str) -> AttrValue {
    let text = text.trim();
    match text {
        "Unknown" => return AttrValue::Unknown(None),
        "Nothing" | "None" | "" => return AttrValue::Nothing,
        _ => {}
    }
    if let SlotDomain::EntityRef { qualified: true, .. } = slot.domain {
        if let Some((q, target)) = text.rsplit_once(" to ") {
            if target.trim() == "Unknown" {
                return AttrValue::Unknown(Some(q.trim().to_string()));
            }
        }
    }
    match slot.multiplicity {
        Multiplicity::One => AttrValue::Known(text.to_string()),
        Multiplicity::Many => AttrValue::KnownList(
            text.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        ),
    }
}

fn parse_rules(lines: &[RawLine], doc: &mut Document, out: &mut Vec<Violation>) {
    let mut current: Option<(ActionRule, usize)> = None;
    let mut field: Option<String> = None;

    let finish = |current: &mut Option<(ActionRule, usize)>, doc: &mut Document| {
        if let Some((rule, _)) = current.take() {
            doc.action_rules.push(rule);
        }
    };

    for line in lines {
        let Some(item) = line.text.strip_prefix("- ").or_else(|| (line.text == "-").then_some("")) else {
            out.push(Violation::at(line.no, format!("expected a list item, found '{}'", line.text)));
            continue;
        };
        match line.indent {
            0 => {
                finish(&mut current, doc);
                field = None;
                match item.split_once(':') {
                    Some((name, value)) if normalize_field(name) == "action" => {
                        current = Some((
                            ActionRule {
                                action: value.trim().to_string(),
                                ..ActionRule::default()
                            },
                            line.no,
                        ));
                    }
                    _ => out.push(Violation::at(line.no, "action rule must start with 'action:'")),
                }
            }
            1..=3 => {
                let Some((rule, _)) = current.as_mut() else {
                    out.push(Violation::at(line.no, "field outside of an action rule"));
                    continue;
                };
                let Some((name, value)) = item.split_once(':') else {
                    out.push(Violation::at(line.no, format!("malformed field '{item}'")));
                    continue;
                };
                let name = normalize_field(name);
                let value = value.trim().to_string();
                let slot = match name.as_str() {
                    "requirements" | "requirement" => &mut rule.requirements,
                    "key_result" | "key_results" => &mut rule.key_result,
                    "note" | "notes" => &mut rule.note,
                    other => {
                        out.push(Violation::at(line.no, format!("unknown action rule field '{other}'")));
                        field = None;
                        continue;
                    }
                };
                *slot = value;
                field = Some(name);
            }
            _ => {
                let Some((rule, _)) = current.as_mut() else {
                    out.push(Violation::at(line.no, "bullet outside of an action rule"));
                    continue;
                };
                let target = match field.as_deref() {
                    Some("requirements" | "requirement") => &mut rule.requirements,
                    Some("key_result" | "key_results") => &mut rule.key_result,
                    Some("note" | "notes") => &mut rule.note,
                    _ => {
                        out.push(Violation::at(line.no, "bullet without a field"));
                        continue;
                    }
                };
                if !target.is_empty() {
                    target.push('\n');
                }
                target.push_str(item.trim());
            }
        }
    }
    finish(&mut current, doc);
}
