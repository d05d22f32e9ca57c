use super::model::{AttrSlot, EntityLayout, EntityTypeSpec, Multiplicity, Schema, SlotDomain};
use super::SchemaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Observations,
    ActionRules,
}

/// A slot whose domain may still refer to an entity type declared later.
struct PendingSlot {
    slot: AttrSlot,
    placeholder: Option<String>,
    qualified: bool,
    line: usize,
}

struct PendingType {
    spec: EntityTypeSpec,
    slots: Vec<PendingSlot>,
    line: usize,
}

const RULE_FIELDS: [&str; 4] = ["requirements", "key_result", "note", "action"];

/// Parses a schema written in the markdown-pattern grammar:
///
/// ```text
/// #### Observations
/// - [location]:
///   - objects: [object], [object], ... / Nothing
///   - west: [anything] to [location]/Unknown
///
/// #### Action Rules
/// - action: [action_name]
///   - requirements: [conditions that must be met]
/// ```
pub fn parse_schema(source_name: &str, text: &str) -> Result<Schema, SchemaError> {
    if text.trim().is_empty() {
        return Err(SchemaError::Parse {
            line: 1,
            message: "empty schema".into(),
        });
    }
    let base = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start_matches(' ').len())
        .min()
        .unwrap_or(0);

    let mut section = Section::None;
    let mut types: Vec<PendingType> = Vec::new();
    let mut has_action_rules = false;
    let mut in_rule = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if raw.contains('\t') {
            return Err(parse_err(line_no, "tabs are not allowed in indentation"));
        }
        let line = &raw[base.min(raw.len() - raw.trim_start_matches(' ').len())..];
        let indent = line.len() - line.trim_start_matches(' ').len();
        let content = line.trim();

        if let Some(title) = heading(content) {
            section = match title.to_ascii_lowercase().as_str() {
                "observations" | "observation" => Section::Observations,
                "action rules" => Section::ActionRules,
                other => return Err(parse_err(line_no, format!("unknown section '{other}'"))),
            };
            in_rule = false;
            continue;
        }
        if content == "..." {
            continue;
        }
        if indent % 2 != 0 {
            return Err(parse_err(line_no, "malformed indentation (odd number of spaces)"));
        }
        let Some(item) = content.strip_prefix("- ") else {
            return Err(parse_err(line_no, "expected a '- ' list item"));
        };
        match section {
            Section::None => return Err(parse_err(line_no, "content outside of a section")),
            Section::Observations => match indent {
                0 => types.push(parse_header(item, line_no)?),
                2 => {
                    let Some(current) = types.last_mut() else {
                        return Err(parse_err(line_no, "slot without an entity header"));
                    };
                    if current.spec.layout == EntityLayout::Inline {
                        return Err(parse_err(line_no, "inline entity type cannot have nested slots"));
                    }
                    let (name, spec) = item.split_once(':').ok_or_else(|| {
                        parse_err(line_no, "slot line must look like 'name: pattern'")
                    })?;
                    let slot = parse_slot(name.trim(), spec.trim(), line_no)?;
                    current.slots.push(slot);
                }
                _ => return Err(parse_err(line_no, "malformed indentation (too deep)")),
            },
            Section::ActionRules => match indent {
                0 => {
                    let (field, _) = item.split_once(':').unwrap_or((item, ""));
                    if !field.trim().eq_ignore_ascii_case("action") {
                        return Err(parse_err(line_no, "action rule must start with 'action:'"));
                    }
                    has_action_rules = true;
                    in_rule = true;
                }
                2 if in_rule => {
                    let (field, _) = item.split_once(':').unwrap_or((item, ""));
                    let field = normalize_field(field);
                    if !RULE_FIELDS.contains(&field.as_str()) {
                        return Err(parse_err(line_no, format!("unknown action rule field '{field}'")));
                    }
                }
                _ => return Err(parse_err(line_no, "malformed indentation in action rules")),
            },
        }
    }

    // resolve placeholders now that every entity type is known
    let type_names: Vec<(String, String)> = types
        .iter()
        .map(|t| (t.spec.name.clone(), t.spec.key_attribute.clone()))
        .collect();
    let resolve = |placeholder: &str| -> Option<String> {
        type_names
            .iter()
            .find(|(name, key)| {
                name.eq_ignore_ascii_case(placeholder) || key.eq_ignore_ascii_case(placeholder)
            })
            .map(|(name, _)| name.clone())
    };

    let mut entity_types = Vec::with_capacity(types.len());
    for pending in types {
        let mut spec = pending.spec;
        for p in pending.slots {
            let mut slot = p.slot;
            if let Some(ph) = &p.placeholder {
                if let Some(target) = resolve(ph) {
                    slot.domain = SlotDomain::EntityRef {
                        entity_type: target,
                        qualified: p.qualified,
                    };
                } else if p.qualified {
                    return Err(parse_err(
                        p.line,
                        format!("'to [{ph}]' does not name a declared entity type"),
                    ));
                }
            }
            spec.slots.push(slot);
        }
        if spec.layout == EntityLayout::Inline && spec.slots.len() != 1 {
            return Err(parse_err(pending.line, "inline entity type needs exactly one slot"));
        }
        // an identical repeated declaration is an illustration, not a new type
        if entity_types.iter().any(|t: &EntityTypeSpec| *t == spec) {
            continue;
        }
        entity_types.push(spec);
    }

    let schema = Schema {
        entity_types,
        has_action_rules,
        source_name: source_name.to_string(),
        source_text: text.to_string(),
    };
    check_schema(&schema)?;
    Ok(schema)
}

fn parse_err(line: usize, message: impl Into<String>) -> SchemaError {
    SchemaError::Parse {
        line,
        message: message.into(),
    }
}

fn heading(content: &str) -> Option<&str> {
    let hashes = content.chars().take_while(|c| *c == '#').count();
    if (2..=6).contains(&hashes) && content[hashes..].starts_with(' ') {
        Some(content[hashes..].trim())
    } else {
        None
    }
}

pub(crate) fn normalize_field(field: &str) -> String {
    field.trim().to_ascii_lowercase().replace([' ', '-'], "_")
}

/// Splits `[label] [key]rest` headers.
fn parse_header(item: &str, line: usize) -> Result<PendingType, SchemaError> {
    let open = item
        .find('[')
        .ok_or_else(|| parse_err(line, "entity header needs a bracketed key placeholder"))?;
    let close = item[open..]
        .find(']')
        .map(|i| i + open)
        .ok_or_else(|| parse_err(line, "unclosed '[' in entity header"))?;
    let label = item[..open].trim();
    let key = item[open + 1..close].trim();
    if key.is_empty() {
        return Err(parse_err(line, "empty key placeholder"));
    }
    let rest = item[close + 1..].trim_end();
    let label = (!label.is_empty()).then(|| label.to_string());
    let name = label.clone().unwrap_or_else(|| key.to_string());

    let mut pending = PendingType {
        spec: EntityTypeSpec {
            name,
            key_attribute: key.to_string(),
            label,
            layout: EntityLayout::Block { colon: false },
            slots: Vec::new(),
        },
        slots: Vec::new(),
        line,
    };
    if rest.is_empty() {
        return Ok(pending);
    }
    let Some(inline) = rest.strip_prefix(':') else {
        return Err(parse_err(line, format!("unexpected text after key: '{rest}'")));
    };
    let inline = inline.trim();
    if inline.is_empty() {
        pending.spec.layout = EntityLayout::Block { colon: true };
        return Ok(pending);
    }
    pending.spec.layout = EntityLayout::Inline;
    let bracket = inline.find('[').unwrap_or(inline.len());
    let (name, spec) = match inline[..bracket].find(':') {
        Some(colon) => (&inline[..colon], &inline[colon + 1..]),
        None => (&inline[..bracket], &inline[bracket..]),
    };
    let name = name.trim();
    if name.is_empty() {
        return Err(parse_err(line, "inline slot needs a name before its pattern"));
    }
    pending.slots.push(parse_slot(name, spec.trim(), line)?);
    Ok(pending)
}

fn split_alternatives(spec: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in spec.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            '/' if depth == 0 => {
                out.push(spec[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(spec[start..].trim());
    out
}

fn parse_slot(name: &str, spec: &str, line: usize) -> Result<PendingSlot, SchemaError> {
    if name.is_empty() {
        return Err(parse_err(line, "empty slot name"));
    }
    let mut unknown_allowed = false;
    let mut nothing_allowed = false;
    let mut pattern: Option<&str> = None;
    let mut literals: Vec<String> = Vec::new();
    for alt in split_alternatives(spec) {
        match alt {
            "" => return Err(parse_err(line, format!("empty alternative in slot '{name}'"))),
            "Unknown" => unknown_allowed = true,
            "Nothing" | "None" => nothing_allowed = true,
            a if a.contains('[') => {
                if pattern.is_some() {
                    return Err(parse_err(line, format!("slot '{name}' has more than one value pattern")));
                }
                pattern = Some(a);
            }
            a => literals.push(a.to_string()),
        }
    }
    let mut slot = AttrSlot {
        name: name.to_string(),
        multiplicity: Multiplicity::One,
        domain: SlotDomain::FreeText,
        unknown_allowed,
        nothing_allowed,
    };
    let mut placeholder = None;
    let mut qualified = false;
    match (pattern, literals.is_empty()) {
        (Some(_), false) => {
            return Err(parse_err(
                line,
                format!("slot '{name}' mixes a value pattern with literal alternatives"),
            ))
        }
        (None, true) => {
            return Err(parse_err(line, format!("slot '{name}' has no value domain")));
        }
        (None, false) => slot.domain = SlotDomain::Enumerated(literals),
        (Some(p), true) => {
            let first = first_placeholder(p)
                .ok_or_else(|| parse_err(line, format!("unclosed placeholder in slot '{name}'")))?;
            if p.contains("...") || p.matches('[').count() > 1 && p.contains("], [") {
                slot.multiplicity = Multiplicity::Many;
                placeholder = Some(first.to_string());
            } else if let Some((before, after)) = p.rsplit_once(" to ") {
                let target = first_placeholder(after.trim()).filter(|_| !before.trim().is_empty());
                match target {
                    Some(t) => {
                        qualified = true;
                        placeholder = Some(t.to_string());
                    }
                    None => placeholder = Some(first.to_string()),
                }
            } else {
                placeholder = Some(first.to_string());
            }
        }
    }
    Ok(PendingSlot {
        slot,
        placeholder,
        qualified,
        line,
    })
}

fn first_placeholder(text: &str) -> Option<&str> {
    let open = text.find('[')?;
    let close = text[open..].find(']')? + open;
    Some(text[open + 1..close].trim())
}

/// Checks the structural invariants of a schema.
pub fn check_schema(schema: &Schema) -> Result<(), SchemaError> {
    if schema.entity_types.is_empty() && !schema.has_action_rules {
        return Err(SchemaError::Invalid(
            "schema declares neither entity types nor action rules".into(),
        ));
    }
    for (i, t) in schema.entity_types.iter().enumerate() {
        if schema.entity_types[..i]
            .iter()
            .any(|o| o.name.eq_ignore_ascii_case(&t.name))
        {
            return Err(SchemaError::Invalid(format!("duplicate entity type '{}'", t.name)));
        }
        for (j, s) in t.slots.iter().enumerate() {
            if t.slots[..j].iter().any(|o| o.name.eq_ignore_ascii_case(&s.name)) {
                return Err(SchemaError::Invalid(format!(
                    "duplicate slot '{}' in entity type '{}'",
                    s.name, t.name
                )));
            }
            if s.name.eq_ignore_ascii_case(&t.key_attribute) {
                return Err(SchemaError::Invalid(format!(
                    "key attribute '{}' of '{}' is also listed as a slot",
                    s.name, t.name
                )));
            }
            if let SlotDomain::Enumerated(lits) = &s.domain {
                if lits.is_empty() {
                    return Err(SchemaError::Invalid(format!("slot '{}' has an empty enumeration", s.name)));
                }
            }
            let qualified_ref = matches!(s.domain, SlotDomain::EntityRef { qualified: true, .. });
            if s.nothing_allowed
                && s.multiplicity == Multiplicity::One
                && s.domain != SlotDomain::FreeText
                && !qualified_ref
            {
                return Err(SchemaError::Invalid(format!(
                    "slot '{}' allows Nothing but is single-valued and not free text",
                    s.name
                )));
            }
        }
    }
    Ok(())
}
