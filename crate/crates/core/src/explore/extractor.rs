use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::llm::{ask, parse_response, Bindings, CallConfig, Decision, LlmError, ParsedResponse, Provider, TemplateId};
use crate::schema::{
    parse_document, parse_fragment, render_document, validate_document, ActionRule, AttrValue, Document, Entity,
    Schema,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditSection {
    Observations,
    ActionRules,
}

impl EditSection {
    fn template(self) -> TemplateId {
        match self {
            EditSection::Observations => TemplateId::ExtractorObsEdits,
            EditSection::ActionRules => TemplateId::ExtractorRuleEdits,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            EditSection::Observations => "obs",
            EditSection::ActionRules => "rule",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditStatus {
    Proposed,
    Accepted,
    Revised,
    Rejected,
}

/// A prose modification of one document section, backed by a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub id: String,
    pub section: EditSection,
    pub body: String,
    pub status: EditStatus,
    /// Id of the trajectory the edit was extracted from.
    pub evidence: String,
    /// Body as first proposed, kept when a revision replaced it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<String>,
}

impl Edit {
    pub fn survives(&self) -> bool {
        matches!(self.status, EditStatus::Accepted | EditStatus::Revised)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditKind {
    Add,
    Update,
    Remove,
}

/// Splits the leading `Add:`, `Update:` or `Remove:` line off an edit body.
/// Bodies without one are additions.
pub fn edit_kind(body: &str) -> (EditKind, &str) {
    let trimmed = body.trim_start();
    let (first, rest) = trimmed.split_once('\n').unwrap_or((trimmed, ""));
    let word = first.trim().trim_end_matches(':').trim().to_ascii_lowercase();
    match word.as_str() {
        "add" => (EditKind::Add, rest),
        "update" => (EditKind::Update, rest),
        "remove" | "delete" => (EditKind::Remove, rest),
        _ => (EditKind::Add, trimmed),
    }
}

fn fill_missing(entity: &mut Entity, schema: &Schema) {
    let Some(spec) = schema.entity_type(&entity.type_name) else { return };
    let mut filled = indexmap::IndexMap::new();
    for slot in &spec.slots {
        let value = match entity.get(&slot.name) {
            Some(v) => v.clone(),
            None if slot.unknown_allowed => AttrValue::Unknown(None),
            None => AttrValue::Nothing,
        };
        filled.insert(slot.name.clone(), value);
    }
    entity.attrs = filled;
}

fn union(a: &[String], b: &[String]) -> Vec<String> {
    let mut out = a.to_vec();
    for item in b {
        if !out.iter().any(|x| x.eq_ignore_ascii_case(item)) {
            out.push(item.clone());
        }
    }
    out
}

fn merge_value(current: Option<&AttrValue>, new: &AttrValue, kind: EditKind) -> AttrValue {
    match (current, new) {
        (Some(c @ (AttrValue::Known(_) | AttrValue::KnownList(_))), AttrValue::Unknown(_)) => c.clone(),
        (Some(AttrValue::KnownList(a)), AttrValue::KnownList(b)) if kind == EditKind::Add => {
            AttrValue::KnownList(union(a, b))
        }
        _ => new.clone(),
    }
}

fn apply_entity(doc: &mut Document, schema: &Schema, entity: Entity, kind: EditKind) {
    let spec = schema.entity_type(&entity.type_name);
    let Some(pos) = doc
        .entities
        .iter()
        .position(|e| e.same_identity(&entity.type_name, &entity.key))
    else {
        if kind != EditKind::Remove {
            let mut e = entity;
            fill_missing(&mut e, schema);
            doc.entities.push(e);
        }
        return;
    };
    if kind == EditKind::Remove && entity.attrs.is_empty() {
        doc.entities.remove(pos);
        return;
    }
    let existing = &mut doc.entities[pos];
    for (slot, value) in entity.attrs {
        let current = existing.get(&slot).cloned();
        let merged = if kind == EditKind::Remove {
            match (current, value) {
                (Some(AttrValue::KnownList(a)), AttrValue::KnownList(b)) => {
                    let kept: Vec<String> = a
                        .into_iter()
                        .filter(|x| !b.iter().any(|y| y.eq_ignore_ascii_case(x)))
                        .collect();
                    if kept.is_empty() {
                        AttrValue::Nothing
                    } else {
                        AttrValue::KnownList(kept)
                    }
                }
                _ => match spec.and_then(|s| s.slot(&slot)) {
                    Some(s) if s.unknown_allowed => AttrValue::Unknown(None),
                    _ => AttrValue::Nothing,
                },
            }
        } else {
            merge_value(current.as_ref(), &value, kind)
        };
        match existing.attrs.iter().position(|(k, _)| k.eq_ignore_ascii_case(&slot)) {
            Some(i) => {
                existing.attrs[i] = merged;
            }
            None => {
                existing.attrs.insert(slot, merged);
            }
        }
    }
    fill_missing(existing, schema);
}

fn apply_rule(doc: &mut Document, mut rule: ActionRule, kind: EditKind) {
    if rule.note.trim().eq_ignore_ascii_case("none") {
        rule.note.clear();
    }
    let pos = doc
        .action_rules
        .iter()
        .position(|r| r.action.eq_ignore_ascii_case(&rule.action));
    match (kind, pos) {
        (EditKind::Remove, Some(i)) => {
            doc.action_rules.remove(i);
        }
        (EditKind::Remove, None) => {}
        (_, None) => doc.action_rules.push(rule),
        (_, Some(i)) => {
            let existing = &mut doc.action_rules[i];
            for (field, value) in [
                (&mut existing.requirements, rule.requirements),
                (&mut existing.key_result, rule.key_result),
                (&mut existing.note, rule.note),
            ] {
                if !value.trim().is_empty() {
                    *field = value;
                }
            }
        }
    }
}

/// Applies edit bodies one by one without a model. An edit whose result
/// would not validate is skipped; the returned notes say which and why.
pub fn apply_mechanically(doc: &Document, schema: &Schema, bodies: &[String]) -> (Document, Vec<String>) {
    let mut current = doc.clone();
    let mut notes = Vec::new();
    for (i, body) in bodies.iter().enumerate() {
        let (kind, rest) = edit_kind(body);
        let (fragment, problems) = parse_fragment(rest, schema);
        if fragment.entities.is_empty() && fragment.action_rules.is_empty() {
            notes.push(format!("modification {}: nothing readable", i + 1));
            continue;
        }
        let mut candidate = current.clone();
        for entity in fragment.entities {
            apply_entity(&mut candidate, schema, entity, kind);
        }
        for rule in fragment.action_rules {
            apply_rule(&mut candidate, rule, kind);
        }
        let violations = validate_document(&candidate, schema);
        if violations.is_empty() {
            current = candidate;
            if !problems.is_empty() {
                notes.push(format!("modification {}: partly unreadable", i + 1));
            }
        } else {
            notes.push(format!("modification {}: skipped, {}", i + 1, violations[0]));
        }
    }
    (current, notes)
}

const MARKER_WORDS: [&str; 3] = ["unknown", "nothing", "none"];

/// Names and values stated in an edit body.
fn content_tokens(body: &str) -> Vec<String> {
    let (_, rest) = edit_kind(body);
    let mut out = Vec::new();
    for line in rest.lines() {
        let item = line.trim().trim_start_matches("- ").trim();
        let (head, value) = match item.split_once(':') {
            Some((h, v)) => (h.trim(), v.trim()),
            None => (item, ""),
        };
        let pieces: Vec<&str> = if value.is_empty() {
            vec![head]
        } else {
            value.split(", ").flat_map(|p| p.split(" to ")).collect()
        };
        for p in pieces {
            let p = p.trim().trim_end_matches('.');
            if p.chars().count() >= 3 && !MARKER_WORDS.contains(&p.to_ascii_lowercase().as_str()) {
                out.push(p.to_string());
            }
        }
    }
    out
}

/// First piece of rejected content that `text` contains although neither
/// the previous document nor any surviving edit mentions it.
pub fn leaked_content(text: &str, before: &str, surviving: &[&str], rejected: &[&str]) -> Option<String> {
    let lower = text.to_lowercase();
    let before = before.to_lowercase();
    let surviving: Vec<String> = surviving.iter().map(|s| s.to_lowercase()).collect();
    for body in rejected {
        for token in content_tokens(body) {
            let t = token.to_lowercase();
            if lower.contains(&t) && !before.contains(&t) && !surviving.iter().any(|s| s.contains(&t)) {
                return Some(token);
            }
        }
    }
    None
}

/// Result of [`Extractor::apply`].
#[derive(Debug, Clone)]
pub struct Applied {
    pub document: Document,
    /// The model's rewrite was never usable and the edits were applied
    /// mechanically.
    pub fallback: bool,
    pub notes: Vec<String>,
}

/// The propose, check and apply calls for one schema and environment.
pub struct Extractor<'a> {
    pub schema: &'a Schema,
    pub background: &'a str,
    pub call: CallConfig,
    pub prompt_records: usize,
}

impl Extractor<'_> {
    fn knowledge(&self, doc: &Document) -> String {
        render_document(doc, self.schema).unwrap_or_else(|_| crate::schema::render_unchecked(doc, self.schema))
    }

    /// Asks for edits of `section` supported by `trajectory`. Unusable
    /// answers yield no edits.
    pub fn extract(
        &self,
        llm: &mut dyn Provider,
        doc: &Document,
        trajectory: &Trajectory,
        section: EditSection,
    ) -> Result<Vec<Edit>, LlmError> {
        let id = section.template();
        let mut b = Bindings::new();
        b.insert("background".into(), self.background.to_string());
        b.insert("trajectory".into(), trajectory.render_for_prompt(self.prompt_records));
        b.insert("knowledge_definition".into(), self.schema.source_text.clone());
        b.insert("knowledge".into(), self.knowledge(doc));
        let answer = ask(llm, id, &b, &self.call, |text| match parse_response(id, text) {
            Ok(ParsedResponse::NumberedTags(n)) => Ok(n.items),
            Ok(other) => Err(format!("unexpected response shape {other:?}")),
            Err(e) => Err(e.to_string()),
        });
        let items = match answer {
            Ok(a) => a.value,
            Err(LlmError::RetriesExhausted { last_error, .. }) => {
                tracing::warn!(%last_error, "no usable edits");
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        Ok(items
            .into_iter()
            .enumerate()
            .map(|(i, body)| Edit {
                id: format!("{}-{}{}", trajectory.id, section.tag(), i + 1),
                section,
                body,
                status: EditStatus::Proposed,
                evidence: trajectory.id.clone(),
                original: None,
            })
            .collect())
    }

    /// Decides one edit against its trajectory. Unusable answers reject it.
    pub fn check(
        &self,
        llm: &mut dyn Provider,
        doc: &Document,
        trajectory: &Trajectory,
        edit: &mut Edit,
    ) -> Result<(), LlmError> {
        let id = TemplateId::ExtractorCheck;
        let mut b = Bindings::new();
        b.insert("background".into(), self.background.to_string());
        b.insert("knowledge_definition".into(), self.schema.source_text.clone());
        b.insert("knowledge".into(), self.knowledge(doc));
        b.insert("trajectory".into(), trajectory.render_for_prompt(self.prompt_records));
        b.insert("modification".into(), edit.body.clone());
        let answer = ask(llm, id, &b, &self.call, |text| match parse_response(id, text) {
            Ok(ParsedResponse::Decision(d)) => Ok(d),
            Ok(other) => Err(format!("unexpected response shape {other:?}")),
            Err(e) => Err(e.to_string()),
        });
        let decision = match answer {
            Ok(a) => a.value,
            Err(LlmError::RetriesExhausted { .. }) => Decision::Reject,
            Err(e) => return Err(e),
        };
        match decision {
            Decision::Accept => edit.status = EditStatus::Accepted,
            Decision::Revise(body) => {
                edit.original = Some(std::mem::replace(&mut edit.body, body));
                edit.status = EditStatus::Revised;
            }
            Decision::Reject => edit.status = EditStatus::Rejected,
        }
        Ok(())
    }

    /// Has the model rewrite the document with the surviving edits. A rewrite
    /// must parse, validate and leave out rejected content; after the retry
    /// limit the edits are applied mechanically instead.
    pub fn apply(&self, llm: &mut dyn Provider, doc: &Document, edits: &[Edit]) -> Result<Applied, LlmError> {
        let surviving: Vec<&str> = edits.iter().filter(|e| e.survives()).map(|e| e.body.as_str()).collect();
        if surviving.is_empty() {
            return Ok(Applied {
                document: doc.clone(),
                fallback: false,
                notes: Vec::new(),
            });
        }
        let rejected: Vec<&str> = edits
            .iter()
            .filter(|e| e.status == EditStatus::Rejected)
            .map(|e| e.body.as_str())
            .chain(edits.iter().filter_map(|e| e.original.as_deref()))
            .collect();
        let before = self.knowledge(doc);
        let list: String = surviving
            .iter()
            .enumerate()
            .map(|(i, body)| format!("<modification{n}>\n{body}\n</modification{n}>\n", n = i + 1))
            .collect();
        let id = TemplateId::ExtractorApply;
        let mut b = Bindings::new();
        b.insert("knowledge_definition".into(), self.schema.source_text.clone());
        b.insert("knowledge".into(), before.clone());
        b.insert("modification_list".into(), list);
        let answer = ask(llm, id, &b, &self.call, |text| {
            let blocks = match parse_response(id, text) {
                Ok(ParsedResponse::TaggedBlocks(t)) => t,
                Ok(other) => return Err(format!("unexpected response shape {other:?}")),
                Err(e) => return Err(e.to_string()),
            };
            let knowledge = blocks
                .text("knowledge")
                .ok_or_else(|| "the <knowledge> tag must hold the whole document".to_string())?;
            let parsed = parse_document(knowledge, self.schema).map_err(|violations| {
                let listed: Vec<String> = violations.iter().map(|v| format!("- {v}")).collect();
                format!("The document breaks its format:\n{}", listed.join("\n"))
            })?;
            if let Some(token) = leaked_content(knowledge, &before, &surviving, &rejected) {
                return Err(format!(
                    "The document mentions '{token}', which only a rejected modification supports. Leave it out."
                ));
            }
            Ok(parsed)
        });
        match answer {
            Ok(a) => {
                let mut document = a.value;
                document.meta = doc.meta.clone();
                Ok(Applied {
                    document,
                    fallback: false,
                    notes: a.feedback,
                })
            }
            Err(LlmError::RetriesExhausted { last_error, .. }) => {
                let bodies: Vec<String> = surviving.iter().map(|s| s.to_string()).collect();
                let (document, mut notes) = apply_mechanically(doc, self.schema, &bodies);
                notes.insert(0, format!("rewrite refused: {last_error}"));
                Ok(Applied {
                    document,
                    fallback: true,
                    notes,
                })
            }
            Err(e) => Err(e),
        }
    }
}
