use std::collections::BTreeSet;

use super::{Bindings, LlmError, TemplateId};

/// Binding that carries the reason the previous answer was refused.
pub const FEEDBACK_VAR: &str = "feedback";

const FEEDBACK_SECTION: &str = "\n## Feedback on your previous answer\n\n{{ feedback }}\n\nAnswer again, following the response format above.\n";

pub fn template_body(id: TemplateId) -> &'static str {
    match id {
        TemplateId::PlannerObsTodo => include_str!("../../templates/planner_obs_todo.md"),
        TemplateId::PlannerRuleTodo => include_str!("../../templates/planner_rule_todo.md"),
        TemplateId::PlannerPromote => include_str!("../../templates/planner_promote.md"),
        TemplateId::PlannerLoopControl => include_str!("../../templates/planner_loop_control.md"),
        TemplateId::ActorSubagent => include_str!("../../templates/actor_subagent.md"),
        TemplateId::ExtractorObsEdits => include_str!("../../templates/extractor_obs_edits.md"),
        TemplateId::ExtractorRuleEdits => include_str!("../../templates/extractor_rule_edits.md"),
        TemplateId::ExtractorCheck => include_str!("../../templates/extractor_check.md"),
        TemplateId::ExtractorApply => include_str!("../../templates/extractor_apply.md"),
        TemplateId::KeyresultSummarize => include_str!("../../templates/keyresult_summarize.md"),
    }
}

#[derive(Debug)]
enum Piece<'a> {
    Text(&'a str),
    Var(&'a str),
    /// Lines between a `{` line and a `}` line, kept iff `var` is bound to
    /// something non-empty.
    Optional { var: &'a str, body: Vec<Piece<'a>> },
}

fn split_vars(line: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = line;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open..].find("}}") else { break };
        let name = rest[open + 2..open + close].trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            out.push(Piece::Text(&rest[..open + close + 2]));
            rest = &rest[open + close + 2..];
            continue;
        }
        out.push(Piece::Text(&rest[..open]));
        out.push(Piece::Var(name));
        rest = &rest[open + close + 2..];
    }
    out.push(Piece::Text(rest));
    out
}

/// Splits a body into pieces. `{` and `}` lines inside code fences are
/// literal text.
fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut block: Option<Vec<Piece>> = None;
    let mut in_fence = false;
    for line in body.split_inclusive('\n') {
        let bare = line.trim_end_matches(['\n', '\r']);
        if bare.trim_start().starts_with("```") {
            in_fence = !in_fence;
        }
        if !in_fence && bare == "{" && block.is_none() {
            block = Some(Vec::new());
            continue;
        }
        if !in_fence && bare == "}" {
            if let Some(inner) = block.take() {
                let var = inner
                    .iter()
                    .find_map(|p| match p {
                        Piece::Var(v) => Some(*v),
                        _ => None,
                    })
                    .unwrap_or("");
                out.push(Piece::Optional { var, body: inner });
                continue;
            }
        }
        let target = block.as_mut().unwrap_or(&mut out);
        target.extend(split_vars(line));
    }
    if let Some(inner) = block {
        // an unterminated block is plain text
        out.push(Piece::Text("{\n"));
        out.extend(inner);
    }
    out
}

/// Variables that must be bound to render `id`.
pub fn required_vars(id: TemplateId) -> BTreeSet<&'static str> {
    pieces(template_body(id))
        .into_iter()
        .filter_map(|p| match p {
            Piece::Var(v) => Some(v),
            _ => None,
        })
        .collect()
}

fn emit(pieces: &[Piece], bindings: &Bindings, id: TemplateId, out: &mut String) -> Result<(), LlmError> {
    for p in pieces {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Var(v) => match bindings.get(*v) {
                Some(value) => out.push_str(value),
                None => {
                    return Err(LlmError::MissingVariable {
                        template: id,
                        var: v.to_string(),
                    })
                }
            },
            Piece::Optional { var, body } => {
                if bindings.get(*var).is_some_and(|v| !v.trim().is_empty()) {
                    emit(body, bindings, id, out)?;
                }
            }
        }
    }
    Ok(())
}

/// Substitutes `bindings` into the template. Values are inserted verbatim and
/// never re-expanded. A bound `feedback` variable appends a feedback section.
pub fn render_template(id: TemplateId, bindings: &Bindings) -> Result<String, LlmError> {
    let mut out = String::new();
    emit(&pieces(template_body(id)), bindings, id, &mut out)?;
    if bindings.get(FEEDBACK_VAR).is_some_and(|f| !f.trim().is_empty()) {
        emit(&pieces(FEEDBACK_SECTION), bindings, id, &mut out)?;
    }
    Ok(out)
}

/// The text of every `## Example output` section of the template.
pub fn example_outputs(id: TemplateId) -> Vec<&'static str> {
    let body = template_body(id);
    let mut out = Vec::new();
    let mut rest = body;
    const HEAD: &str = "## Example output\n";
    while let Some(i) = rest.find(HEAD) {
        let after = &rest[i + HEAD.len()..];
        let end = after.find("\n## ").map(|e| e + 1).unwrap_or(after.len());
        out.push(after[..end].trim());
        rest = &after[end..];
    }
    out
}
