//! Rule-based stand-in for a language model. It reads nothing but the
//! prompt bindings, so it sees exactly what a model would see, and answers
//! every template in that template's grammar.

mod policy;
mod world;

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde_json::json;

pub use policy::{context_action, explore_action, parse_goal, Goal, FINISH};
pub use world::{
    action_templates, parse_doc_view, parse_room_view, parse_trajectory, DocView, ExitValue, ParsedTrajectory,
    RoomEntry, RoomView,
};

use super::{extract_numbered, Bindings, CompletionRequest, LlmError, Provider, TemplateId};
use crate::explore::{apply_mechanically, summarize_steps};
use crate::forest::{parse_forest, Forest, Mode, NodeRef, Status, TodoPath, INIT_STATE};
use crate::schema::{parse_document, parse_schema, render_document, Document};
use crate::text::{first_sentence, one_line, wildcard_match};
use world::{bare_object, is_failure, location_in, move_direction, opposite, parse_exit, DIRS};

/// Answers from the bindings alone. Deterministic: equal requests get equal
/// answers.
#[derive(Debug, Clone, Default)]
pub struct OracleProvider {
    calls: usize,
}

impl OracleProvider {
    pub fn new() -> Self {
        OracleProvider::default()
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl Provider for OracleProvider {
    fn complete(&mut self, req: &CompletionRequest) -> Result<String, LlmError> {
        self.calls += 1;
        let b = &req.bindings;
        Ok(match req.template_id {
            TemplateId::PlannerObsTodo => obs_todo(b),
            TemplateId::PlannerRuleTodo => rule_todos(b),
            TemplateId::PlannerPromote => promotion(b),
            TemplateId::PlannerLoopControl => loop_control(b),
            TemplateId::ActorSubagent => subagent(b),
            TemplateId::ExtractorObsEdits => obs_edits(b),
            TemplateId::ExtractorRuleEdits => rule_edits(b),
            TemplateId::ExtractorCheck => check(b),
            TemplateId::ExtractorApply => apply(b),
            TemplateId::KeyresultSummarize => key_result(b),
        })
    }
}

fn get<'a>(b: &'a Bindings, key: &str) -> &'a str {
    b.get(key).map(String::as_str).unwrap_or("")
}

fn number(b: &Bindings, key: &str, default: usize) -> usize {
    get(b, key).trim().parse().unwrap_or(default)
}

fn forest_of(b: &Bindings) -> Option<Forest> {
    let text = get(b, "todo_forest");
    parse_forest(text, Mode::Action)
        .or_else(|_| parse_forest(text, Mode::Agent))
        .ok()
}

/// Every state root and executed node with the room the agent stands in
/// there, plus the number of actions needed to get there from reset.
fn located(forest: &Forest) -> Vec<(NodeRef, String, usize)> {
    fn walk(
        forest: &Forest,
        children: &[crate::forest::Node],
        at: &NodeRef,
        room: &str,
        out: &mut Vec<(NodeRef, String, usize)>,
    ) {
        for (i, node) in children.iter().enumerate() {
            let mut r = at.clone();
            r.path.push(i);
            let here = match &node.status {
                Status::Todo => continue,
                Status::Done(k) => location_in(k).unwrap_or(room).to_string(),
                Status::Failed(_) => room.to_string(),
            };
            let cost = forest.replay_actions(&r).map(|a| a.len()).unwrap_or(usize::MAX);
            out.push((r.clone(), here.clone(), cost));
            walk(forest, &node.children, &r, &here, out);
        }
    }
    let mut out = Vec::new();
    for state in forest.states.values() {
        let root = NodeRef::root(&state.name);
        let Some(room) = location_in(&state.summary) else { continue };
        let cost = forest.replay_actions(&root).map(|a| a.len()).unwrap_or(usize::MAX);
        out.push((root.clone(), room.to_string(), cost));
        walk(forest, &state.children, &root, room, &mut out);
    }
    out
}

fn door_is_open(actions: &[String], door: &str) -> bool {
    let mut open = false;
    for a in actions {
        if a.eq_ignore_ascii_case(&format!("open {door}")) {
            open = true;
        } else if a.eq_ignore_ascii_case(&format!("close {door}")) {
            open = false;
        }
    }
    open
}

fn tagged_todo(thought: &str, missing: &str, todo: &str) -> String {
    format!("<thought>\n{thought}\n</thought>\n<missing_observations>\n{missing}\n</missing_observations>\n<todo>\n{todo}\n</todo>\n")
}

fn obs_todo(b: &Bindings) -> String {
    let Some(forest) = forest_of(b) else {
        return tagged_todo("The forest could not be read.", "Nothing found.", "None");
    };
    let doc = parse_doc_view(get(b, "knowledge"));
    let max_len = number(b, "max_length", 8);
    if doc.rooms.is_empty() {
        let path = TodoPath::new(INIT_STATE, &["look"]);
        if matches!(forest.validate_path(&path, max_len), crate::forest::PathVerdict::Ok(_)) {
            return tagged_todo("Nothing is recorded yet. Looking around comes first.", "- every location", &path.to_string());
        }
        return tagged_todo("The document stays empty after looking around.", "Nothing found.", "None");
    }
    let mut spots = located(&forest);
    spots.sort_by_key(|(_, _, cost)| *cost);
    for (room, entry) in &doc.rooms {
        for (dir, value) in &entry.exits {
            let ExitValue::Unknown(qualifier) = value else { continue };
            for (r, _, _) in spots.iter().filter(|(_, here, _)| here.eq_ignore_ascii_case(room)) {
                let mut steps = forest.labels_of(r).unwrap_or_default();
                let actions = forest.replay_actions(r).unwrap_or_default();
                if let Some(door) = qualifier.as_deref().and_then(|q| q.strip_prefix("closed ")) {
                    if !door_is_open(&actions, door) {
                        steps.push(format!("open {door}"));
                    }
                }
                steps.push(format!("go {dir}"));
                let path = TodoPath {
                    start_state: r.state.clone(),
                    steps,
                };
                if matches!(forest.validate_path(&path, max_len), crate::forest::PathVerdict::Ok(_)) {
                    return tagged_todo(
                        &format!("The {dir} exit of the {room} leads somewhere unrecorded."),
                        &format!("- {room}: {dir}"),
                        &path.to_string(),
                    );
                }
            }
        }
    }
    tagged_todo("No reachable unrecorded exit remains.", "Nothing found.", "None")
}

fn all_labels(forest: &Forest) -> Vec<String> {
    fn collect(nodes: &[crate::forest::Node], out: &mut Vec<String>) {
        for n in nodes {
            out.push(n.label.text().to_string());
            collect(&n.children, out);
        }
    }
    let mut out = Vec::new();
    for s in forest.states.values() {
        collect(&s.children, &mut out);
    }
    out
}

/// Steps that try `template` with objects and doors from `view`.
fn fill_template(template: &str, view: Option<&RoomView>) -> Option<Vec<String>> {
    if !template.contains("...") {
        return (!template.contains('/') && !template.contains('[')).then(|| vec![template.to_string()]);
    }
    let view = view?;
    let loose: Vec<&str> = view
        .objects
        .iter()
        .filter(|o| !o.contains(" (on "))
        .map(|o| bare_object(o))
        .collect();
    let supported = view.objects.iter().find(|o| o.contains(" (on "));
    let supporter = view.objects.iter().find_map(|o| world::supporter_of(o));
    let door = |state: &str| {
        view.exits
            .iter()
            .find_map(|(_, q)| q.strip_prefix(state).map(str::to_string))
    };
    match template {
        "examine ..." => Some(vec![format!("examine {}", bare_object(view.objects.first()?))]),
        "take ..." => Some(vec![format!("take {}", loose.first()?)]),
        "take ... from ..." => {
            let item = supported?;
            Some(vec![format!("take {} from {}", bare_object(item), world::supporter_of(item)?)])
        }
        "drop ..." => {
            let item = loose.first()?;
            Some(vec![format!("take {item}"), format!("drop {item}")])
        }
        "put ... on ..." => {
            let item = loose.first()?;
            Some(vec![format!("take {item}"), format!("put {item} on {}", supporter?)])
        }
        "close ..." => match door("open ") {
            Some(d) => Some(vec![format!("close {d}")]),
            None => {
                let d = door("closed ")?;
                Some(vec![format!("open {d}"), format!("close {d}")])
            }
        },
        "open ..." => Some(vec![format!("open {}", door("closed ")?)]),
        _ => None,
    }
}

fn rule_todos(b: &Bindings) -> String {
    let Some(forest) = forest_of(b) else {
        return "The forest could not be read.\n\n```json\n[]\n```\n".into();
    };
    let max_len = number(b, "max_length", 8);
    let num_todo = number(b, "num_todo", 3);
    let templates = action_templates(get(b, "background"));
    let traj = parse_trajectory(get(b, "trajectory"));
    let base = traj
        .path
        .as_deref()
        .and_then(|p| crate::forest::parse_path(p).ok())
        .filter(|p| forest.resolve_labels(&p.start_state, &p.steps).is_some());
    let view = if base.is_some() { traj.current_room() } else { None };
    let labels = all_labels(&forest);
    let mut out: Vec<String> = Vec::new();
    for template in &templates {
        if out.len() >= num_todo {
            break;
        }
        if labels.iter().any(|l| wildcard_match(template, l)) {
            continue;
        }
        let Some(extra) = fill_template(template, view.as_ref()) else { continue };
        let mut path = match (&base, template.contains("...")) {
            (Some(p), true) => p.clone(),
            _ => TodoPath {
                start_state: INIT_STATE.into(),
                steps: Vec::new(),
            },
        };
        path.steps.extend(extra);
        if matches!(forest.validate_path(&path, max_len), crate::forest::PathVerdict::Ok(_)) {
            out.push(path.to_string());
        }
    }
    format!(
        "These actions have not been tried yet.\n\n```json\n{}\n```\n",
        serde_json::to_string_pretty(&out).expect("strings serialize")
    )
}

fn state_name_for(room: &str, forest: &Forest) -> String {
    let slug: String = room
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    let base = format!("in_{slug}");
    let mut name = base.clone();
    let mut n = 2;
    while forest.state(&name).is_some() {
        name = format!("{base}_{n}");
        n += 1;
    }
    name
}

fn promotion(b: &Bindings) -> String {
    let none = || {
        let obj = json!({
            "target_missing_observation": "None",
            "selected_path": "None",
            "new_state_name": "None",
            "state_summary": "None",
        });
        format!("No node qualifies.\n\n```json\n{}\n```\n", serde_json::to_string_pretty(&obj).unwrap())
    };
    let Some(forest) = forest_of(b) else { return none() };
    let doc = parse_doc_view(get(b, "knowledge"));
    let with_state: BTreeSet<String> = forest
        .states
        .values()
        .filter_map(|s| location_in(&s.summary).map(str::to_lowercase))
        .collect();
    let mut rooms: Vec<(&String, usize)> = doc
        .rooms
        .iter()
        .map(|(name, e)| (name, e.unknown_count()))
        .filter(|(name, n)| *n > 0 && !with_state.contains(&name.to_lowercase()))
        .collect();
    rooms.sort_by_key(|(_, n)| std::cmp::Reverse(*n));
    let spots = located(&forest);
    for (room, unknowns) in rooms {
        let best = spots
            .iter()
            .filter(|(r, here, _)| {
                !r.is_root()
                    && here.eq_ignore_ascii_case(room)
                    && forest.node(r).is_some_and(|n| {
                        n.promoted_to.is_none() && matches!(&n.status, Status::Done(k) if location_in(k).is_some())
                    })
            })
            .min_by_key(|(_, _, cost)| *cost);
        let Some((r, _, _)) = best else { continue };
        let path = TodoPath {
            start_state: r.state.clone(),
            steps: forest.labels_of(r).unwrap_or_default(),
        };
        let obj = json!({
            "target_missing_observation": format!("{unknowns} exits of the {room} lead to Unknown"),
            "selected_path": path.to_string(),
            "new_state_name": state_name_for(room, &forest),
            "state_summary": format!("Agent's location: {room}."),
        });
        return format!(
            "The {room} still has unexplored exits and no state starts there.\n\n```json\n{}\n```\n",
            serde_json::to_string_pretty(&obj).unwrap()
        );
    }
    none()
}

fn loop_control(b: &Bindings) -> String {
    let gaps = get(b, "gaps").trim();
    let open = !gaps.is_empty() && !gaps.eq_ignore_ascii_case("none");
    let (thought, answer) = if open {
        ("Some gaps are still open.", "yes")
    } else {
        ("Every gap is closed.", "no")
    };
    format!("<thought>\n{thought}\n</thought>\n<continue>\n{answer}\n</continue>\n")
}

fn subagent(b: &Bindings) -> String {
    let task = get(b, "task");
    let traj = parse_trajectory(get(b, "trajectory"));
    let doc = parse_doc_view(get(b, "background"));
    let action = match (!doc.rooms.is_empty()).then(|| context_action(&doc, task, &traj)).flatten() {
        Some(a) => a,
        None => explore_action(task, &traj),
    };
    format!("<thought>\nNext step towards the task.\n</thought>\n<action>\n{action}\n</action>\n")
}

fn render_exit(v: &ExitValue) -> String {
    match v {
        ExitValue::Leads { qualifier, to } => format!("{qualifier} to {to}"),
        ExitValue::Unknown(Some(q)) => format!("{q} to Unknown"),
        ExitValue::Unknown(None) => "Unknown".into(),
        ExitValue::Nothing => "Nothing".into(),
    }
}

fn render_objects(objects: &[String]) -> String {
    if objects.is_empty() {
        "Nothing".into()
    } else {
        objects.join(", ")
    }
}

struct Working {
    name: String,
    entry: RoomEntry,
    new: bool,
    dirty: BTreeSet<String>,
}

fn modifications(items: &[String]) -> String {
    if items.is_empty() {
        return "<modification1>\nNone\n</modification1>\n".into();
    }
    let mut out = String::new();
    for (i, m) in items.iter().enumerate() {
        out.push_str(&format!("<modification{n}>\n{m}\n</modification{n}>\n", n = i + 1));
    }
    out
}

fn obs_edits(b: &Bindings) -> String {
    let doc = parse_doc_view(get(b, "knowledge"));
    let traj = parse_trajectory(get(b, "trajectory"));
    let mut work: IndexMap<String, Working> = IndexMap::new();
    let ensure = |work: &mut IndexMap<String, Working>, view: &RoomView| {
        let key = view.name.to_lowercase();
        if !work.contains_key(&key) {
            let (w_name, entry, new) = match doc.room(&view.name) {
                Some((n, e)) => (n.clone(), e.clone(), false),
                None => {
                    let mut e = RoomEntry {
                        objects: view.objects.clone(),
                        ..RoomEntry::default()
                    };
                    for d in DIRS {
                        let v = match view.exit(d) {
                            Some(q) => ExitValue::Unknown(Some(q.to_string())),
                            None => ExitValue::Nothing,
                        };
                        e.exits.insert(d.to_string(), v);
                    }
                    (view.name.clone(), e, true)
                }
            };
            work.insert(
                key.clone(),
                Working {
                    name: w_name,
                    entry,
                    new,
                    dirty: BTreeSet::new(),
                },
            );
        }
        let w = work.get_mut(&key).expect("inserted");
        for o in &view.objects {
            if !w.entry.objects.iter().any(|e| bare_object(e).eq_ignore_ascii_case(bare_object(o))) {
                w.entry.objects.push(o.clone());
                w.dirty.insert("objects".into());
            }
        }
        for d in DIRS {
            let current = w.entry.exits.get(d).cloned();
            let seen = view.exit(d);
            let replacement = match (current, seen) {
                (None, Some(q)) | (Some(ExitValue::Nothing), Some(q)) => Some(ExitValue::Unknown(Some(q.to_string()))),
                (None, None) => Some(ExitValue::Nothing),
                _ => None,
            };
            if let Some(v) = replacement {
                w.entry.exits.insert(d.to_string(), v);
                w.dirty.insert(d.to_string());
            }
        }
    };
    let mut previous: Option<RoomView> = traj.initial.as_deref().and_then(parse_room_view);
    if let Some(v) = &previous {
        ensure(&mut work, v);
    }
    for (action, obs) in &traj.steps {
        let Some(view) = parse_room_view(obs) else { continue };
        ensure(&mut work, &view);
        if let (Some(d), Some(p)) = (move_direction(action), previous.as_ref()) {
            if !p.name.eq_ignore_ascii_case(&view.name) {
                link(&mut work, p, d, &view.name);
                link(&mut work, &view, opposite(d), &p.name);
            }
        }
        previous = Some(view);
    }
    let mut items = Vec::new();
    for w in work.values() {
        if w.new {
            let mut body = format!("Add:\n- {}:\n  - objects: {}\n", w.name, render_objects(&w.entry.objects));
            for d in DIRS {
                let v = w.entry.exits.get(d).cloned().unwrap_or(ExitValue::Nothing);
                body.push_str(&format!("  - {d}: {}\n", render_exit(&v)));
            }
            items.push(body.trim_end().to_string());
        } else if !w.dirty.is_empty() {
            let mut body = format!("Update:\n- {}:\n", w.name);
            if w.dirty.contains("objects") {
                body.push_str(&format!("  - objects: {}\n", render_objects(&w.entry.objects)));
            }
            for d in DIRS {
                if w.dirty.contains(d) {
                    let v = w.entry.exits.get(d).cloned().unwrap_or(ExitValue::Nothing);
                    body.push_str(&format!("  - {d}: {}\n", render_exit(&v)));
                }
            }
            items.push(body.trim_end().to_string());
        }
    }
    modifications(&items)
}

/// Records that `dir` of `from` leads to `to` when it is still unknown.
fn link(work: &mut IndexMap<String, Working>, from: &RoomView, dir: &str, to: &str) {
    let Some(w) = work.get_mut(&from.name.to_lowercase()) else { return };
    if let Some(ExitValue::Unknown(q)) = w.entry.exits.get(dir).cloned() {
        let qualifier = q
            .or_else(|| from.exit(dir).map(str::to_string))
            .unwrap_or_else(|| "exit".into());
        w.entry.exits.insert(
            dir.to_string(),
            ExitValue::Leads {
                qualifier,
                to: to.to_string(),
            },
        );
        w.dirty.insert(dir.to_string());
    }
}

fn rule_edits(b: &Bindings) -> String {
    let doc = parse_doc_view(get(b, "knowledge"));
    let traj = parse_trajectory(get(b, "trajectory"));
    let mut known: BTreeSet<String> = doc.rules.iter().map(|r| r.to_lowercase()).collect();
    let mut room: Option<String> = traj.initial.as_deref().and_then(parse_room_view).map(|v| v.name);
    let mut items = Vec::new();
    for (action, obs) in &traj.steps {
        let before = room.clone();
        if let Some(v) = parse_room_view(obs) {
            room = Some(v.name);
        }
        if is_failure(obs) || !known.insert(action.to_lowercase()) {
            continue;
        }
        let line = obs
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with("-="))
            .unwrap_or("");
        let key = one_line(first_sentence(line));
        if key.is_empty() {
            continue;
        }
        let requirements = match before {
            Some(r) => format!("the agent is in the {r}"),
            None => "none observed".to_string(),
        };
        items.push(format!(
            "Add:\n- action: {action}\n  - requirements: {requirements}\n  - key_result: {key}\n  - note: None"
        ));
    }
    modifications(&items)
}

/// Words that claim something cannot be done.
const NEGATIVE_CLAIMS: [&str; 4] = ["cannot", "can not", "can't be", "not possible"];

fn has_negative_claim(text: &str) -> bool {
    let lower = text.to_lowercase();
    NEGATIVE_CLAIMS.iter().any(|c| lower.contains(c))
}

/// Drops parentheticals and lines that carry a negative claim.
fn strip_negative_claims(body: &str) -> String {
    let mut out = Vec::new();
    for line in body.lines() {
        let mut kept = String::new();
        let mut rest = line;
        while let Some(open) = rest.find(" (") {
            let Some(close) = rest[open..].find(')') else { break };
            let group = &rest[open..open + close + 1];
            kept.push_str(&rest[..open]);
            if !has_negative_claim(group) {
                kept.push_str(group);
            }
            rest = &rest[open + close + 1..];
        }
        kept.push_str(rest);
        if !has_negative_claim(&kept) {
            out.push(kept);
        }
    }
    out.join("\n")
}

/// Names and values an edit asserts, each of which must occur in the
/// trajectory.
fn atoms(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in body.lines() {
        let t = line.trim();
        let Some(item) = t.strip_prefix("- ") else { continue };
        let indent = line.len() - line.trim_start().len();
        match item.split_once(':') {
            Some((field, value)) if indent == 0 && field.trim().eq_ignore_ascii_case("action") => {
                out.push(value.trim().to_string());
            }
            Some((field, value)) if indent > 0 => {
                let field = field.trim().to_ascii_lowercase();
                let value = value.trim();
                if field == "objects" {
                    out.extend(
                        value
                            .split(", ")
                            .map(|o| bare_object(o).to_string())
                            .filter(|o| o != "Nothing" && o != "None" && !o.is_empty()),
                    );
                } else if DIRS.contains(&field.as_str()) {
                    match parse_exit(value) {
                        ExitValue::Leads { qualifier, to } => {
                            out.push(qualifier);
                            out.push(to);
                        }
                        ExitValue::Unknown(Some(q)) => out.push(q),
                        _ => {}
                    }
                }
            }
            None if indent == 0 => out.push(item.trim_end_matches(':').trim().to_string()),
            Some((head, "")) if indent == 0 => out.push(head.trim().to_string()),
            _ => {}
        }
    }
    out
}

fn decision(thought: &str, word: &str, content: &str) -> String {
    format!("<thought>\n{thought}\n</thought>\n<decision>\n{word}\n</decision>\n<content>\n{content}\n</content>\n")
}

fn check(b: &Bindings) -> String {
    let body = get(b, "modification").trim();
    let trajectory = get(b, "trajectory").to_lowercase();
    let keyword = body.lines().next().unwrap_or("").trim().trim_end_matches(':').to_ascii_lowercase();
    if keyword == "remove" {
        return decision("Removals need stronger evidence than one trajectory.", "Reject", "None");
    }
    let revised = strip_negative_claims(body);
    let unsupported: Vec<String> = atoms(&revised)
        .into_iter()
        .filter(|a| !trajectory.contains(&a.to_lowercase()))
        .collect();
    if !unsupported.is_empty() {
        return decision(
            &format!("The trajectory never mentions: {}.", unsupported.join(", ")),
            "Reject",
            "None",
        );
    }
    if revised.trim() != body {
        if atoms(&revised).is_empty() {
            return decision("Only a negative claim was proposed.", "Reject", "None");
        }
        return decision("The claim that something cannot be done is dropped.", "Revise", revised.trim());
    }
    decision("Everything stated is visible in the trajectory.", "Accept", "None")
}

fn apply(b: &Bindings) -> String {
    let schema = match parse_schema("document", get(b, "knowledge_definition")) {
        Ok(s) => s,
        Err(e) => return format!("<thought>\nThe format could not be read: {e}\n</thought>\n<knowledge>\nNone\n</knowledge>\n"),
    };
    let doc = parse_document(get(b, "knowledge"), &schema).unwrap_or_else(|_| Document::empty());
    let mods = extract_numbered(get(b, "modification_list"), "modification")
        .map(|n| n.items)
        .unwrap_or_default();
    let (updated, _) = apply_mechanically(&doc, &schema, &mods);
    let text = render_document(&updated, &schema).unwrap_or_else(|_| render_document(&doc, &schema).unwrap_or_default());
    format!(
        "<thought>\nApplied {} modifications.\n</thought>\n<knowledge>\n{}\n</knowledge>\n",
        mods.len(),
        text.trim_end()
    )
}

fn key_result(b: &Bindings) -> String {
    let traj = parse_trajectory(get(b, "trajectory"));
    let summary = summarize_steps(traj.initial.as_deref(), &traj.steps);
    let text = if summary.failed {
        crate::forest::FAILED_RESULT.to_string()
    } else {
        summary.text
    };
    format!("<key_result>\n{text}\n</key_result>\n")
}

#[cfg(test)]
mod tests;
