//! Text readers for observations, trajectories and documents as they appear
//! in prompt bindings.

use indexmap::IndexMap;

use crate::explore::{ACTION_TAG, OBSERVATION_TAG, PATH_PREFIX, THOUGHT_TAG};

pub const DIRS: [&str; 4] = ["north", "east", "south", "west"];

pub fn opposite(dir: &str) -> &'static str {
    match dir {
        "north" => "south",
        "south" => "north",
        "east" => "west",
        _ => "east",
    }
}

/// Direction moved by an action like `go east` or `east`.
pub fn move_direction(action: &str) -> Option<&'static str> {
    let a = action.trim().to_ascii_lowercase();
    let word = a.strip_prefix("go ").unwrap_or(&a).trim().to_string();
    DIRS.iter().copied().find(|d| *d == word || d[..1] == word)
}

/// A room description: `-= Name =-` followed by `Objects:` and `Exits:` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoomView {
    pub name: String,
    pub objects: Vec<String>,
    /// Direction and the passage description, e.g. `closed red door`.
    pub exits: Vec<(String, String)>,
}

impl RoomView {
    pub fn exit(&self, dir: &str) -> Option<&str> {
        self.exits.iter().find(|(d, _)| d == dir).map(|(_, q)| q.as_str())
    }
}

pub fn parse_room_view(text: &str) -> Option<RoomView> {
    let mut view: Option<RoomView> = None;
    for line in text.lines().map(str::trim) {
        if let Some(name) = line.strip_prefix("-= ").and_then(|l| l.strip_suffix(" =-")) {
            view = Some(RoomView {
                name: name.trim().to_string(),
                objects: Vec::new(),
                exits: Vec::new(),
            });
            continue;
        }
        let Some(v) = view.as_mut() else { continue };
        if let Some(objs) = line.strip_prefix("Objects:") {
            let objs = objs.trim();
            if !objs.eq_ignore_ascii_case("nothing") {
                v.objects = objs.split(", ").map(|o| o.trim().to_string()).filter(|o| !o.is_empty()).collect();
            }
        } else if let Some(exits) = line.strip_prefix("Exits:") {
            let exits = exits.trim();
            if !exits.eq_ignore_ascii_case("none") {
                for part in exits.split("; ") {
                    if let Some((d, q)) = part.split_once(": ") {
                        v.exits.push((d.trim().to_string(), q.trim().to_string()));
                    }
                }
            }
        }
    }
    view
}

/// Object name without a trailing `(on ...)` note.
pub fn bare_object(item: &str) -> &str {
    item.split(" (").next().unwrap_or(item).trim()
}

/// Supporter named in a trailing `(on ...)` note.
pub fn supporter_of(item: &str) -> Option<&str> {
    item.split_once(" (on ").map(|(_, s)| s.trim_end_matches(')').trim())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedTrajectory {
    pub path: Option<String>,
    pub initial: Option<String>,
    pub steps: Vec<(String, String)>,
}

impl ParsedTrajectory {
    /// Every observation in order, the initial one first.
    pub fn observations(&self) -> impl Iterator<Item = &str> {
        self.initial
            .iter()
            .map(String::as_str)
            .chain(self.steps.iter().map(|(_, o)| o.as_str()))
    }

    /// The room the agent stands in after the last step, when some
    /// observation names it.
    pub fn current_room(&self) -> Option<RoomView> {
        self.observations().filter_map(parse_room_view).last()
    }
}

pub fn parse_trajectory(text: &str) -> ParsedTrajectory {
    let mut out = ParsedTrajectory::default();
    let mut action: Option<String> = None;
    let mut obs: Option<String> = None;
    let flush = |out: &mut ParsedTrajectory, action: &mut Option<String>, obs: &mut Option<String>| {
        if let Some(o) = obs.take() {
            match action.take() {
                Some(a) => out.steps.push((a, o)),
                None if out.steps.is_empty() && out.initial.is_none() => out.initial = Some(o),
                None => {}
            }
        }
    };
    for line in text.lines() {
        if let Some(p) = line.strip_prefix(PATH_PREFIX) {
            out.path = Some(p.trim().to_string());
        } else if let Some(a) = line.strip_prefix(ACTION_TAG) {
            flush(&mut out, &mut action, &mut obs);
            action = Some(a.trim().to_string());
        } else if let Some(o) = line.strip_prefix(OBSERVATION_TAG) {
            flush(&mut out, &mut action, &mut obs);
            obs = Some(o.trim().to_string());
        } else if line.starts_with(THOUGHT_TAG) {
            flush(&mut out, &mut action, &mut obs);
        } else if let Some(o) = obs.as_mut() {
            o.push('\n');
            o.push_str(line);
        }
    }
    flush(&mut out, &mut action, &mut obs);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExitValue {
    Leads { qualifier: String, to: String },
    Unknown(Option<String>),
    Nothing,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoomEntry {
    pub objects: Vec<String>,
    pub exits: IndexMap<String, ExitValue>,
}

impl RoomEntry {
    pub fn unknown_count(&self) -> usize {
        self.exits.values().filter(|v| matches!(v, ExitValue::Unknown(_))).count()
    }
}

/// Room graph and action names read from document text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DocView {
    pub rooms: IndexMap<String, RoomEntry>,
    pub rules: Vec<String>,
}

impl DocView {
    pub fn room(&self, name: &str) -> Option<(&String, &RoomEntry)> {
        self.rooms.iter().find(|(k, _)| k.eq_ignore_ascii_case(name))
    }
}

pub fn parse_exit(value: &str) -> ExitValue {
    let value = value.trim();
    match value {
        "Unknown" => ExitValue::Unknown(None),
        "Nothing" | "None" | "" => ExitValue::Nothing,
        _ => match value.rsplit_once(" to ") {
            Some((q, t)) if t.trim() == "Unknown" => ExitValue::Unknown(Some(q.trim().to_string())),
            Some((q, t)) => ExitValue::Leads {
                qualifier: q.trim().to_string(),
                to: t.trim().to_string(),
            },
            None => ExitValue::Unknown(Some(value.to_string())),
        },
    }
}

/// Reads the `#### Observations` and `#### Action Rules` sections of a
/// room document found anywhere in `text`.
pub fn parse_doc_view(text: &str) -> DocView {
    let mut out = DocView::default();
    let Some(start) = text.find("#### Observations") else {
        return out;
    };
    let mut in_rules = false;
    let mut current: Option<String> = None;
    for line in text[start..].lines() {
        let trimmed = line.trim();
        if trimmed.starts_with("####") {
            in_rules = trimmed.to_ascii_lowercase().contains("action rules");
            current = None;
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        let Some(item) = trimmed.strip_prefix("- ") else { continue };
        if in_rules {
            if indent == 0 {
                if let Some(a) = item.strip_prefix("action:") {
                    out.rules.push(a.trim().to_string());
                }
            }
            continue;
        }
        if indent == 0 {
            let name = item.trim_end_matches(':').trim().to_string();
            out.rooms.entry(name.clone()).or_default();
            current = Some(name);
        } else if let Some(room) = current.as_ref().and_then(|c| out.rooms.get_mut(c)) {
            let Some((slot, value)) = item.split_once(':') else { continue };
            let slot = slot.trim().to_ascii_lowercase();
            if slot == "objects" {
                let v = value.trim();
                if v != "Nothing" && v != "None" && !v.is_empty() {
                    room.objects = v.split(", ").map(|s| s.trim().to_string()).collect();
                }
            } else if DIRS.contains(&slot.as_str()) {
                room.exits.insert(slot, parse_exit(value));
            }
        }
    }
    out
}

/// Room named by a key result or summary that starts with
/// `Agent's location: X.`
pub fn location_in(text: &str) -> Option<&str> {
    let rest = text.strip_prefix("Agent's location: ")?;
    let end = rest.find('.')?;
    Some(rest[..end].trim())
}

/// Action templates listed under `#### Available Actions` in a background.
pub fn action_templates(background: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut inside = false;
    for line in background.lines() {
        let t = line.trim();
        if t.starts_with("####") {
            inside = t.to_ascii_lowercase().contains("available actions");
            continue;
        }
        if inside {
            if let Some(item) = t.strip_prefix("- ") {
                let template = item.split_once(": ").map(|(a, _)| a).unwrap_or(item);
                out.push(template.trim().to_string());
            }
        }
    }
    out
}

/// Whether an observation reports that the action did not work.
pub fn is_failure(observation: &str) -> bool {
    crate::explore::failure_reason(observation).is_some()
}
