//! Navigation policies for reach and pick-up tasks in room worlds.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use super::world::{
    bare_object, move_direction, opposite, parse_room_view, supporter_of, DocView, ExitValue, ParsedTrajectory,
    RoomView, DIRS,
};

/// Literal action that ends a sub-agent episode.
pub const FINISH: &str = "finish";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Goal {
    Reach(String),
    Hold(String),
}

/// Reads goals phrased like `Go to the kitchen.` or
/// `Find the red apple and pick it up.`
pub fn parse_goal(task: &str) -> Option<Goal> {
    let t = task.trim().trim_end_matches('.');
    if let Some(room) = t.strip_prefix("Go to the ") {
        return Some(Goal::Reach(room.trim().to_string()));
    }
    if let Some(rest) = t.strip_prefix("Find the ") {
        let object = rest.split(" and pick it up").next().unwrap_or(rest);
        return Some(Goal::Hold(object.trim().to_string()));
    }
    None
}

/// What the agent knows from its own steps.
struct Situation {
    view: Option<RoomView>,
    opened: HashSet<String>,
    holding: HashSet<String>,
    /// (room, direction) -> room, learned from moves.
    edges: BTreeMap<(String, String), String>,
    views: BTreeMap<String, RoomView>,
}

fn situation(traj: &ParsedTrajectory) -> Situation {
    let mut s = Situation {
        view: None,
        opened: HashSet::new(),
        holding: HashSet::new(),
        edges: BTreeMap::new(),
        views: BTreeMap::new(),
    };
    if let Some(v) = traj.initial.as_deref().and_then(parse_room_view) {
        s.views.insert(v.name.to_lowercase(), v.clone());
        s.view = Some(v);
    }
    for (action, obs) in &traj.steps {
        if let Some(v) = parse_room_view(obs) {
            if let (Some(d), Some(prev)) = (move_direction(action), s.view.as_ref()) {
                if !prev.name.eq_ignore_ascii_case(&v.name) {
                    s.edges.insert((prev.name.to_lowercase(), d.to_string()), v.name.clone());
                    s.edges
                        .insert((v.name.to_lowercase(), opposite(d).to_string()), prev.name.clone());
                }
            }
            s.opened.clear();
            s.views.insert(v.name.to_lowercase(), v.clone());
            s.view = Some(v);
            continue;
        }
        let first = obs.lines().next().unwrap_or("").trim();
        if let Some(door) = first.strip_prefix("You open the ").and_then(|d| d.strip_suffix('.')) {
            s.opened.insert(door.to_string());
        }
        if let Some(rest) = first.strip_prefix("You take the ") {
            let item = rest.split(" from the ").next().unwrap_or(rest).trim_end_matches('.');
            s.holding.insert(item.to_lowercase());
        }
    }
    s
}

impl Situation {
    /// Action that crosses the exit `dir` of the current room.
    fn cross(&self, dir: &str) -> String {
        if let Some(q) = self.view.as_ref().and_then(|v| v.exit(dir)) {
            if let Some(door) = q.strip_prefix("closed ") {
                if !self.opened.contains(door) {
                    return format!("open {door}");
                }
            }
        }
        format!("go {dir}")
    }

    fn holds(&self, object: &str) -> bool {
        self.holding.iter().any(|h| h.ends_with(&object.to_lowercase()))
    }

    fn take_here(&self, object: &str) -> Option<String> {
        let view = self.view.as_ref()?;
        let item = view
            .objects
            .iter()
            .find(|o| bare_object(o).eq_ignore_ascii_case(object))?;
        Some(match supporter_of(item) {
            Some(s) => format!("take {} from {s}", bare_object(item)),
            None => format!("take {}", bare_object(item)),
        })
    }
}

/// Cheapest first move from `from` to `to`, where crossing a passage costs 1
/// and a door costs 1 more. `exits` lists (direction, door?, target).
fn first_move(
    from: &str,
    to: &str,
    exits: impl Fn(&str) -> Vec<(String, bool, String)>,
) -> Option<String> {
    let mut best: BTreeMap<String, u32> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    best.insert(from.to_lowercase(), 0);
    heap.push(Reverse((0u32, from.to_lowercase(), None::<String>)));
    while let Some(Reverse((cost, room, first))) = heap.pop() {
        if room == to.to_lowercase() {
            return first;
        }
        if best.get(&room).is_some_and(|b| *b < cost) {
            continue;
        }
        for (dir, door, target) in exits(&room) {
            let next = cost + 1 + u32::from(door);
            let key = target.to_lowercase();
            if best.get(&key).is_none_or(|b| next < *b) {
                best.insert(key.clone(), next);
                heap.push(Reverse((next, key, Some(first.clone().unwrap_or(dir)))));
            }
        }
    }
    None
}

fn doc_exits(doc: &DocView, room: &str) -> Vec<(String, bool, String)> {
    let Some((_, entry)) = doc.room(room) else { return Vec::new() };
    entry
        .exits
        .iter()
        .filter_map(|(d, v)| match v {
            ExitValue::Leads { qualifier, to } => Some((d.clone(), qualifier.contains("door") && !qualifier.contains("without door"), to.clone())),
            _ => None,
        })
        .collect()
}

/// Next action for `task` using the room graph of `doc`. Returns `None` when
/// the document does not cover the task.
pub fn context_action(doc: &DocView, task: &str, traj: &ParsedTrajectory) -> Option<String> {
    let goal = parse_goal(task)?;
    let s = situation(traj);
    let Some(view) = s.view.as_ref() else {
        return Some("look".into());
    };
    let target_room = match &goal {
        Goal::Reach(room) => {
            if view.name.eq_ignore_ascii_case(room) {
                return Some(FINISH.into());
            }
            doc.room(room)?.0.clone()
        }
        Goal::Hold(object) => {
            if s.holds(object) {
                return Some(FINISH.into());
            }
            if let Some(take) = s.take_here(object) {
                return Some(take);
            }
            doc.rooms
                .iter()
                .find(|(_, e)| e.objects.iter().any(|o| bare_object(o).eq_ignore_ascii_case(object)))?
                .0
                .clone()
        }
    };
    let dir = first_move(&view.name, &target_room, |r| doc_exits(doc, r))?;
    Some(s.cross(&dir))
}

/// Next action for `task` from the agent's own observations only: walk known
/// passages towards a seen target, otherwise explore depth-first.
pub fn explore_action(task: &str, traj: &ParsedTrajectory) -> String {
    let s = situation(traj);
    let Some(view) = s.view.as_ref() else {
        return "look".into();
    };
    let goal = parse_goal(task);
    let target = match &goal {
        Some(Goal::Reach(room)) => {
            if view.name.eq_ignore_ascii_case(room) {
                return FINISH.into();
            }
            s.views.contains_key(&room.to_lowercase()).then(|| room.clone())
        }
        Some(Goal::Hold(object)) => {
            if s.holds(object) {
                return FINISH.into();
            }
            if let Some(take) = s.take_here(object) {
                return take;
            }
            s.views
                .values()
                .find(|v| v.objects.iter().any(|o| bare_object(o).eq_ignore_ascii_case(object)))
                .map(|v| v.name.clone())
        }
        None => None,
    };
    let known = |room: &str| -> Vec<(String, bool, String)> {
        DIRS.iter()
            .filter_map(|d| {
                let to = s.edges.get(&(room.to_lowercase(), d.to_string()))?;
                Some((d.to_string(), false, to.clone()))
            })
            .collect()
    };
    if let Some(t) = target {
        if let Some(dir) = first_move(&view.name, &t, known) {
            return s.cross(&dir);
        }
    }
    let untried = |v: &RoomView| -> Option<String> {
        v.exits
            .iter()
            .map(|(d, _)| d.clone())
            .find(|d| !s.edges.contains_key(&(v.name.to_lowercase(), d.clone())))
    };
    if let Some(d) = untried(view) {
        return s.cross(&d);
    }
    // backtrack to the nearest room that still has an untried exit
    let frontier: Vec<&RoomView> = s.views.values().filter(|v| untried(v).is_some()).collect();
    let mut best: Option<(usize, String)> = None;
    for v in frontier {
        if let Some(dir) = first_move(&view.name, &v.name, known) {
            let hops = hops_between(&view.name, &v.name, &known);
            if best.as_ref().is_none_or(|(h, _)| hops < *h) {
                best = Some((hops, dir));
            }
        }
    }
    match best {
        Some((_, dir)) => s.cross(&dir),
        None => FINISH.into(),
    }
}

fn hops_between(from: &str, to: &str, exits: &impl Fn(&str) -> Vec<(String, bool, String)>) -> usize {
    let mut seen = HashSet::from([from.to_lowercase()]);
    let mut layer = vec![from.to_lowercase()];
    let mut hops = 0;
    while !layer.is_empty() {
        if layer.iter().any(|r| *r == to.to_lowercase()) {
            return hops;
        }
        let mut next = Vec::new();
        for r in &layer {
            for (_, _, t) in exits(r) {
                if seen.insert(t.to_lowercase()) {
                    next.push(t.to_lowercase());
                }
            }
        }
        layer = next;
        hops += 1;
    }
    usize::MAX
}
