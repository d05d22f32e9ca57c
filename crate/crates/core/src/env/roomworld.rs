use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    digest_hex, EdgeTruth, EnvCapabilities, EnvError, Environment, GroundTruth, ObjectTruth, Observation,
    RuleTruth, SnapshotId, TaskGoal, TaskSpec,
};

const ROOM_POOL: [&str; 18] = [
    "Livingroom", "Kitchen", "Bedroom", "Corridor", "Bathroom", "Backyard", "Garden", "Pantry", "Driveway",
    "Street", "Supermarket", "Shed", "Cellar", "Attic", "Study", "Laundry", "Garage", "Porch",
];

const DOOR_POOL: [&str; 24] = [
    "frosted-glass", "sliding patio", "fiberglass", "wooden", "screen", "front", "sliding", "barn", "metal",
    "oak", "plain", "iron", "glass", "red", "blue", "green", "white", "arched", "heavy", "narrow", "painted",
    "pine", "steel", "rustic",
];

const INGREDIENT_POOL: [&str; 10] = [
    "purple potato", "red onion", "orange bell pepper", "pork chop", "carrot", "yellow potato", "chicken wing",
    "tomato", "white tuna", "block of cheese",
];

const FURNITURE_POOL: [&str; 10] = [
    "sofa", "bed", "toilet", "patio chair", "workbench", "showcase", "wardrobe", "armchair", "bookshelf",
    "dresser",
];

const PORTABLE_POOL: [&str; 10] = [
    "flashlight", "umbrella", "toy car", "notebook", "teapot", "candle", "red apple", "hat", "blanket", "clock",
];

const DIRS: [&str; 4] = ["north", "east", "south", "west"];
const OFFSETS: [(i32, i32); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

fn opposite(d: usize) -> usize {
    (d + 2) % 4
}

fn parse_dir(word: &str) -> Option<usize> {
    match word {
        "north" | "n" => Some(0),
        "east" | "e" => Some(1),
        "south" | "s" => Some(2),
        "west" | "w" => Some(3),
        _ => None,
    }
}

/// How failed actions are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureStyle {
    /// Explicit, specific failure messages.
    #[default]
    TextWorld,
    /// Every failure is the bare `Nothing happens.`
    Alfworld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomParams {
    pub n_rooms: usize,
    pub n_objects: usize,
    pub door_density: f64,
    pub with_recipe: bool,
    pub failure_style: FailureStyle,
}

impl Default for RoomParams {
    fn default() -> Self {
        RoomParams {
            n_rooms: 8,
            n_objects: 12,
            door_density: 0.3,
            with_recipe: true,
            failure_style: FailureStyle::TextWorld,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
enum Cut {
    Slice,
    Dice,
    Chop,
}

impl Cut {
    fn verb(self) -> &'static str {
        match self {
            Cut::Slice => "slice",
            Cut::Dice => "dice",
            Cut::Chop => "chop",
        }
    }
    fn participle(self) -> &'static str {
        match self {
            Cut::Slice => "sliced",
            Cut::Dice => "diced",
            Cut::Chop => "chopped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
enum Cook {
    Grill,
    Fry,
    Roast,
}

impl Cook {
    fn verb(self) -> &'static str {
        match self {
            Cook::Grill => "grill",
            Cook::Fry => "fry",
            Cook::Roast => "roast",
        }
    }
    fn participle(self) -> &'static str {
        match self {
            Cook::Grill => "grilled",
            Cook::Fry => "fried",
            Cook::Roast => "roasted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum ItemKind {
    Furniture,
    Supporter,
    Tool(Cook),
    Portable,
    Ingredient,
    Knife,
    Cookbook,
}

impl ItemKind {
    fn portable(self) -> bool {
        matches!(self, ItemKind::Portable | ItemKind::Ingredient | ItemKind::Knife | ItemKind::Cookbook)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
enum Place {
    Room(usize),
    On(usize),
    Inventory,
    Gone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Item {
    name: String,
    kind: ItemKind,
    start: Place,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
enum Passage {
    Door(usize),
    Open(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Exit {
    to: usize,
    passage: Passage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Room {
    name: String,
    exits: [Option<Exit>; 4],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RecipeStep {
    item: usize,
    cut: Cut,
    cook: Cook,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layout {
    seed: u64,
    params: RoomParams,
    rooms: Vec<Room>,
    doors: Vec<String>,
    items: Vec<Item>,
    recipe: Vec<RecipeStep>,
    kitchen: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    room: usize,
    open: Vec<bool>,
    places: Vec<Place>,
    cut: Vec<Option<Cut>>,
    cooked: Vec<Option<Cook>>,
    meal: Place,
    eaten: bool,
    milestones: Vec<bool>,
    terminal: bool,
}

/// A deterministic text world of connected rooms, doors, objects and an
/// optional cooking recipe.
#[derive(Debug, Clone)]
pub struct RoomWorld {
    layout: Arc<Layout>,
    state: State,
    snapshots: HashMap<String, State>,
    next_snapshot: u64,
}

impl RoomWorld {
    /// Builds the instance for `seed`. The same seed and parameters always
    /// produce the same instance and ground truth.
    pub fn generate(seed: u64, params: RoomParams) -> Result<(RoomWorld, GroundTruth), EnvError> {
        let layout = build_layout(seed, params)?;
        let world = RoomWorld {
            state: initial_state(&layout),
            layout: Arc::new(layout),
            snapshots: HashMap::new(),
            next_snapshot: 0,
        };
        let truth = world.ground_truth();
        Ok((world, truth))
    }

    pub fn current_room(&self) -> &str {
        &self.layout.rooms[self.state.room].name
    }

    pub fn score(&self) -> i64 {
        self.state.milestones.iter().filter(|m| **m).count() as i64
    }

    pub fn is_terminal(&self) -> bool {
        self.state.terminal
    }

    /// Names of everything currently carried.
    pub fn inventory(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..self.layout.items.len())
            .filter(|i| self.state.places[*i] == Place::Inventory)
            .map(|i| self.display_name(i))
            .collect();
        if self.state.meal == Place::Inventory {
            out.push("meal".into());
        }
        out
    }

    fn ground_truth(&self) -> GroundTruth {
        let l = &self.layout;
        let locations = l.rooms.iter().map(|r| r.name.clone()).collect();
        let objects = l
            .items
            .iter()
            .map(|it| ObjectTruth {
                name: it.name.clone(),
                location: l.rooms[self.room_of_start(it.start)].name.clone(),
            })
            .collect();
        let mut edges = Vec::new();
        for room in &l.rooms {
            for (d, exit) in room.exits.iter().enumerate() {
                if let Some(exit) = exit {
                    edges.push(EdgeTruth {
                        from: room.name.clone(),
                        direction: DIRS[d].into(),
                        door: match &exit.passage {
                            Passage::Door(i) => Some(l.doors[*i].clone()),
                            Passage::Open(_) => None,
                        },
                        to: l.rooms[exit.to].name.clone(),
                    });
                }
            }
        }
        GroundTruth {
            locations,
            objects,
            edges,
            rules: rule_truth(l.recipe.is_empty()),
            tasks: self.tasks(),
        }
    }

    fn room_of_start(&self, place: Place) -> usize {
        match place {
            Place::Room(r) => r,
            Place::On(s) => self.room_of_start(self.layout.items[s].start),
            Place::Inventory | Place::Gone => self.state.room,
        }
    }

    fn tasks(&self) -> Vec<TaskSpec> {
        let l = &self.layout;
        let planner = AbstractPlanner::new(l);
        let mut tasks = Vec::new();
        if !l.recipe.is_empty() {
            if let Some(steps) = planner.meal_steps() {
                tasks.push(TaskSpec {
                    id: "eat-meal".into(),
                    goal: "Cook the meal described in the cookbook, then eat it.".into(),
                    check: TaskGoal::EatMeal,
                    optimal_steps: steps,
                });
            }
        }
        for (r, room) in l.rooms.iter().enumerate().skip(1) {
            if let Some(steps) = planner.reach_steps(r) {
                tasks.push(TaskSpec {
                    id: format!("reach-{}", slug(&room.name)),
                    goal: format!("Go to the {}.", room.name.to_lowercase()),
                    check: TaskGoal::Reach {
                        location: room.name.clone(),
                    },
                    optimal_steps: steps,
                });
            }
        }
        for (i, item) in l.items.iter().enumerate() {
            if !item.kind.portable() {
                continue;
            }
            if let Some(steps) = planner.reach_steps(self.room_of_start(item.start)) {
                tasks.push(TaskSpec {
                    id: format!("hold-{}", slug(&item.name)),
                    goal: format!("Find the {} and pick it up.", item.name),
                    check: TaskGoal::Hold {
                        object: l.items[i].name.clone(),
                    },
                    optimal_steps: steps + 1,
                });
            }
        }
        tasks
    }

    fn fail(&self, textworld: &str) -> Observation {
        match self.layout.params.failure_style {
            FailureStyle::TextWorld => Observation::new(textworld),
            FailureStyle::Alfworld => Observation::new("Nothing happens."),
        }
    }

    fn display_name(&self, i: usize) -> String {
        let mut name = String::new();
        if let Some(c) = self.state.cut[i] {
            name.push_str(c.participle());
            name.push(' ');
        }
        if let Some(c) = self.state.cooked[i] {
            name.push_str(c.participle());
            name.push(' ');
        }
        name.push_str(&self.layout.items[i].name);
        name
    }

    fn in_room(&self, i: usize) -> bool {
        match self.state.places[i] {
            Place::Room(r) => r == self.state.room,
            Place::On(s) => self.in_room(s),
            _ => false,
        }
    }

    fn visible(&self, i: usize) -> bool {
        self.state.places[i] == Place::Inventory || self.in_room(i)
    }

    /// Resolves a noun phrase against items satisfying `filter`: exact name
    /// first, then display name, then a unique trailing match.
    fn resolve(&self, phrase: &str, filter: impl Fn(usize) -> bool) -> Option<usize> {
        let phrase = phrase.trim().trim_start_matches("the ").trim();
        if phrase.is_empty() {
            return None;
        }
        let candidates: Vec<usize> = (0..self.layout.items.len()).filter(|i| filter(*i)).collect();
        let exact = |i: &&usize| {
            self.layout.items[**i].name.eq_ignore_ascii_case(phrase) || self.display_name(**i).eq_ignore_ascii_case(phrase)
        };
        if let Some(i) = candidates.iter().find(exact) {
            return Some(*i);
        }
        let stripped = phrase.trim_start_matches("raw ");
        let loose: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|i| {
                let name = self.layout.items[*i].name.to_lowercase();
                name == stripped || name.ends_with(&format!(" {stripped}"))
            })
            .collect();
        (loose.len() == 1).then(|| loose[0])
    }

    fn resolve_door(&self, phrase: &str) -> Option<(usize, usize)> {
        let phrase = phrase.trim().trim_start_matches("the ").trim();
        let room = &self.layout.rooms[self.state.room];
        let matches: Vec<(usize, usize)> = room
            .exits
            .iter()
            .enumerate()
            .filter_map(|(d, e)| match e.as_ref()?.passage {
                Passage::Door(i) => Some((d, i)),
                Passage::Open(_) => None,
            })
            .filter(|(_, i)| {
                let name = &self.layout.doors[*i];
                name == phrase || (phrase == "door") || name.starts_with(&format!("{phrase} "))
            })
            .collect();
        (matches.len() == 1).then(|| matches[0])
    }

    fn describe(&self, arriving: bool) -> String {
        let l = &self.layout;
        let room = &l.rooms[self.state.room];
        let lower = room.name.to_lowercase();
        let mut out = format!("-= {} =-\n", room.name);
        if arriving {
            out.push_str(&format!("You arrive in the {lower}.\n"));
        } else {
            out.push_str(&format!("You are in the {lower}.\n"));
        }
        let objects: Vec<String> = (0..l.items.len())
            .filter(|i| self.in_room(*i))
            .map(|i| match self.state.places[i] {
                Place::On(s) => format!("{} (on {})", self.display_name(i), l.items[s].name),
                _ => self.display_name(i),
            })
            .chain((self.state.meal == Place::Room(self.state.room)).then(|| "meal".to_string()))
            .collect();
        if objects.is_empty() {
            out.push_str("Objects: nothing\n");
        } else {
            out.push_str(&format!("Objects: {}\n", objects.join(", ")));
        }
        let exits: Vec<String> = room
            .exits
            .iter()
            .enumerate()
            .filter_map(|(d, e)| {
                let e = e.as_ref()?;
                Some(match &e.passage {
                    Passage::Door(i) => {
                        let state = if self.state.open[*i] { "open" } else { "closed" };
                        format!("{}: {state} {}", DIRS[d], l.doors[*i])
                    }
                    Passage::Open(kind) => format!("{}: {kind} (without door)", DIRS[d]),
                })
            })
            .collect();
        if exits.is_empty() {
            out.push_str("Exits: none");
        } else {
            out.push_str(&format!("Exits: {}", exits.join("; ")));
        }
        out
    }

    fn intro(&self) -> &'static str {
        if self.layout.recipe.is_empty() {
            "Welcome! Look around and find your way through the house."
        } else {
            "You are hungry! The cookbook in the kitchen holds the recipe. Cook the meal and eat it."
        }
    }

    fn milestone(&mut self, key: usize) -> i64 {
        if self.state.milestones[key] {
            0
        } else {
            self.state.milestones[key] = true;
            1
        }
    }

    fn recipe_index(&self, item: usize) -> Option<usize> {
        self.layout.recipe.iter().position(|s| s.item == item)
    }

    fn cookbook_text(&self) -> String {
        let l = &self.layout;
        let mut out = String::from("You open the cookbook and start reading:\n\nRecipe #1\n---------\nIngredients:\n");
        for s in &l.recipe {
            out.push_str(&l.items[s.item].name);
            out.push('\n');
        }
        out.push_str("\nDirections:\n");
        for s in &l.recipe {
            let name = &l.items[s.item].name;
            out.push_str(&format!("{} the {name}\n{} the {name}\n", s.cut.verb(), s.cook.verb()));
        }
        out.push_str("prepare meal");
        out
    }

    fn apply(&mut self, raw: &str) -> Observation {
        let action = raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let words: Vec<&str> = action.split(' ').collect();
        let verb = words.first().copied().unwrap_or("");
        let rest = action.get(verb.len()..).unwrap_or("").trim();

        if let Some(d) = parse_dir(&action) {
            return self.go(d);
        }
        match verb {
            "" => self.fail("I beg your pardon?"),
            "look" | "l" if rest.is_empty() => Observation::new(self.describe(false)),
            "look" | "examine" | "x" => self.examine(rest),
            "inventory" | "i" if rest.is_empty() => {
                let inv = self.inventory();
                if inv.is_empty() {
                    Observation::new("You are carrying nothing.")
                } else {
                    let listed: Vec<String> = inv.iter().map(|n| format!("a {n}")).collect();
                    Observation::new(format!("You are carrying: {}.", listed.join(", ")))
                }
            }
            "go" => match parse_dir(rest) {
                Some(d) => self.go(d),
                None => self.fail("You can't go that way."),
            },
            "open" | "close" => self.open_close(verb == "open", rest),
            "take" | "get" => self.take(rest),
            "drop" => self.drop(rest),
            "put" => self.put(rest),
            "insert" => self.fail("You can't insert things into that."),
            "lock" | "unlock" => self.fail("You can't do that; no door here is locked."),
            "slice" | "dice" | "chop" => self.cut(verb, rest),
            "cook" => self.cook(rest),
            "prepare" if rest == "meal" => self.prepare(),
            "eat" => self.eat(rest),
            _ => self.fail("That's not a verb I recognise."),
        }
    }

    fn go(&mut self, d: usize) -> Observation {
        let room = &self.layout.rooms[self.state.room];
        let Some(exit) = room.exits[d].clone() else {
            return self.fail("You can't go that way.");
        };
        if let Passage::Door(i) = exit.passage {
            if !self.state.open[i] {
                let name = self.layout.doors[i].clone();
                return self.fail(&format!("You have to open the {name} first."));
            }
        }
        self.state.room = exit.to;
        Observation::new(self.describe(true))
    }

    fn examine(&mut self, phrase: &str) -> Observation {
        if let Some(i) = self.resolve(phrase, |i| self.visible(i)) {
            let item = &self.layout.items[i];
            let text = match item.kind {
                ItemKind::Cookbook => self.cookbook_text(),
                ItemKind::Knife => "The knife is sharp.".to_string(),
                ItemKind::Tool(c) => format!("The {} is used to {} food.", item.name, c.verb()),
                ItemKind::Supporter => {
                    let on: Vec<String> = (0..self.layout.items.len())
                        .filter(|j| self.state.places[*j] == Place::On(i))
                        .map(|j| format!("a {}", self.display_name(j)))
                        .collect();
                    if on.is_empty() {
                        format!("The {} is solidly built. There is nothing on it.", item.name)
                    } else {
                        format!("The {} is solidly built. On the {} you see {}.", item.name, item.name, on.join(", "))
                    }
                }
                _ => format!("The {} looks ordinary.", self.display_name(i)),
            };
            return Observation::new(text);
        }
        if phrase == "meal" && matches!(self.state.meal, Place::Inventory) {
            return Observation::new("The meal looks delicious.");
        }
        if let Some((_, door)) = self.resolve_door(phrase) {
            let state = if self.state.open[door] { "open" } else { "closed" };
            return Observation::new(format!("The {} is {state}.", self.layout.doors[door]));
        }
        self.fail("You can't see any such thing.")
    }

    fn open_close(&mut self, open: bool, phrase: &str) -> Observation {
        if let Some((_, door)) = self.resolve_door(phrase) {
            let name = self.layout.doors[door].clone();
            if self.state.open[door] == open {
                let state = if open { "open" } else { "closed" };
                return self.fail(&format!("You can't; the {name} is already {state}."));
            }
            self.state.open[door] = open;
            let verb = if open { "open" } else { "close" };
            return Observation::new(format!("You {verb} the {name}."));
        }
        if self.resolve(phrase, |i| self.visible(i)).is_some() {
            return self.fail("You can't open or close that.");
        }
        self.fail("You can't see any such thing.")
    }

    fn take(&mut self, phrase: &str) -> Observation {
        let (object, source) = match phrase.split_once(" from ") {
            Some((o, s)) => (o, Some(s)),
            None => (phrase, None),
        };
        let source_idx = match source {
            Some(s) => match self.resolve(s, |i| self.in_room(i)) {
                Some(i) => Some(i),
                None => return self.fail("You can't see any such thing."),
            },
            None => None,
        };
        if object.trim() == "meal" && self.state.meal == Place::Room(self.state.room) {
            self.state.meal = Place::Inventory;
            return Observation::new("You take the meal.");
        }
        let Some(i) = self.resolve(object, |i| self.visible(i)) else {
            return self.fail("You can't see any such thing.");
        };
        if self.state.places[i] == Place::Inventory {
            return self.fail("You already have that.");
        }
        if !self.layout.items[i].kind.portable() {
            return self.fail("You can't take that.");
        }
        let place = self.state.places[i];
        if let Some(s) = source_idx {
            if place != Place::On(s) {
                let name = self.layout.items[s].name.clone();
                return self.fail(&format!("You can't see that on the {name}."));
            }
        }
        self.state.places[i] = Place::Inventory;
        let name = self.display_name(i);
        let mut obs = match place {
            Place::On(s) => Observation::new(format!("You take the {name} from the {}.", self.layout.items[s].name)),
            _ => Observation::new(format!("You take the {name}.")),
        };
        if let Some(k) = self.recipe_index(i) {
            obs.score_delta += self.milestone(k * 3);
        }
        obs
    }

    fn drop(&mut self, phrase: &str) -> Observation {
        if phrase == "meal" && self.state.meal == Place::Inventory {
            self.state.meal = Place::Room(self.state.room);
            return Observation::new("You drop the meal.");
        }
        let Some(i) = self.resolve(phrase, |i| self.state.places[i] == Place::Inventory) else {
            return self.fail("You don't have that.");
        };
        self.state.places[i] = Place::Room(self.state.room);
        Observation::new(format!("You drop the {}.", self.display_name(i)))
    }

    fn put(&mut self, phrase: &str) -> Observation {
        let Some((object, target)) = phrase.split_once(" on ") else {
            return self.fail("You can't put things there.");
        };
        let Some(i) = self.resolve(object, |i| self.state.places[i] == Place::Inventory) else {
            return self.fail("You don't have that.");
        };
        let Some(s) = self.resolve(target, |j| self.in_room(j)) else {
            return self.fail("You can't see any such thing.");
        };
        if self.layout.items[s].kind != ItemKind::Supporter {
            return self.fail("You can't put things on that.");
        }
        self.state.places[i] = Place::On(s);
        Observation::new(format!(
            "You put the {} on the {}.",
            self.display_name(i),
            self.layout.items[s].name
        ))
    }

    fn cut(&mut self, verb: &str, phrase: &str) -> Observation {
        let Some((object, tool)) = phrase.split_once(" with ") else {
            return self.fail(&format!("You can't {verb} that without a tool."));
        };
        let Some(i) = self.resolve(object, |i| self.state.places[i] == Place::Inventory) else {
            return self.fail("You need to take that first.");
        };
        let knife = self.resolve(tool, |j| self.state.places[j] == Place::Inventory);
        if !knife.is_some_and(|k| self.layout.items[k].kind == ItemKind::Knife) {
            return self.fail("You need to take the knife first.");
        }
        if self.layout.items[i].kind != ItemKind::Ingredient {
            return self.fail("You can't cut that.");
        }
        if self.state.cut[i].is_some() || self.state.cooked[i].is_some() {
            return self.fail("You can't cut that any further.");
        }
        let cut = match verb {
            "slice" => Cut::Slice,
            "dice" => Cut::Dice,
            _ => Cut::Chop,
        };
        self.state.cut[i] = Some(cut);
        let mut obs = Observation::new(format!("You {verb} the {}.", self.layout.items[i].name));
        if let Some(k) = self.recipe_index(i) {
            if self.layout.recipe[k].cut == cut {
                obs.score_delta += self.milestone(k * 3 + 1);
            }
        }
        obs
    }

    fn cook(&mut self, phrase: &str) -> Observation {
        let Some((object, tool)) = phrase.split_once(" with ") else {
            return self.fail("You can't cook that without a cooking tool.");
        };
        let Some(i) = self.resolve(object, |i| self.state.places[i] == Place::Inventory) else {
            return self.fail("You need to take that first.");
        };
        let Some(t) = self.resolve(tool, |j| self.in_room(j)) else {
            return self.fail("You can't see any such thing.");
        };
        let ItemKind::Tool(method) = self.layout.items[t].kind else {
            return self.fail("You can't cook with that.");
        };
        if self.layout.items[i].kind != ItemKind::Ingredient {
            return self.fail("You can't cook that.");
        }
        if self.state.cooked[i].is_some() {
            return self.fail("You can't cook that any further.");
        }
        self.state.cooked[i] = Some(method);
        let mut obs = Observation::new(format!(
            "You {} the {} with the {}.",
            method.verb(),
            self.layout.items[i].name,
            self.layout.items[t].name
        ));
        if let Some(k) = self.recipe_index(i) {
            let step = &self.layout.recipe[k];
            if step.cook == method && self.state.cut[i] == Some(step.cut) {
                obs.score_delta += self.milestone(k * 3 + 2);
            }
        }
        obs
    }

    fn prepare(&mut self) -> Observation {
        if self.layout.recipe.is_empty() || Some(self.state.room) != self.layout.kitchen {
            return self.fail("You can't prepare a meal here.");
        }
        if self.state.meal != Place::Gone || self.state.eaten {
            return self.fail("You can't; the meal is already prepared.");
        }
        let ready = self.layout.recipe.iter().all(|s| {
            self.state.places[s.item] == Place::Inventory
                && self.state.cut[s.item] == Some(s.cut)
                && self.state.cooked[s.item] == Some(s.cook)
        });
        if !ready {
            return self.fail("You still miss something.");
        }
        for s in &self.layout.recipe {
            self.state.places[s.item] = Place::Gone;
        }
        self.state.meal = Place::Inventory;
        let mut obs = Observation::new("You prepare the meal. Adding the meal to your inventory.");
        let k = self.layout.recipe.len() * 3;
        obs.score_delta += self.milestone(k);
        obs
    }

    fn eat(&mut self, phrase: &str) -> Observation {
        if phrase == "meal" {
            if self.state.meal != Place::Inventory {
                return self.fail("You don't have a meal.");
            }
            self.state.meal = Place::Gone;
            self.state.eaten = true;
            self.state.terminal = true;
            let k = self.layout.recipe.len() * 3 + 1;
            let mut obs = Observation::new("You eat the meal. Delicious!\n\n*** The End ***");
            obs.score_delta += self.milestone(k);
            obs.terminal = true;
            return obs;
        }
        let Some(i) = self.resolve(phrase, |i| self.state.places[i] == Place::Inventory) else {
            return self.fail("You don't have that.");
        };
        if self.layout.items[i].kind != ItemKind::Ingredient && self.layout.items[i].name != "red apple" {
            return self.fail("You can't eat that.");
        }
        self.state.places[i] = Place::Gone;
        Observation::new(format!("You eat the {}. Not bad.", self.display_name(i)))
    }
}

fn slug(name: &str) -> String {
    name.to_lowercase().replace(' ', "-")
}

fn initial_state(l: &Layout) -> State {
    State {
        room: 0,
        open: vec![false; l.doors.len()],
        places: l.items.iter().map(|i| i.start).collect(),
        cut: vec![None; l.items.len()],
        cooked: vec![None; l.items.len()],
        meal: Place::Gone,
        eaten: false,
        milestones: vec![false; l.recipe.len() * 3 + 2],
        terminal: false,
    }
}

fn rule_truth(no_recipe: bool) -> Vec<RuleTruth> {
    let mut rules = vec![
        ("go [direction]", "an exit or an open door in that direction", "arrive|location"),
        ("[direction]", "an exit or an open door in that direction", "arrive|location"),
        ("look", "none", "location|you are in"),
        ("inventory", "none", "carrying"),
        ("examine ...", "the object is visible", "recipe|ingredient|sharp|built|used to|looks|is open|is closed"),
        ("look ...", "the object is visible", "recipe|ingredient|sharp|built|used to|looks|is open|is closed"),
        ("open ...", "a closed door in the current room", "open"),
        ("close ...", "an open door in the current room", "close"),
        ("take ...", "a portable object in the current room", "take|carry|inventory"),
        ("take ... from ...", "the object is on that supporter", "take|carry|inventory"),
        ("drop ...", "the object is carried", "drop"),
        ("put ... on ...", "the object is carried and the supporter is here", "put|place"),
    ];
    if !no_recipe {
        rules.extend([
            ("slice ... with ...", "the ingredient and the knife are carried", "slice"),
            ("dice ... with ...", "the ingredient and the knife are carried", "dice"),
            ("chop ... with ...", "the ingredient and the knife are carried", "chop"),
            ("cook ... with ...", "the ingredient is carried and the cooking tool is here", "grill|fry|roast|cook"),
            ("prepare meal", "in the kitchen with every processed ingredient", "meal"),
            ("eat ...", "the food is carried", "eat"),
        ]);
    }
    rules
        .into_iter()
        .map(|(a, r, k)| RuleTruth {
            action_pattern: a.into(),
            requirements: r.into(),
            key_effect: k.into(),
        })
        .collect()
}

fn build_layout(seed: u64, params: RoomParams) -> Result<Layout, EnvError> {
    if params.n_rooms < 2 || params.n_rooms > 16 {
        return Err(EnvError::InvalidParams(format!("n_rooms must be in 2..=16, got {}", params.n_rooms)));
    }
    if !(0.0..=1.0).contains(&params.door_density) {
        return Err(EnvError::InvalidParams("door_density must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut names: Vec<&str> = ROOM_POOL.iter().copied().filter(|n| *n != "Kitchen").collect();
    names.shuffle(&mut rng);
    names.truncate(params.n_rooms);
    if params.with_recipe {
        let at = rng.gen_range(1..params.n_rooms);
        names[at] = "Kitchen";
    }

    // random growth on a grid keeps directions geometrically consistent
    let mut cells: BTreeMap<(i32, i32), usize> = BTreeMap::new();
    let mut pos: Vec<(i32, i32)> = vec![(0, 0)];
    cells.insert((0, 0), 0);
    let mut links: Vec<(usize, usize, usize)> = Vec::new();
    for i in 1..params.n_rooms {
        loop {
            let j = rng.gen_range(0..i);
            let d = rng.gen_range(0..4);
            let cell = (pos[j].0 + OFFSETS[d].0, pos[j].1 + OFFSETS[d].1);
            if let std::collections::btree_map::Entry::Vacant(e) = cells.entry(cell) {
                e.insert(i);
                pos.push(cell);
                links.push((j, d, i));
                break;
            }
        }
    }
    for i in 0..params.n_rooms {
        for d in [1usize, 2] {
            let cell = (pos[i].0 + OFFSETS[d].0, pos[i].1 + OFFSETS[d].1);
            if let Some(&j) = cells.get(&cell) {
                let linked = links.iter().any(|&(a, _, b)| (a == i && b == j) || (a == j && b == i));
                if !linked && rng.gen_bool(0.25) {
                    links.push((i, d, j));
                }
            }
        }
    }

    let mut door_names: Vec<&str> = DOOR_POOL.to_vec();
    door_names.shuffle(&mut rng);
    let mut rooms: Vec<Room> = names
        .iter()
        .map(|n| Room {
            name: n.to_string(),
            exits: Default::default(),
        })
        .collect();
    let mut doors = Vec::new();
    for &(a, d, b) in &links {
        let passage = if rng.gen_bool(params.door_density) && doors.len() < door_names.len() {
            doors.push(format!("{} door", door_names[doors.len()]));
            Passage::Door(doors.len() - 1)
        } else if rng.gen_bool(0.5) {
            Passage::Open("exit".into())
        } else {
            Passage::Open("entranceway".into())
        };
        rooms[a].exits[d] = Some(Exit {
            to: b,
            passage: passage.clone(),
        });
        rooms[b].exits[opposite(d)] = Some(Exit { to: a, passage });
    }

    let kitchen = rooms.iter().position(|r| r.name == "Kitchen");
    let mut items: Vec<Item> = Vec::new();
    let mut recipe = Vec::new();
    let push = |items: &mut Vec<Item>, name: &str, kind: ItemKind, start: Place| {
        items.push(Item {
            name: name.into(),
            kind,
            start,
        });
        items.len() - 1
    };

    if params.with_recipe {
        let k = kitchen.expect("kitchen placed");
        let n_ingredients = rng.gen_range(2..=3);
        let required = 7 + n_ingredients;
        if params.n_objects < required {
            return Err(EnvError::InvalidParams(format!(
                "a recipe instance needs at least {required} objects, got {}",
                params.n_objects
            )));
        }
        let table = push(&mut items, "table", ItemKind::Supporter, Place::Room(k));
        push(&mut items, "cookbook", ItemKind::Cookbook, Place::On(table));
        let counter = push(&mut items, "counter", ItemKind::Supporter, Place::Room(k));
        push(&mut items, "knife", ItemKind::Knife, Place::On(counter));
        push(&mut items, "stove", ItemKind::Tool(Cook::Fry), Place::Room(k));
        push(&mut items, "oven", ItemKind::Tool(Cook::Roast), Place::Room(k));
        let bbq_room = rooms.iter().position(|r| r.name == "Backyard").unwrap_or_else(|| {
            let others: Vec<usize> = (0..rooms.len()).filter(|r| *r != k).collect();
            others[rng.gen_range(0..others.len())]
        });
        push(&mut items, "BBQ", ItemKind::Tool(Cook::Grill), Place::Room(bbq_room));

        let mut pool = INGREDIENT_POOL.to_vec();
        pool.shuffle(&mut rng);
        for name in pool.into_iter().take(n_ingredients) {
            let room = rng.gen_range(0..rooms.len());
            let place = if room == k && rng.gen_bool(0.5) {
                Place::On(counter)
            } else {
                Place::Room(room)
            };
            let item = push(&mut items, name, ItemKind::Ingredient, place);
            let cut = [Cut::Slice, Cut::Dice, Cut::Chop][rng.gen_range(0..3)];
            let cook = [Cook::Grill, Cook::Fry, Cook::Roast][rng.gen_range(0..3)];
            recipe.push(RecipeStep { item, cut, cook });
        }
    }

    let mut furniture = FURNITURE_POOL.to_vec();
    furniture.shuffle(&mut rng);
    let mut portable = PORTABLE_POOL.to_vec();
    portable.shuffle(&mut rng);
    let mut supporters_by_room: HashMap<usize, Vec<usize>> = HashMap::new();
    while items.len() < params.n_objects {
        let room = rng.gen_range(0..rooms.len());
        let want_furniture = rng.gen_bool(0.5);
        if want_furniture && !furniture.is_empty() {
            let name = furniture.pop().unwrap();
            let kind = if matches!(name, "workbench" | "showcase" | "bookshelf" | "dresser") {
                ItemKind::Supporter
            } else {
                ItemKind::Furniture
            };
            let idx = push(&mut items, name, kind, Place::Room(room));
            if kind == ItemKind::Supporter {
                supporters_by_room.entry(room).or_default().push(idx);
            }
        } else if let Some(name) = portable.pop() {
            let place = match supporters_by_room.get(&room) {
                Some(s) if rng.gen_bool(0.5) => Place::On(s[0]),
                _ => Place::Room(room),
            };
            push(&mut items, name, ItemKind::Portable, place);
        } else if let Some(name) = furniture.pop() {
            push(&mut items, name, ItemKind::Furniture, Place::Room(room));
        } else {
            return Err(EnvError::InvalidParams(format!(
                "n_objects {} exceeds the object pool",
                params.n_objects
            )));
        }
    }

    Ok(Layout {
        seed,
        params,
        rooms,
        doors,
        items,
        recipe,
        kitchen,
    })
}

/// Shortest plans over an abstract state: room, open doors and recipe
/// progress bits. Only goal-relevant actions are expanded.
struct AbstractPlanner<'a> {
    layout: &'a Layout,
    item_room: Vec<usize>,
}

const PREPARED: u32 = 1 << 30;
const KNIFE: u32 = 1 << 29;

impl<'a> AbstractPlanner<'a> {
    fn new(layout: &'a Layout) -> Self {
        fn room_of(l: &Layout, p: Place) -> usize {
            match p {
                Place::Room(r) => r,
                Place::On(s) => room_of(l, l.items[s].start),
                _ => 0,
            }
        }
        let item_room = layout.items.iter().map(|i| room_of(layout, i.start)).collect();
        AbstractPlanner { layout, item_room }
    }

    fn moves(&self, room: usize, open: u64) -> Vec<(usize, u64)> {
        let mut out = Vec::new();
        for exit in self.layout.rooms[room].exits.iter().flatten() {
            match exit.passage {
                Passage::Door(i) if open & (1 << i) == 0 => out.push((room, open | (1 << i))),
                _ => out.push((exit.to, open)),
            }
        }
        out
    }

    fn reach_steps(&self, target: usize) -> Option<u32> {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([(0usize, 0u64, 0u32)]);
        seen.insert((0usize, 0u64));
        while let Some((room, open, dist)) = queue.pop_front() {
            if room == target {
                return Some(dist);
            }
            for next in self.moves(room, open) {
                if seen.insert(next) {
                    queue.push_back((next.0, next.1, dist + 1));
                }
            }
        }
        None
    }

    fn meal_steps(&self) -> Option<u32> {
        let l = self.layout;
        let knife = l.items.iter().position(|i| i.kind == ItemKind::Knife)?;
        let kitchen = l.kitchen?;
        let n = l.recipe.len();
        // per ingredient k: bit 3k taken, 3k+1 cut, 3k+2 cooked
        let all_cooked: u32 = (0..n).map(|k| 1u32 << (3 * k + 2)).sum();
        let mut seen: HashSet<(usize, u64, u32)> = HashSet::new();
        let mut queue = VecDeque::from([(0usize, 0u64, 0u32, 0u32)]);
        seen.insert((0, 0, 0));
        while let Some((room, open, prog, dist)) = queue.pop_front() {
            let mut next: Vec<(usize, u64, u32)> = Vec::new();
            if prog & PREPARED != 0 {
                return Some(dist + 1);
            }
            for (r, o) in self.moves(room, open) {
                next.push((r, o, prog));
            }
            if prog & KNIFE == 0 && self.item_room[knife] == room {
                next.push((room, open, prog | KNIFE));
            }
            for (k, step) in l.recipe.iter().enumerate() {
                let taken = 1 << (3 * k);
                let cut = 1 << (3 * k + 1);
                let cooked = 1 << (3 * k + 2);
                if prog & taken == 0 {
                    if self.item_room[step.item] == room {
                        next.push((room, open, prog | taken));
                    }
                    continue;
                }
                if prog & cut == 0 {
                    if prog & KNIFE != 0 {
                        next.push((room, open, prog | cut));
                    }
                    continue;
                }
                if prog & cooked == 0 {
                    let tool_here = l.items.iter().enumerate().any(|(t, it)| {
                        it.kind == ItemKind::Tool(step.cook) && self.item_room[t] == room
                    });
                    if tool_here {
                        next.push((room, open, prog | cooked));
                    }
                }
            }
            if room == kitchen && prog & all_cooked == all_cooked {
                next.push((room, open, prog | PREPARED));
            }
            for s in next {
                if seen.insert(s) {
                    queue.push_back((s.0, s.1, s.2, dist + 1));
                }
            }
        }
        None
    }
}

impl Environment for RoomWorld {
    fn reset(&mut self) -> Result<Observation, EnvError> {
        self.state = initial_state(&self.layout);
        Ok(Observation::new(format!("{}\n{}", self.intro(), self.describe(false))))
    }

    fn step(&mut self, action: &str) -> Result<Observation, EnvError> {
        if self.state.terminal {
            return Err(EnvError::Terminal);
        }
        let mut obs = self.apply(action);
        if obs.score_delta > 0 {
            obs.text.push_str("\n\nYour score has just gone up by one point.");
        }
        Ok(obs)
    }

    fn snapshot(&mut self) -> Result<SnapshotId, EnvError> {
        let id = format!("rw-{}", self.next_snapshot);
        self.next_snapshot += 1;
        self.snapshots.insert(id.clone(), self.state.clone());
        Ok(SnapshotId(id))
    }

    fn restore(&mut self, id: &SnapshotId) -> Result<(), EnvError> {
        let state = self
            .snapshots
            .get(&id.0)
            .ok_or_else(|| EnvError::UnknownSnapshot(id.0.clone()))?;
        self.state = state.clone();
        Ok(())
    }

    fn capabilities(&self) -> EnvCapabilities {
        EnvCapabilities {
            snapshot_restore: true,
            deterministic: true,
            action_inventory: Some(action_inventory(!self.layout.recipe.is_empty())),
        }
    }

    fn fingerprint(&self) -> String {
        let def = serde_json::to_string(&*self.layout).expect("layout serializes");
        digest_hex(&["roomworld", &def])
    }

    fn background(&self) -> String {
        let mut out = String::from("#### Available Actions\n\n");
        for (template, help) in ACTION_HELP {
            if !self.layout.recipe.is_empty() || !RECIPE_VERBS.contains(&template) {
                out.push_str(&format!("- {template}: {help}\n"));
            }
        }
        out.push_str(
            "\n#### Tips\n\n\
             - Doors are never locked; open a door before walking through it.\n\
             - Arriving in a room lists its objects and exits.\n",
        );
        if !self.layout.recipe.is_empty() {
            out.push_str(
                "- The cookbook in the kitchen lists the ingredients and how to process and cook each one.\n\
                 - Cutting needs the knife and the ingredient in the inventory; cut before cooking.\n\
                 - The BBQ grills, the stove fries and the oven roasts; the tool must be in the room.\n\
                 - Prepare the meal in the kitchen, then eat it.\n",
            );
        }
        if self.layout.params.failure_style == FailureStyle::Alfworld {
            out.push_str("- A failed action only reports `Nothing happens.`\n");
        }
        out
    }

    fn goal_reached(&self, goal: &TaskGoal) -> bool {
        match goal {
            TaskGoal::Reach { location } => self.current_room().eq_ignore_ascii_case(location),
            TaskGoal::Hold { object } => self
                .layout
                .items
                .iter()
                .enumerate()
                .any(|(i, it)| it.name.eq_ignore_ascii_case(object) && self.state.places[i] == Place::Inventory),
            TaskGoal::EatMeal => self.state.eaten,
            TaskGoal::Collect { .. } => false,
        }
    }
}

const RECIPE_VERBS: [&str; 5] = ["slice/dice/chop ... with knife", "cook ... with ...", "prepare meal", "eat meal", "eat ..."];

const ACTION_HELP: [(&str, &str); 16] = [
    ("look", "describe the current room"),
    ("inventory", "list what you carry"),
    ("go ...", "move north, east, south or west"),
    ("examine ...", "look closely at something"),
    ("open ...", "open a door"),
    ("close ...", "close a door"),
    ("take ...", "pick up an object"),
    ("take ... from ...", "pick up an object from a supporter"),
    ("drop ...", "drop a carried object"),
    ("put ... on ...", "place a carried object on a supporter"),
    ("insert ... into ...", "place an object into a container"),
    ("unlock ... with ...", "unlock a door with a key"),
    ("slice/dice/chop ... with knife", "cut a carried ingredient"),
    ("cook ... with ...", "grill, fry or roast a carried ingredient"),
    ("prepare meal", "combine the processed ingredients; kitchen only"),
    ("eat meal", "eat the prepared meal"),
];

fn action_inventory(with_recipe: bool) -> Vec<String> {
    ACTION_HELP
        .iter()
        .map(|(t, _)| *t)
        .filter(|t| with_recipe || !RECIPE_VERBS.contains(t))
        .map(String::from)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(seed: u64) -> (RoomWorld, GroundTruth) {
        RoomWorld::generate(seed, RoomParams::default()).unwrap()
    }

    #[test]
    fn same_seed_same_fingerprint() {
        let (a, ta) = world(1);
        let (b, tb) = world(1);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(ta, tb);
        let (c, _) = world(2);
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn recipe_instance_has_one_cookbook_and_one_winning_task() {
        for seed in 1..=10 {
            let (_, truth) = world(seed);
            assert_eq!(truth.objects.iter().filter(|o| o.name == "cookbook").count(), 1);
            assert_eq!(truth.tasks.iter().filter(|t| t.check == TaskGoal::EatMeal).count(), 1);
            assert_eq!(truth.locations.len(), 8);
            assert_eq!(truth.objects.len(), 12);
        }
    }

    #[test]
    fn failures_are_observations() {
        let (mut w, _) = world(3);
        w.reset().unwrap();
        for a in ["open front gate", "", "xyzzy", "take", "go up", "put on", "cook with", "eat meal"] {
            let obs = w.step(a).unwrap();
            assert!(!obs.text.is_empty());
            assert!(!obs.terminal);
        }
    }

    #[test]
    fn alfworld_failures_are_bare() {
        let params = RoomParams {
            failure_style: FailureStyle::Alfworld,
            ..RoomParams::default()
        };
        let (mut w, _) = RoomWorld::generate(1, params).unwrap();
        w.reset().unwrap();
        assert_eq!(w.step("fly away").unwrap().text, "Nothing happens.");
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = RoomParams {
            n_rooms: 1,
            ..RoomParams::default()
        };
        assert!(matches!(RoomWorld::generate(1, bad), Err(EnvError::InvalidParams(_))));
        let few = RoomParams {
            n_objects: 3,
            ..RoomParams::default()
        };
        assert!(RoomWorld::generate(1, few).is_err());
    }
}
