use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    digest_hex, EnvCapabilities, EnvError, Environment, GroundTruth, ObjectTruth, Observation, RuleTruth,
    SnapshotId, TaskGoal, TaskSpec,
};
use crate::schema::ANY_LOCATION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
enum Cell {
    Grass,
    Tree,
    Stone,
    Water,
    Path,
    Table,
    Plant,
}

impl Cell {
    fn name(self) -> &'static str {
        match self {
            Cell::Grass => "grass",
            Cell::Tree => "tree",
            Cell::Stone => "stone",
            Cell::Water => "water",
            Cell::Path => "path",
            Cell::Table => "table",
            Cell::Plant => "plant",
        }
    }

    fn walkable(self) -> bool {
        matches!(self, Cell::Grass | Cell::Path)
    }

    fn from_char(c: char) -> Option<Cell> {
        Some(match c {
            '.' | '@' => Cell::Grass,
            'T' => Cell::Tree,
            'S' => Cell::Stone,
            '~' => Cell::Water,
            '_' => Cell::Path,
            '#' => Cell::Table,
            'p' => Cell::Plant,
            _ => return None,
        })
    }
}

const CELL_ORDER: [Cell; 7] = [
    Cell::Grass,
    Cell::Tree,
    Cell::Stone,
    Cell::Water,
    Cell::Path,
    Cell::Table,
    Cell::Plant,
];

const ITEMS: [&str; 7] = ["wood", "stone", "sapling", "wood_pickaxe", "wood_sword", "stone_pickaxe", "stone_sword"];
const DIRS: [(&str, i32, i32); 4] = [("north", 0, -1), ("east", 1, 0), ("south", 0, 1), ("west", -1, 0)];
const VIEW_RADIUS: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CraftParams {
    pub width: usize,
    pub height: usize,
    /// Share of cells holding a tree.
    pub trees: f64,
    /// Share of cells holding stone.
    pub stones: f64,
    pub water: f64,
}

impl Default for CraftParams {
    fn default() -> Self {
        CraftParams {
            width: 8,
            height: 8,
            trees: 0.12,
            stones: 0.1,
            water: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CraftState {
    grid: Vec<Cell>,
    pos: (i32, i32),
    facing: usize,
    inventory: [u32; 7],
}

/// A small deterministic crafting grid: collect wood and stone, place a
/// table, make tools.
#[derive(Debug, Clone)]
pub struct CraftWorld {
    width: i32,
    height: i32,
    start: CraftState,
    state: CraftState,
    snapshots: HashMap<String, CraftState>,
    next_snapshot: u64,
}

impl CraftWorld {
    pub fn generate(seed: u64, params: CraftParams) -> Result<(CraftWorld, GroundTruth), EnvError> {
        if !(3..=16).contains(&params.width) || !(3..=16).contains(&params.height) {
            return Err(EnvError::InvalidParams("grid sides must be in 3..=16".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (params.width as i32, params.height as i32);
        let agent = (w / 2, h / 2);
        let mut grid = vec![Cell::Grass; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                if (x - agent.0).abs() + (y - agent.1).abs() <= 1 {
                    continue;
                }
                let r: f64 = rng.gen();
                grid[(y * w + x) as usize] = if r < params.trees {
                    Cell::Tree
                } else if r < params.trees + params.stones {
                    Cell::Stone
                } else if r < params.trees + params.stones + params.water {
                    Cell::Water
                } else {
                    Cell::Grass
                };
            }
        }
        // guarantee the basic recipe chain is possible
        for needed in [Cell::Tree, Cell::Tree, Cell::Stone] {
            let have = grid.iter().filter(|c| **c == needed).count();
            let want = if needed == Cell::Tree { 2 } else { 1 };
            if have < want {
                loop {
                    let x = rng.gen_range(0..w);
                    let y = rng.gen_range(0..h);
                    if (x - agent.0).abs() + (y - agent.1).abs() > 1 && grid[(y * w + x) as usize] == Cell::Grass {
                        grid[(y * w + x) as usize] = needed;
                        break;
                    }
                }
            }
        }
        let world = CraftWorld::from_parts(w, h, grid, agent);
        let truth = world.ground_truth();
        Ok((world, truth))
    }

    /// Builds a fixed world from a character map: `.` grass, `T` tree,
    /// `S` stone, `~` water, `_` path, `#` table, `p` plant, `@` the agent
    /// (standing on grass).
    pub fn from_layout(map: &str) -> Result<CraftWorld, EnvError> {
        let rows: Vec<&str> = map.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let h = rows.len() as i32;
        let w = rows.first().map(|r| r.chars().count()).unwrap_or(0) as i32;
        if w == 0 || rows.iter().any(|r| r.chars().count() as i32 != w) {
            return Err(EnvError::InvalidParams("layout rows must be non-empty and equally long".into()));
        }
        let mut grid = Vec::new();
        let mut agent = None;
        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.chars().enumerate() {
                if c == '@' {
                    agent = Some((x as i32, y as i32));
                }
                grid.push(Cell::from_char(c).ok_or_else(|| EnvError::InvalidParams(format!("unknown cell '{c}'")))?);
            }
        }
        let agent = agent.ok_or_else(|| EnvError::InvalidParams("layout has no agent '@'".into()))?;
        Ok(CraftWorld::from_parts(w, h, grid, agent))
    }

    fn from_parts(width: i32, height: i32, grid: Vec<Cell>, pos: (i32, i32)) -> CraftWorld {
        let start = CraftState {
            grid,
            pos,
            facing: 2,
            inventory: [0; 7],
        };
        CraftWorld {
            width,
            height,
            state: start.clone(),
            start,
            snapshots: HashMap::new(),
            next_snapshot: 0,
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let mut present: Vec<&str> = Vec::new();
        for c in CELL_ORDER {
            if c != Cell::Path && self.start.grid.contains(&c) {
                present.push(c.name());
            }
        }
        let objects = present
            .iter()
            .map(|n| ObjectTruth {
                name: n.to_string(),
                location: ANY_LOCATION.into(),
            })
            .collect();
        let rules = [
            ("Move [direction]", "the target cell is grass or path", "move"),
            ("Move To [x, y]", "a clear straight path", "move"),
            ("Do", "an interactable cell in front", "wood|sapling|stone|collect|drink"),
            ("Place Table", "2 wood; grass in front", "table"),
            ("Place Stone", "1 stone; grass, path or water in front", "stone"),
            ("Place Plant", "1 sapling; grass in front", "plant|sapling"),
            ("Make Wood Pickaxe", "1 wood; next to a table", "wood_pickaxe|pickaxe"),
            ("Make Wood Sword", "1 wood; next to a table", "wood_sword|sword"),
            ("Make Stone Pickaxe", "1 wood and 1 stone; next to a table", "stone_pickaxe|pickaxe"),
            ("Make Stone Sword", "1 wood and 1 stone; next to a table", "stone_sword|sword"),
            ("Noop", "none", "nothing|wait"),
            ("Sleep", "none", "sleep"),
        ]
        .into_iter()
        .map(|(a, r, k)| RuleTruth {
            action_pattern: a.into(),
            requirements: r.into(),
            key_effect: k.into(),
        })
        .collect();
        let mut tasks = Vec::new();
        for (id, goal, item) in [
            ("collect-wood", "Collect 1 wood.", "wood"),
            ("make-wood-pickaxe", "Make a wood pickaxe.", "wood_pickaxe"),
            ("collect-stone", "Collect 1 stone.", "stone"),
        ] {
            let check = TaskGoal::Collect {
                item: item.into(),
                count: 1,
            };
            if let Some(steps) = self.optimal_steps(&check, 24) {
                tasks.push(TaskSpec {
                    id: id.into(),
                    goal: goal.into(),
                    check,
                    optimal_steps: steps,
                });
            }
        }
        GroundTruth {
            locations: Vec::new(),
            objects,
            edges: Vec::new(),
            rules,
            tasks,
        }
    }

    /// Breadth-first search over primitive actions from the start state.
    fn optimal_steps(&self, goal: &TaskGoal, max_depth: u32) -> Option<u32> {
        let actions = [
            "Move North",
            "Move East",
            "Move South",
            "Move West",
            "Do",
            "Place Table",
            "Make Wood Pickaxe",
        ];
        let mut probe = self.clone();
        let mut seen: HashSet<CraftState> = HashSet::new();
        let mut queue = VecDeque::from([(self.start.clone(), 0u32)]);
        seen.insert(self.start.clone());
        while let Some((state, depth)) = queue.pop_front() {
            probe.state = state.clone();
            if probe.goal_reached(goal) {
                return Some(depth);
            }
            if depth >= max_depth {
                continue;
            }
            for a in actions {
                probe.state = state.clone();
                probe.apply(a);
                if seen.insert(probe.state.clone()) {
                    queue.push_back((probe.state.clone(), depth + 1));
                }
            }
        }
        None
    }

    fn cell(&self, x: i32, y: i32) -> Option<Cell> {
        (x >= 0 && y >= 0 && x < self.width && y < self.height).then(|| self.state.grid[(y * self.width + x) as usize])
    }

    fn set(&mut self, x: i32, y: i32, c: Cell) {
        self.state.grid[(y * self.width + x) as usize] = c;
    }

    fn front(&self) -> (i32, i32) {
        let (_, dx, dy) = DIRS[self.state.facing];
        (self.state.pos.0 + dx, self.state.pos.1 + dy)
    }

    fn item(&self, name: &str) -> u32 {
        ITEMS.iter().position(|i| *i == name).map(|i| self.state.inventory[i]).unwrap_or(0)
    }

    fn add(&mut self, name: &str, delta: i32) {
        if let Some(i) = ITEMS.iter().position(|i| *i == name) {
            self.state.inventory[i] = (self.state.inventory[i] as i32 + delta).max(0) as u32;
        }
    }

    fn near_table(&self) -> bool {
        let (x, y) = self.state.pos;
        (-1..=1).any(|dx| (-1..=1).any(|dy| self.cell(x + dx, y + dy) == Some(Cell::Table)))
    }

    pub fn status(&self) -> String {
        let (x, y) = self.state.pos;
        let (fx, fy) = self.front();
        let front = self.cell(fx, fy).map(Cell::name).unwrap_or("edge of the world");
        let mut seen: BTreeMap<usize, &str> = BTreeMap::new();
        for dy in -VIEW_RADIUS..=VIEW_RADIUS {
            for dx in -VIEW_RADIUS..=VIEW_RADIUS {
                if let Some(c) = self.cell(x + dx, y + dy) {
                    let order = CELL_ORDER.iter().position(|o| *o == c).unwrap_or(0);
                    seen.insert(order, c.name());
                }
            }
        }
        let visible: Vec<&str> = seen.into_values().collect();
        let inventory: Vec<String> = ITEMS
            .iter()
            .zip(self.state.inventory)
            .filter(|(_, n)| *n > 0)
            .map(|(i, n)| format!("{i}: {n}"))
            .collect();
        format!(
            "Position: [{x}, {y}]\nFacing: {} ({front})\nCan see: {}\nInventory: {}",
            DIRS[self.state.facing].0,
            visible.join(", "),
            if inventory.is_empty() {
                "nothing".to_string()
            } else {
                inventory.join(", ")
            }
        )
    }

    fn apply(&mut self, raw: &str) -> String {
        let action = raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        if let Some(dir) = action.strip_prefix("move ") {
            if let Some(d) = DIRS.iter().position(|(n, _, _)| *n == dir) {
                self.state.facing = d;
                let (fx, fy) = self.front();
                return if self.cell(fx, fy).is_some_and(Cell::walkable) {
                    self.state.pos = (fx, fy);
                    format!("You move {dir}.")
                } else {
                    "Nothing happens.".into()
                };
            }
            if let Some(target) = parse_coords(dir.trim_start_matches("to").trim()) {
                return self.move_to(target);
            }
            return "Nothing happens.".into();
        }
        match action.as_str() {
            "do" => self.interact(),
            "noop" => "You wait. Nothing changes.".into(),
            "sleep" => "You sleep for a while.".into(),
            "place table" => self.place(Cell::Table, "wood", 2, &[Cell::Grass]),
            "place stone" => self.place(Cell::Stone, "stone", 1, &[Cell::Grass, Cell::Path, Cell::Water]),
            "place plant" => self.place(Cell::Plant, "sapling", 1, &[Cell::Grass]),
            "make wood pickaxe" => self.make("wood_pickaxe", &[("wood", 1)]),
            "make wood sword" => self.make("wood_sword", &[("wood", 1)]),
            "make stone pickaxe" => self.make("stone_pickaxe", &[("wood", 1), ("stone", 1)]),
            "make stone sword" => self.make("stone_sword", &[("wood", 1), ("stone", 1)]),
            _ => "Nothing happens.".into(),
        }
    }

    fn move_to(&mut self, target: (i32, i32)) -> String {
        let start = self.state.pos;
        for axis in 0..2 {
            loop {
                let (x, y) = self.state.pos;
                let delta = if axis == 0 { target.0 - x } else { target.1 - y };
                if delta == 0 {
                    break;
                }
                let d = match (axis, delta > 0) {
                    (0, true) => 1,
                    (0, false) => 3,
                    (_, true) => 2,
                    (_, false) => 0,
                };
                self.state.facing = d;
                let (fx, fy) = self.front();
                if !self.cell(fx, fy).is_some_and(Cell::walkable) {
                    break;
                }
                self.state.pos = (fx, fy);
            }
        }
        if self.state.pos == start {
            "Nothing happens.".into()
        } else {
            format!("You move to [{}, {}].", self.state.pos.0, self.state.pos.1)
        }
    }

    fn interact(&mut self) -> String {
        let (fx, fy) = self.front();
        match self.cell(fx, fy) {
            Some(Cell::Tree) => {
                self.add("wood", 1);
                "You collect 1 wood from the tree.".into()
            }
            Some(Cell::Grass) => {
                self.add("sapling", 1);
                "You collect 1 sapling from the grass.".into()
            }
            Some(Cell::Stone) if self.item("wood_pickaxe") + self.item("stone_pickaxe") > 0 => {
                self.add("stone", 1);
                self.set(fx, fy, Cell::Path);
                "You collect 1 stone.".into()
            }
            Some(Cell::Water) => "You drink some water.".into(),
            _ => "Nothing happens.".into(),
        }
    }

    fn place(&mut self, what: Cell, cost: &str, amount: u32, onto: &[Cell]) -> String {
        let (fx, fy) = self.front();
        let target = self.cell(fx, fy);
        if self.item(cost) < amount || !target.is_some_and(|c| onto.contains(&c)) {
            return "Nothing happens.".into();
        }
        self.add(cost, -(amount as i32));
        self.set(fx, fy, what);
        format!("You place a {} at [{fx}, {fy}], using {amount} {cost}.", what.name())
    }

    fn make(&mut self, item: &str, costs: &[(&str, u32)]) -> String {
        if !self.near_table() || costs.iter().any(|(c, n)| self.item(c) < *n) {
            return "Nothing happens.".into();
        }
        for (c, n) in costs {
            self.add(c, -(*n as i32));
        }
        self.add(item, 1);
        format!("You make 1 {item}.")
    }
}

fn parse_coords(text: &str) -> Option<(i32, i32)> {
    let inner = text.trim().strip_prefix('[')?.strip_suffix(']')?;
    let (x, y) = inner.split_once(',')?;
    Some((x.trim().parse().ok()?, y.trim().parse().ok()?))
}

impl Environment for CraftWorld {
    fn reset(&mut self) -> Result<Observation, EnvError> {
        self.state = self.start.clone();
        Ok(Observation::new(format!("You wake up in a small world.\n{}", self.status())))
    }

    fn step(&mut self, action: &str) -> Result<Observation, EnvError> {
        let message = self.apply(action);
        Ok(Observation::new(format!("{message}\n{}", self.status())))
    }

    fn snapshot(&mut self) -> Result<SnapshotId, EnvError> {
        let id = format!("cw-{}", self.next_snapshot);
        self.next_snapshot += 1;
        self.snapshots.insert(id.clone(), self.state.clone());
        Ok(SnapshotId(id))
    }

    fn restore(&mut self, id: &SnapshotId) -> Result<(), EnvError> {
        let s = self
            .snapshots
            .get(&id.0)
            .ok_or_else(|| EnvError::UnknownSnapshot(id.0.clone()))?;
        self.state = s.clone();
        Ok(())
    }

    fn capabilities(&self) -> EnvCapabilities {
        EnvCapabilities {
            snapshot_restore: true,
            deterministic: true,
            action_inventory: Some(ACTIONS.iter().map(|a| a.to_string()).collect()),
        }
    }

    fn fingerprint(&self) -> String {
        let grid: String = self
            .start
            .grid
            .iter()
            .map(|c| c.name().chars().next().unwrap_or('?'))
            .collect();
        let dims = format!("{}x{}@{:?}", self.width, self.height, self.start.pos);
        digest_hex(&["craftworld", &dims, &grid])
    }

    fn background(&self) -> String {
        let mut out = String::from(
            "The agent lives on a 2D grid. Positions are [x, y]; x grows eastward and y grows southward. \
             Distances are Manhattan distances.\n\n#### Available Actions\n\n",
        );
        for a in ACTIONS {
            out.push_str(&format!("- {a}\n"));
        }
        out.push_str(
            "\n#### Tips\n\n\
             - `Do` interacts with the cell the agent faces.\n\
             - Tools are made next to a table.\n",
        );
        out
    }

    fn goal_reached(&self, goal: &TaskGoal) -> bool {
        match goal {
            TaskGoal::Collect { item, count } => self.item(item) >= *count,
            TaskGoal::Hold { object } => self.item(object) > 0,
            _ => false,
        }
    }
}

const ACTIONS: [&str; 15] = [
    "Move To [x, y]",
    "Move West",
    "Move East",
    "Move North",
    "Move South",
    "Do",
    "Sleep",
    "Noop",
    "Place Stone",
    "Place Table",
    "Place Plant",
    "Make Wood Pickaxe",
    "Make Wood Sword",
    "Make Stone Pickaxe",
    "Make Stone Sword",
];
