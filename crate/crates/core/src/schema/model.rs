use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// How many values an attribute slot holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Multiplicity {
    One,
    Many,
}

/// The value domain of an attribute slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotDomain {
    FreeText,
    /// Reference to another entity by key. A qualified reference carries a
    /// free-text qualifier before the target, as in `exit (without door) to Kitchen`.
    EntityRef { entity_type: String, qualified: bool },
    Enumerated(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrSlot {
    pub name: String,
    pub multiplicity: Multiplicity,
    pub domain: SlotDomain,
    pub unknown_allowed: bool,
    pub nothing_allowed: bool,
}

/// How an entity is laid out in the rendered document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityLayout {
    /// Header line followed by one indented line per slot. `colon` controls
    /// whether the header ends in `:`.
    Block { colon: bool },
    /// Header and its single slot share one line.
    Inline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTypeSpec {
    pub name: String,
    pub key_attribute: String,
    /// Literal text preceding the bracketed key, e.g. `Position` in
    /// `Position [x, y]`.
    pub label: Option<String>,
    pub layout: EntityLayout,
    pub slots: Vec<AttrSlot>,
}

impl EntityTypeSpec {
    pub fn slot(&self, name: &str) -> Option<&AttrSlot> {
        self.slots.iter().find(|s| s.name.eq_ignore_ascii_case(name))
    }

    /// Header text for an entity of this type, without the leading `- `.
    pub fn header(&self, key: &str) -> String {
        match &self.label {
            Some(label) => format!("{label} [{key}]"),
            None => key.to_string(),
        }
    }
}

/// Declarative template constraining a [`Document`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub entity_types: Vec<EntityTypeSpec>,
    pub has_action_rules: bool,
    pub source_name: String,
    /// The schema file as written; handed to prompts as the document format.
    pub source_text: String,
}

impl Schema {
    pub fn entity_type(&self, name: &str) -> Option<&EntityTypeSpec> {
        self.entity_types.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }
}

/// One attribute value of an entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrValue {
    Known(String),
    KnownList(Vec<String>),
    /// Not yet observed. Qualified reference slots may keep the observed
    /// qualifier, rendering as `closed sliding patio door to Unknown`.
    Unknown(Option<String>),
    Nothing,
}

impl AttrValue {
    pub fn unknown() -> Self {
        AttrValue::Unknown(None)
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, AttrValue::Unknown(_))
    }

    /// Every known text fragment of the value.
    pub fn known_items(&self) -> Vec<&str> {
        match self {
            AttrValue::Known(t) => vec![t.as_str()],
            AttrValue::KnownList(items) => items.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub type_name: String,
    pub key: String,
    pub attrs: IndexMap<String, AttrValue>,
}

impl Entity {
    pub fn new(type_name: impl Into<String>, key: impl Into<String>) -> Self {
        Entity {
            type_name: type_name.into(),
            key: key.into(),
            attrs: IndexMap::new(),
        }
    }

    pub fn with(mut self, slot: impl Into<String>, value: AttrValue) -> Self {
        self.attrs.insert(slot.into(), value);
        self
    }

    pub fn get(&self, slot: &str) -> Option<&AttrValue> {
        self.attrs
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(slot))
            .map(|(_, v)| v)
    }

    /// Identity is `(type_name, key)` compared case-insensitively.
    pub fn same_identity(&self, type_name: &str, key: &str) -> bool {
        self.type_name.eq_ignore_ascii_case(type_name) && self.key.eq_ignore_ascii_case(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionRule {
    pub action: String,
    /// May span several lines; each line renders as an indented bullet.
    pub requirements: String,
    pub key_result: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DocMeta {
    pub instance_id: String,
    pub env_steps_consumed: u64,
    pub iteration: u64,
}

/// The instance context: typed entities plus action rules.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Document {
    pub entities: Vec<Entity>,
    pub action_rules: Vec<ActionRule>,
    pub meta: DocMeta,
}

impl Document {
    pub fn empty() -> Self {
        Document::default()
    }

    pub fn entity(&self, type_name: &str, key: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.same_identity(type_name, key))
    }

    pub fn entity_mut(&mut self, type_name: &str, key: &str) -> Option<&mut Entity> {
        self.entities.iter_mut().find(|e| e.same_identity(type_name, key))
    }

    pub fn find_key(&self, key: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.key.eq_ignore_ascii_case(key))
    }

    pub fn rule(&self, action: &str) -> Option<&ActionRule> {
        self.action_rules
            .iter()
            .find(|r| r.action.eq_ignore_ascii_case(action))
    }

    pub fn unknown_count(&self) -> usize {
        self.entities
            .iter()
            .flat_map(|e| e.attrs.values())
            .filter(|v| v.is_unknown())
            .count()
    }
}

/// A single invariant violation, optionally anchored to a source line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub line: Option<usize>,
    pub message: String,
}

impl Violation {
    pub fn new(message: impl Into<String>) -> Self {
        Violation {
            line: None,
            message: message.into(),
        }
    }

    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Violation {
            line: Some(line),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}
