use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TemplateId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing <{0}> tag")]
    MissingTag(String),
    #[error("<{tag}> opened at byte {position} is never closed")]
    Unclosed { tag: String, position: usize },
    #[error("no fenced json block")]
    NoJsonBlock,
    #[error("invalid json: {0}")]
    InvalidJson(String),
    #[error("unknown decision '{0}'")]
    UnknownDecision(String),
    #[error("Revise needs the corrected modification in <content>")]
    EmptyRevision,
    #[error("<{tag}> must be {expected}, got '{got}'")]
    Unexpected { tag: String, expected: String, got: String },
}

/// Tag contents keyed by tag name. `None` stands for a literal `None` answer.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaggedBlocks(pub BTreeMap<String, Option<String>>);

impl TaggedBlocks {
    /// The text of `tag`, or `None` when it is absent or the none marker.
    pub fn text(&self, tag: &str) -> Option<&str> {
        self.0.get(tag).and_then(|v| v.as_deref())
    }

    pub fn is_none_marker(&self, tag: &str) -> bool {
        matches!(self.0.get(tag), Some(None))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum JsonBlock {
    List(Vec<String>),
    Object(serde_json::Map<String, serde_json::Value>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Numbered {
    pub items: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Revise(String),
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParsedResponse {
    TaggedBlocks(TaggedBlocks),
    JsonList(Vec<String>),
    JsonObject(serde_json::Map<String, serde_json::Value>),
    NumberedTags(Numbered),
    Decision(Decision),
}

fn is_none_word(text: &str) -> bool {
    text.trim().trim_end_matches('.').eq_ignore_ascii_case("none")
}

/// Innermost `<tag>...</tag>` content: the first closing tag and the last
/// opening tag before it.
fn find_tag<'t>(text: &'t str, tag: &str) -> Result<Option<&'t str>, ParseError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    match text.find(&close) {
        Some(end) => {
            let start = text[..end]
                .rfind(&open)
                .ok_or_else(|| ParseError::MissingTag(tag.to_string()))?;
            Ok(Some(text[start + open.len()..end].trim()))
        }
        None => match text.find(&open) {
            Some(position) => Err(ParseError::Unclosed {
                tag: tag.to_string(),
                position,
            }),
            None => Ok(None),
        },
    }
}

/// Pulls the listed tags out of `text`. Every tag in `required` must be
/// present; tags in `optional` are captured when they are. A content of
/// `None` becomes the none marker.
pub fn extract_tagged(text: &str, required: &[&str], optional: &[&str]) -> Result<TaggedBlocks, ParseError> {
    let mut out = BTreeMap::new();
    for (tag, needed) in required.iter().map(|t| (t, true)).chain(optional.iter().map(|t| (t, false))) {
        match find_tag(text, tag) {
            Ok(Some(content)) => {
                let value = (!is_none_word(content)).then(|| content.to_string());
                out.insert(tag.to_string(), value);
            }
            Ok(None) if needed => return Err(ParseError::MissingTag(tag.to_string())),
            Ok(None) => {}
            Err(e) if needed => return Err(e),
            Err(_) => {}
        }
    }
    Ok(TaggedBlocks(out))
}

/// Parses the first fenced json block. A list must hold strings only.
pub fn extract_json_block(text: &str) -> Result<JsonBlock, ParseError> {
    let mut search = text;
    let body = loop {
        let Some(i) = search.find("```") else {
            return Err(ParseError::NoJsonBlock);
        };
        let after = &search[i + 3..];
        let Some(nl) = after.find('\n') else {
            return Err(ParseError::NoJsonBlock);
        };
        let lang = after[..nl].trim();
        let inner = &after[nl + 1..];
        let Some(end) = inner.find("```") else {
            return Err(ParseError::NoJsonBlock);
        };
        if lang.eq_ignore_ascii_case("json") || lang.is_empty() {
            break &inner[..end];
        }
        search = &inner[end + 3..];
    };
    let value: serde_json::Value =
        serde_json::from_str(body.trim()).map_err(|e| ParseError::InvalidJson(e.to_string()))?;
    match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .map(|v| match v {
                serde_json::Value::String(s) => Ok(s),
                other => Err(ParseError::InvalidJson(format!("list item {other} is not a string"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(JsonBlock::List),
        serde_json::Value::Object(map) => Ok(JsonBlock::Object(map)),
        other => Err(ParseError::InvalidJson(format!("expected a list or an object, got {other}"))),
    }
}

/// Contents of `<base1>`, `<base2>`, ... in index order. `None` items are
/// dropped; gaps in the numbering are tolerated and reported as warnings.
pub fn extract_numbered(text: &str, base: &str) -> Result<Numbered, ParseError> {
    let open_prefix = format!("<{base}");
    let mut indices: Vec<u32> = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find(&open_prefix) {
        let after = &rest[i + open_prefix.len()..];
        let digits: String = after.chars().take_while(|c| c.is_ascii_digit()).collect();
        if !digits.is_empty() && after[digits.len()..].starts_with('>') {
            let n: u32 = digits.parse().unwrap_or(u32::MAX);
            if !indices.contains(&n) {
                indices.push(n);
            }
        }
        rest = after;
    }
    if indices.is_empty() {
        return Err(ParseError::MissingTag(format!("{base}1")));
    }
    indices.sort_unstable();
    let mut warnings = Vec::new();
    for (expected, n) in (1..).zip(&indices) {
        if *n != expected {
            warnings.push(format!("{base} numbering skips to {n} where {expected} was expected"));
            break;
        }
    }
    let mut items = Vec::new();
    for n in indices {
        let tag = format!("{base}{n}");
        let content = find_tag(text, &tag)?.ok_or(ParseError::MissingTag(tag))?;
        if !is_none_word(content) && !content.is_empty() {
            items.push(content.to_string());
        }
    }
    Ok(Numbered { items, warnings })
}

/// Reads `<decision>` (case-insensitive) and, for Revise, `<content>`.
pub fn extract_decision(text: &str) -> Result<Decision, ParseError> {
    let tags = extract_tagged(text, &["decision"], &["content"])?;
    let word = match tags.0.get("decision") {
        Some(Some(w)) => w.trim().trim_end_matches('.').to_ascii_lowercase(),
        // a bare None decision counts as acceptance
        _ => return Ok(Decision::Accept),
    };
    match word.as_str() {
        "accept" => Ok(Decision::Accept),
        "reject" => Ok(Decision::Reject),
        "revise" => match tags.text("content") {
            Some(c) if !c.trim().is_empty() => Ok(Decision::Revise(c.to_string())),
            _ => Err(ParseError::EmptyRevision),
        },
        _ => Err(ParseError::UnknownDecision(word)),
    }
}

/// The one grammar each template's answers follow.
pub fn parse_response(id: TemplateId, text: &str) -> Result<ParsedResponse, ParseError> {
    let tagged = |req: &[&str], opt: &[&str]| extract_tagged(text, req, opt).map(ParsedResponse::TaggedBlocks);
    match id {
        TemplateId::PlannerObsTodo => tagged(&["todo"], &["thought", "missing_observations"]),
        TemplateId::PlannerRuleTodo => match extract_json_block(text)? {
            JsonBlock::List(items) => Ok(ParsedResponse::JsonList(items)),
            JsonBlock::Object(_) => Err(ParseError::InvalidJson("expected a list of paths".into())),
        },
        TemplateId::PlannerPromote => match extract_json_block(text)? {
            JsonBlock::Object(map) => Ok(ParsedResponse::JsonObject(map)),
            JsonBlock::List(_) => Err(ParseError::InvalidJson("expected an object".into())),
        },
        TemplateId::PlannerLoopControl => {
            let blocks = extract_tagged(text, &["continue"], &["thought"])?;
            let word = blocks.text("continue").unwrap_or("no").trim().to_ascii_lowercase();
            if word != "yes" && word != "no" {
                return Err(ParseError::Unexpected {
                    tag: "continue".into(),
                    expected: "yes or no".into(),
                    got: word,
                });
            }
            Ok(ParsedResponse::TaggedBlocks(blocks))
        }
        TemplateId::ActorSubagent => tagged(&["action"], &["thought"]),
        TemplateId::ExtractorObsEdits | TemplateId::ExtractorRuleEdits => {
            extract_numbered(text, "modification").map(ParsedResponse::NumberedTags)
        }
        TemplateId::ExtractorCheck => extract_decision(text).map(ParsedResponse::Decision),
        TemplateId::ExtractorApply => tagged(&["knowledge"], &["thought"]),
        TemplateId::KeyresultSummarize => tagged(&["key_result"], &[]),
    }
}
