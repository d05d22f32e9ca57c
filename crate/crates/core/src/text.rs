//! Small string helpers shared by renderers and parsers.

/// Collapses every run of whitespace (including newlines) into one space.
pub fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Truncates `text` to at most `max_chars` characters, appending `marker` when
/// anything was cut. The result never exceeds `max_chars` characters.
pub fn truncate_chars(text: &str, max_chars: usize, marker: &str) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let keep = max_chars.saturating_sub(marker.chars().count());
    let mut out: String = text.chars().take(keep).collect();
    out.push_str(marker);
    out
}

/// First sentence of `text`: everything up to and including the first `.`,
/// `!` or `?` that is followed by whitespace or the end of input.
pub fn first_sentence(text: &str) -> &str {
    let trimmed = text.trim();
    let bytes = trimmed.as_bytes();
    for (i, c) in trimmed.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let next = i + c.len_utf8();
            if next >= bytes.len() || bytes[next].is_ascii_whitespace() {
                return &trimmed[..next];
            }
        }
    }
    trimmed
}

/// Case-insensitive wildcard match. `[anything]` placeholders and `...` in the
/// pattern match one or more characters; everything else is literal.
pub fn wildcard_match(pattern: &str, text: &str) -> bool {
    let mut pieces: Vec<String> = Vec::new();
    let mut literal = String::new();
    let mut chars = pattern.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '[' {
            for d in chars.by_ref() {
                if d == ']' {
                    break;
                }
            }
            pieces.push(std::mem::take(&mut literal));
            pieces.push(String::from("\u{0}"));
        } else if c == '.' && pattern_has_ellipsis(&mut chars) {
            pieces.push(std::mem::take(&mut literal));
            pieces.push(String::from("\u{0}"));
        } else {
            literal.push(c);
        }
    }
    pieces.push(literal);
    let pieces: Vec<String> = pieces
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(|p| p.to_lowercase())
        .collect();
    glob(&pieces, &text.to_lowercase())
}

fn pattern_has_ellipsis(chars: &mut std::iter::Peekable<std::str::Chars<'_>>) -> bool {
    let mut probe = chars.clone();
    if probe.next() == Some('.') && probe.next() == Some('.') {
        chars.next();
        chars.next();
        true
    } else {
        false
    }
}

fn glob(pieces: &[String], text: &str) -> bool {
    match pieces.split_first() {
        None => text.is_empty(),
        Some((head, rest)) if head == "\u{0}" => {
            // at least one character, then try every split point
            let mut idx = text.char_indices().skip(1).map(|(i, _)| i).collect::<Vec<_>>();
            idx.push(text.len());
            if text.is_empty() {
                return false;
            }
            idx.into_iter().any(|i| glob(rest, &text[i..]))
        }
        Some((head, rest)) => text.starts_with(head.as_str()) && glob(rest, &text[head.len()..]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_respects_limit() {
        let s = "a".repeat(600);
        let t = truncate_chars(&s, 500, " [...]");
        assert_eq!(t.chars().count(), 500);
        assert!(t.ends_with(" [...]"));
        assert_eq!(truncate_chars("short", 500, "!"), "short");
    }

    #[test]
    fn first_sentence_stops_at_terminal_punctuation() {
        assert_eq!(first_sentence("You take the knife. It is sharp."), "You take the knife.");
        assert_eq!(first_sentence("No punctuation"), "No punctuation");
        assert_eq!(first_sentence("Version 3.5 is here. Next"), "Version 3.5 is here.");
    }

    #[test]
    fn wildcards() {
        assert!(wildcard_match("go [direction]", "go east"));
        assert!(wildcard_match("take ... from ...", "Take knife from counter"));
        assert!(!wildcard_match("take ... from ...", "take knife"));
        assert!(wildcard_match("look", "LOOK"));
        assert!(!wildcard_match("go [direction]", "go "));
    }
}
