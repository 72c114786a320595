//! Extraction of the task field from raw model responses.
//!
//! Responses are requested in a JSON format, but models wrap, truncate, or
//! decorate it often enough that extraction must be tolerant: we scan for
//! balanced JSON objects anywhere in the text and accept the first one that
//! parses and carries the task's field.

use crate::error::{Error, Result};
use crate::matrix::TaskKind;

/// Result of structured-field extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// The task field's text, or the full trimmed response when falling back.
    pub text: String,
    /// Username metadata from social-media-bio responses.
    pub username: Option<String>,
    /// True when no usable JSON object was found.
    pub fallback: bool,
}

fn field_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::SelfDescription => "self_description",
        TaskKind::SocialMediaBio => "bio",
        TaskKind::SubjectiveQa => "answer_option",
    }
}

/// Pulls the task's field out of a raw response.
///
/// The first balanced JSON object (scanning candidate `{` positions left to
/// right, so wrappers are tolerated) that parses and contains the field
/// wins; key lookup is case-insensitive and a trailing comma before `}` is
/// repaired. With no usable object the full trimmed text is returned with
/// `fallback` set. Empty text is an error, which callers map to an
/// extraction-failure exclusion.
pub fn extract_structured_field(raw: &str, task: TaskKind) -> Result<Extraction> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::Degenerate("empty response text".to_string()));
    }
    let field = field_name(task);
    for candidate in balanced_objects(raw) {
        if let Some(value) = parse_tolerant(candidate) {
            if let Some(text) = get_string_ci(&value, field) {
                let username = if task == TaskKind::SocialMediaBio {
                    get_string_ci(&value, "username")
                } else {
                    None
                };
                return Ok(Extraction {
                    text,
                    username,
                    fallback: false,
                });
            }
        }
    }
    Ok(Extraction {
        text: trimmed.to_string(),
        username: None,
        fallback: true,
    })
}

fn parse_tolerant(candidate: &str) -> Option<serde_json::Value> {
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(candidate) {
        return Some(v);
    }
    // Common model tic: a trailing comma before the closing brace.
    let repaired = repair_trailing_commas(candidate);
    if repaired != candidate {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&repaired) {
            return Some(v);
        }
    }
    None
}

fn repair_trailing_commas(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let chars: Vec<char> = s.chars().collect();
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        if c == '"' {
            in_string = true;
            out.push(c);
            i += 1;
            continue;
        }
        if c == ',' {
            // Drop the comma if the next non-whitespace char closes a
            // container.
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            if j < chars.len() && (chars[j] == '}' || chars[j] == ']') {
                i += 1;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

fn get_string_ci(value: &serde_json::Value, key: &str) -> Option<String> {
    let object = value.as_object()?;
    for (k, v) in object {
        if k.eq_ignore_ascii_case(key) {
            if let Some(s) = v.as_str() {
                return Some(s.to_string());
            }
        }
    }
    None
}

/// Yields every balanced `{...}` slice of `text`, ordered by opening
/// position. Braces inside JSON strings are ignored.
fn balanced_objects(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut opens: Vec<usize> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' if !opens.is_empty() => in_string = true,
            b'{' => opens.push(i),
            b'}' => {
                if let Some(start) = opens.pop() {
                    spans.push((start, i + 1));
                }
            }
            _ => {}
        }
    }
    spans.sort();
    for (start, end) in spans {
        out.push(&text[start..end]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_format_extracts_the_field() {
        let out =
            extract_structured_field("{\"self_description\": \"I am a teacher.\"}", TaskKind::SelfDescription)
                .unwrap();
        assert_eq!(out.text, "I am a teacher.");
        assert!(!out.fallback);
        assert_eq!(out.username, None);
    }

    #[test]
    fn preamble_and_reordered_keys_are_tolerated() {
        let out = extract_structured_field(
            "Sure! {\"bio\": \"Coffee lover\", \"username\": \"sun_rae\"}",
            TaskKind::SocialMediaBio,
        )
        .unwrap();
        assert_eq!(out.text, "Coffee lover");
        assert_eq!(out.username.as_deref(), Some("sun_rae"));
        assert!(!out.fallback);
    }

    #[test]
    fn truncated_object_falls_back_to_full_text() {
        let raw = "{\"answer_option\": \"Very likely\"";
        let out = extract_structured_field(raw, TaskKind::SubjectiveQa).unwrap();
        assert!(out.fallback);
        assert_eq!(out.text, raw);
    }

    #[test]
    fn empty_text_is_an_error() {
        assert!(extract_structured_field("   \n", TaskKind::SelfDescription).is_err());
    }

    #[test]
    fn nested_wrappers_are_searched() {
        let raw = "{\"response\": {\"self_description\": \"Inner text.\"}}";
        let out = extract_structured_field(raw, TaskKind::SelfDescription).unwrap();
        assert_eq!(out.text, "Inner text.");
        assert!(!out.fallback);
    }

    #[test]
    fn trailing_comma_is_repaired() {
        let raw = "{\"self_description\": \"Hello there.\",}";
        let out = extract_structured_field(raw, TaskKind::SelfDescription).unwrap();
        assert_eq!(out.text, "Hello there.");
        assert!(!out.fallback);
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_the_scanner() {
        let raw = "{\"self_description\": \"I love {curly} braces.\"}";
        let out = extract_structured_field(raw, TaskKind::SelfDescription).unwrap();
        assert_eq!(out.text, "I love {curly} braces.");
    }

    #[test]
    fn wrong_field_type_means_fallback() {
        let raw = "{\"self_description\": 42}";
        let out = extract_structured_field(raw, TaskKind::SelfDescription).unwrap();
        assert!(out.fallback);
        assert_eq!(out.text, raw);
    }

    #[test]
    fn case_insensitive_keys_are_accepted() {
        let raw = "{\"Self_Description\": \"Proud parent.\"}";
        let out = extract_structured_field(raw, TaskKind::SelfDescription).unwrap();
        assert_eq!(out.text, "Proud parent.");
    }
}
