//! Shared tokenization for the lexical measures.
//!
//! Marked words, classifier features, and stereotype shares must all agree on
//! what a "word" is, so the rules live here once: text is lowercased, split on
//! anything non-alphanumeric, and a hyphen or apostrophe *between* two
//! alphanumerics joins the halves instead of splitting them ("almond-shaped"
//! becomes `almondshaped`, "don't" becomes `dont`). Redaction markers left
//! behind by preprocessing are dropped so they never surface as an `identity`
//! token.

use std::collections::BTreeMap;

use crate::preprocess::IDENTITY_MARKER;

/// Characters that join two word halves instead of separating them.
const JOINERS: [char; 3] = ['-', '\'', '\u{2019}'];

/// Split `text` into lowercase unigrams.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned = text.replace(IDENTITY_MARKER, " ");
    let chars: Vec<char> = cleaned.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if JOINERS.contains(&c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            // Joiner between two alphanumerics: swallow it and keep building.
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Token counts over a document set, plus the total token count.
pub fn token_counts<S: AsRef<str>>(texts: &[S]) -> (BTreeMap<String, u64>, u64) {
    let mut counts = BTreeMap::new();
    let mut total = 0u64;
    for text in texts {
        for token in tokenize(text.as_ref()) {
            *counts.entry(token).or_insert(0) += 1;
            total += 1;
        }
    }
    (counts, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_splits_on_punctuation() {
        assert_eq!(
            tokenize("Hello, World! It's 42nd street."),
            vec!["hello", "world", "its", "42nd", "street"]
        );
    }

    #[test]
    fn joins_hyphenated_words() {
        assert_eq!(tokenize("almond-shaped eyes"), vec!["almondshaped", "eyes"]);
        assert_eq!(tokenize("rock-n-roll"), vec!["rocknroll"]);
    }

    #[test]
    fn joiner_at_edge_is_a_separator() {
        assert_eq!(tokenize("-dash fire- 'quote'"), vec!["dash", "fire", "quote"]);
    }

    #[test]
    fn curly_apostrophe_joins() {
        assert_eq!(tokenize("she\u{2019}s here"), vec!["shes", "here"]);
    }

    #[test]
    fn drops_redaction_markers() {
        assert_eq!(
            tokenize("I am [identity], a teacher from [identity]."),
            vec!["i", "am", "a", "teacher", "from"]
        );
    }

    #[test]
    fn handles_unicode_words() {
        assert_eq!(tokenize("Müller aß Grüße"), vec!["müller", "aß", "grüße"]);
    }

    #[test]
    fn empty_and_symbol_only_inputs_yield_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("!!! --- ...").is_empty());
    }

    #[test]
    fn counts_accumulate_across_documents() {
        let (counts, total) = token_counts(&["a b a", "b c"]);
        assert_eq!(counts.get("a"), Some(&2));
        assert_eq!(counts.get("b"), Some(&2));
        assert_eq!(counts.get("c"), Some(&1));
        assert_eq!(total, 5);
    }
}
