//! Token normalization shared by the embedder, fact dedupe, keyword
//! predicates, and receptiveness scoring.
//!
//! A token is a maximal run of alphanumeric characters, lowercased. All
//! keyword and phrase matching in the crate is on token boundaries, so
//! "game" never matches inside "games".

use alloc::string::String;
use alloc::vec::Vec;

/// Split text into lowercase alphanumeric tokens.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lower in ch.to_lowercase() {
                current.push(lower);
            }
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Collapse internal whitespace runs to single spaces and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::new();
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// True when `phrase` occurs in `haystack` as a contiguous token run.
///
/// Both sides are normalized, so matching is case-insensitive and ignores
/// punctuation. An empty phrase never matches.
pub fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    count_phrase(haystack, phrase) > 0
}

/// Number of non-overlapping token-boundary occurrences of `phrase`.
pub fn count_phrase(haystack: &str, phrase: &str) -> usize {
    let tokens = normalize_tokens(haystack);
    let needle = normalize_tokens(phrase);
    if needle.is_empty() || needle.len() > tokens.len() {
        return 0;
    }
    let mut count = 0;
    let mut i = 0;
    while i + needle.len() <= tokens.len() {
        if tokens[i..i + needle.len()] == needle[..] {
            count += 1;
            i += needle.len();
        } else {
            i += 1;
        }
    }
    count
}

/// Token-set Jaccard similarity. Two token-free texts count as identical.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let ta: alloc::collections::BTreeSet<String> = normalize_tokens(a).into_iter().collect();
    let tb: alloc::collections::BTreeSet<String> = normalize_tokens(b).into_iter().collect();
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let intersection = ta.intersection(&tb).count();
    let union = ta.union(&tb).count();
    intersection as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_lowercase_alphanumeric_runs() {
        assert_eq!(normalize_tokens("Video-Games, 2024!"), vec!["video", "games", "2024"]);
        assert_eq!(normalize_tokens("   "), Vec::<String>::new());
    }

    #[test]
    fn phrase_matching_respects_token_boundaries() {
        assert!(contains_phrase("I love video games a lot", "video games"));
        assert!(!contains_phrase("videogames are fun", "video games"));
        assert!(!contains_phrase("gamescom", "game"));
        assert!(contains_phrase("No, I'm busy.", "busy"));
    }

    #[test]
    fn phrase_counting_is_non_overlapping() {
        assert_eq!(count_phrase("yes yes yes", "yes"), 3);
        assert_eq!(count_phrase("a b a b a", "a b a"), 1);
    }

    #[test]
    fn jaccard_on_identical_and_disjoint_texts() {
        assert_eq!(token_jaccard("video games", "Video Games!"), 1.0);
        assert_eq!(token_jaccard("video games", "tax law"), 0.0);
        assert_eq!(token_jaccard("", "  "), 1.0);
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_whitespace("  a \t b\n c  "), "a b c");
    }
}
