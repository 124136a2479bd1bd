//! Query normalization and the reformulation filters.

use std::collections::HashSet;

/// Lowercases and splits on whitespace and punctuation, keeping `.` and `-`
/// only between other characters of a token.
pub fn tokenize(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '.' || c == '-'))
        .map(|t| t.trim_matches(|c| c == '.' || c == '-'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Fragments that mark a query as navigational.
pub const NAVIGATIONAL_MARKERS: [&str; 6] = ["www", "com", "http", "https", "net", "org"];

pub fn is_navigational(words: &[String]) -> bool {
    words
        .iter()
        .flat_map(|w| w.split('.'))
        .any(|frag| NAVIGATIONAL_MARKERS.contains(&frag))
}

/// Why a (current, next) query pair was excluded. Declaration order is the
/// order in which the rules are checked; a pair is charged to the first
/// rule it fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    /// (i) identical to the next query
    SameAsNext,
    /// (ii) fewer than two words
    SingleWord,
    /// (iii) contains a navigational marker
    Navigational,
    /// (iv) no word in common with the next query
    NoOverlap,
}

impl DropReason {
    pub const ALL: [DropReason; 4] = [
        DropReason::SameAsNext,
        DropReason::SingleWord,
        DropReason::Navigational,
        DropReason::NoOverlap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::SameAsNext => "same_as_next",
            DropReason::SingleWord => "single_word",
            DropReason::Navigational => "navigational",
            DropReason::NoOverlap => "no_overlap",
        }
    }
}

/// `None` when the pair is eligible.
pub fn pair_verdict(current: &[String], next: &[String]) -> Option<DropReason> {
    if current == next {
        return Some(DropReason::SameAsNext);
    }
    if current.len() < 2 {
        return Some(DropReason::SingleWord);
    }
    if is_navigational(current) {
        return Some(DropReason::Navigational);
    }
    let next_words: HashSet<&str> = next.iter().map(String::as_str).collect();
    if !current.iter().any(|w| next_words.contains(w.as_str())) {
        return Some(DropReason::NoOverlap);
    }
    None
}

pub type QueryPair = (Vec<String>, Vec<String>);

/// Keeps the eligible pairs.
pub fn filter_pairs(pairs: &[QueryPair]) -> Vec<QueryPair> {
    pairs
        .iter()
        .filter(|(c, n)| pair_verdict(c, n).is_none())
        .cloned()
        .collect()
}
