//! Text normalization and token-overlap primitives used by the offline judge,
//! the exam grader and the perturbation engine.

use std::collections::BTreeSet;

// Function words dropped from "content" token sets.
const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have", "having", "he",
    "her", "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "may",
    "me", "might", "more", "most", "must", "my", "no", "nor", "not", "of", "off", "on", "once", "only", "or", "other",
    "our", "ours", "out", "over", "own", "same", "shall", "she", "should", "so", "some", "such", "than", "that", "the",
    "their", "theirs", "them", "then", "there", "these", "they", "this", "those", "through", "to", "too", "under",
    "until", "up", "upon", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom",
    "why", "will", "with", "within", "would", "you", "your", "yours",
];

/// Casefold, spell `&` as `and`, replace every non-alphanumeric character
/// with a space and collapse runs of whitespace.
pub fn normalize(text: &str) -> String {
    let mut spaced = String::with_capacity(text.len() + 8);
    for ch in text.chars() {
        if ch == '&' {
            spaced.push_str(" and ");
        } else if ch.is_alphanumeric() {
            spaced.extend(ch.to_lowercase());
        } else {
            spaced.push(' ');
        }
    }
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokens(text: &str) -> Vec<String> {
    normalize(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().collect()
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Token set without stopwords. Falls back to the full token set when the
/// text consists only of stopwords.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    let all = token_set(text);
    let content: BTreeSet<String> = all.iter().filter(|t| !is_stopword(t)).cloned().collect();
    if content.is_empty() {
        all
    } else {
        content
    }
}

/// Fraction of `needle` tokens present in `haystack`; 0 for an empty needle.
pub fn recall(needle: &BTreeSet<String>, haystack: &BTreeSet<String>) -> f64 {
    if needle.is_empty() {
        return 0.0;
    }
    let found = needle.iter().filter(|t| haystack.contains(*t)).count();
    found as f64 / needle.len() as f64
}

pub fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> usize {
    a.intersection(b).count()
}

/// `value >= threshold`, tolerant of rounding in ratios like 4/5.
pub fn meets(value: f64, threshold: f64) -> bool {
    value + 1e-12 >= threshold
}

/// Strip a leading option label such as `A)`, `b.`, `(c)` or `D:`.
pub fn strip_option_label(text: &str) -> &str {
    let t = text.trim_start();
    let mut chars = t.char_indices();
    let rest = match chars.next() {
        Some((_, '(')) => match (chars.next(), chars.next()) {
            (Some((_, c)), Some((i, ')'))) if c.is_ascii_alphabetic() => &t[i + 1..],
            _ => return t.trim(),
        },
        Some((_, c)) if c.is_ascii_alphabetic() => match chars.next() {
            Some((i, ')' | '.' | ':')) => &t[i + 1..],
            _ => return t.trim(),
        },
        _ => return t.trim(),
    };
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        rest.trim()
    } else {
        t.trim()
    }
}
