//! SQuAD-style answer normalization and token-level F1.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

fn articles() -> &'static Regex {
    static ARTICLES: OnceLock<Regex> = OnceLock::new();
    ARTICLES.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"))
}

/// Lowercases, strips ASCII punctuation, drops the articles `a`/`an`/`the`
/// and collapses whitespace.
///
/// The steps run in the same order as the SQuAD v1.1 evaluation script, and
/// "punctuation" is the same ASCII set as Python's `string.punctuation`.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles().replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Bag-of-tokens F1 between two answers after [`normalize_answer`].
///
/// Two empty answers agree perfectly; one empty answer scores zero.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred_norm.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold_norm.split_whitespace().collect();

    match (pred_tokens.is_empty(), gold_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }

    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for tok in &gold_tokens {
        *gold_counts.entry(tok).or_default() += 1;
    }
    let mut common = 0usize;
    for tok in &pred_tokens {
        if let Some(count) = gold_counts.get_mut(tok) {
            if *count > 0 {
                *count -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_tokens.len() as f64;
    let recall = common as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// True when `needle` occurs in `haystack` as a run of whole tokens after
/// normalization. An answer that normalizes to nothing never matches.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let needle = normalize_answer(needle);
    if needle.is_empty() {
        return false;
    }
    let haystack = normalize_answer(haystack);
    format!(" {haystack} ").contains(&format!(" {needle} "))
}
