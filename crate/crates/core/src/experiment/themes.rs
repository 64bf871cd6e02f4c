//! Keyword tagging of decision rationales.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Theme name to keyword list. Matching is case-insensitive substring search.
pub type Lexicon = BTreeMap<String, Vec<String>>;

pub fn default_lexicon() -> Lexicon {
    let entry = |name: &str, words: &[&str]| {
        (name.to_string(), words.iter().map(|w| w.to_string()).collect())
    };
    [
        entry(
            "risk perception",
            &["risk", "infect", "virus", "propagat", "transmi", "danger", "threat", "exposure", "worried"],
        ),
        entry(
            "habit formation",
            &["habit", "routine", "used to", "ease of maintenance", "easy to maintain", "automatic", "low cost"],
        ),
        entry(
            "official guidance",
            &["official", "guidance", "government", "authorit", "policy", "regulation", "mandate"],
        ),
        entry(
            "cost",
            &["cost", "expensive", "price", "inconvenien", "troublesome", "time-consuming", "effort"],
        ),
    ]
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeFrequency {
    pub theme: String,
    pub count: usize,
    pub total: usize,
    pub percent: f64,
}

/// Share of rationales mentioning each theme; one rationale may carry several themes.
/// Rows follow the lexicon's key order; an empty input yields an empty table.
pub fn tag_rationales<S: AsRef<str>>(rationales: &[S], lexicon: &Lexicon) -> Vec<ThemeFrequency> {
    if rationales.is_empty() {
        return Vec::new();
    }
    let lowered: Vec<String> = rationales.iter().map(|r| r.as_ref().to_lowercase()).collect();
    lexicon
        .iter()
        .map(|(theme, words)| {
            let words: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
            let count = lowered
                .iter()
                .filter(|r| words.iter().any(|w| !w.is_empty() && r.contains(w.as_str())))
                .count();
            ThemeFrequency {
                theme: theme.clone(),
                count,
                total: lowered.len(),
                percent: 100.0 * count as f64 / lowered.len() as f64,
            }
        })
        .collect()
}
