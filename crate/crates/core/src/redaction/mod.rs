//! Dollar and persona redaction of transcripts, and the scanners that
//! verify them.

mod dollars;
mod persona;
mod verify;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use dollars::{redact_dollars, redact_dollars_text};
pub use persona::{redact_persona, ScriptedPersonaRedactor};
pub use verify::{verify_persona_against, verify_redaction};

use crate::model::InferenceVariant;

pub const PRICE_TOKEN: &str = "[PRICE REDACTED]";
pub const BUDGET_PHRASE_TOKEN: &str = "[BUDGET PHRASE REDACTED]";
pub const PERSONA_TOKEN: &str = "[PERSONA REDACTED]";
pub const TOKENS: [&str; 3] = [PRICE_TOKEN, BUDGET_PHRASE_TOKEN, PERSONA_TOKEN];

static CURRENCY: LazyLock<Regex> = LazyLock::new(|| {
    let number = r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?";
    Regex::new(&format!(
        r"(?i)(?:\$|\bUSD\s?)\s?(?:{number})|\b(?:{number})\s*(?:US\s+)?dollars?\b"
    ))
    .expect("currency pattern")
});

/// Byte spans of currency amounts: `$49.99`, `$ 1,299.00`, `USD 50`,
/// `50 dollars`, `1,000 US dollars`. Bare numbers are not amounts.
pub fn find_currency_spans(text: &str) -> Vec<(usize, usize)> {
    CURRENCY.find_iter(text).map(|m| (m.start(), m.end())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Case-insensitive whole-word phrase list. A trailing `*` on an entry
/// matches any word ending, and spaces match any run of whitespace.
#[derive(Debug, Clone)]
pub struct WordList {
    entries: Vec<String>,
    regex: Option<Regex>,
}

impl PartialEq for WordList {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl WordList {
    /// One entry per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Self::new(entries)
    }

    pub fn new(entries: Vec<String>) -> Self {
        let mut alts: Vec<&String> = entries.iter().collect();
        alts.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let regex = (!alts.is_empty()).then(|| {
            let body: Vec<String> = alts.iter().map(|e| entry_pattern(e)).collect();
            Regex::new(&format!(r"(?i)\b(?:{})\b", body.join("|"))).expect("word list pattern")
        });
        WordList { entries, regex }
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = self.entries.join("\n");
        out.push('\n');
        out
    }

    pub fn find_all(&self, text: &str) -> Vec<Match> {
        let Some(re) = &self.regex else {
            return Vec::new();
        };
        re.find_iter(text)
            .map(|m| Match {
                start: m.start(),
                end: m.end(),
                text: m.as_str().to_string(),
            })
            .collect()
    }

    /// Replaces every match with `token`, returning the count.
    pub fn replace_all(&self, text: &str, token: &str) -> (String, usize) {
        match &self.regex {
            None => (text.to_string(), 0),
            Some(re) => {
                let n = re.find_iter(text).count();
                (re.replace_all(text, regex::NoExpand(token)).into_owned(), n)
            }
        }
    }
}

fn entry_pattern(entry: &str) -> String {
    let (stem, wildcard) = match entry.strip_suffix('*') {
        Some(stem) => (stem, true),
        None => (entry, false),
    };
    let words: Vec<String> = stem.split_whitespace().map(regex::escape).collect();
    let mut p = words.join(r"\s+");
    if wildcard {
        p.push_str(r"\w*");
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Currency,
    BudgetPhrase,
    FinancialWord,
    PersonaTerm,
    /// A product name or price in the input is missing from the output.
    Dropped,
    /// The output turn structure differs from the input.
    Structure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub turn: usize,
    pub span: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionReport {
    pub variant: InferenceVariant,
    pub replacements: usize,
    pub residual_violations: Vec<Violation>,
    /// Redaction passes used (persona variant only: 1, or 2 after a re-pass).
    #[serde(default)]
    pub passes: u32,
}

impl RedactionReport {
    pub fn is_clean(&self) -> bool {
        self.residual_violations.is_empty()
    }
}

/// Spans that scanners and redactors must leave alone: redaction tokens,
/// catalog product names and currency amounts.
pub(crate) fn protected_spans(text: &str, product_names: &[String]) -> Vec<(usize, usize)> {
    let mut spans = find_currency_spans(text);
    for needle in TOKENS.iter().copied().chain(product_names.iter().map(String::as_str)) {
        spans.extend(text.match_indices(needle).map(|(i, s)| (i, i + s.len())));
    }
    spans.sort_unstable();
    spans
}

pub(crate) fn overlaps(spans: &[(usize, usize)], start: usize, end: usize) -> bool {
    spans.iter().any(|&(s, e)| s < end && start < e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(text: &str) -> Vec<&str> {
        find_currency_spans(text)
            .into_iter()
            .map(|(s, e)| &text[s..e])
            .collect()
    }

    #[test]
    fn currency_forms() {
        assert_eq!(spans("priced at $49.99 today"), ["$49.99"]);
        assert_eq!(spans("$1,299.00 or 50 dollars"), ["$1,299.00", "50 dollars"]);
        assert_eq!(spans("$ 200, or 1,000 US Dollars"), ["$ 200", "1,000 US Dollars"]);
        assert_eq!(spans("USD 75 and one dollar"), ["USD 75"]);
        assert_eq!(spans("a 30-hour battery, rated 4.5/5"), Vec::<&str>::new());
        assert_eq!(spans("around 200"), Vec::<&str>::new());
        assert_eq!(spans("$49.99."), ["$49.99"]);
    }

    #[test]
    fn word_list_matching() {
        let list = WordList::parse("# c\nbudget*\nprice range\nsave\n\n");
        assert_eq!(list.entries().len(), 3);
        let found: Vec<String> = list
            .find_all("Budget-conscious, my price  range; saves nothing, budgeting")
            .into_iter()
            .map(|m| m.text)
            .collect();
        assert_eq!(found, ["Budget", "price  range", "budgeting"]);
    }

    #[test]
    fn longest_entry_wins() {
        let list = WordList::parse("my budget\nwithin my budget");
        let (out, n) = list.replace_all("It is within my budget.", "[X]");
        assert_eq!(out, "It is [X].");
        assert_eq!(n, 1);
    }

    #[test]
    fn empty_list_matches_nothing() {
        let list = WordList::parse("# nothing\n");
        assert!(list.is_empty());
        assert!(list.find_all("anything").is_empty());
    }
}
