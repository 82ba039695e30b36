use super::{verify_redaction, RedactionReport, WordList, BUDGET_PHRASE_TOKEN, CURRENCY, PRICE_TOKEN};
use crate::model::{InferenceVariant, PackSet, Transcript, Turn};

/// Replaces currency amounts, then budget phrases, in one piece of text.
pub fn redact_dollars_text(text: &str, budget_phrases: &WordList) -> (String, usize) {
    let prices = CURRENCY.find_iter(text).count();
    let text = CURRENCY.replace_all(text, regex::NoExpand(PRICE_TOKEN));
    let (text, phrases) = budget_phrases.replace_all(&text, BUDGET_PHRASE_TOKEN);
    (text, prices + phrases)
}

/// Dollar-redacted copy of a transcript. Turn count, roles and every
/// unmatched byte are preserved.
pub fn redact_dollars(t: &Transcript, packs: &PackSet) -> (Transcript, RedactionReport) {
    let mut replacements = 0;
    let turns = t
        .turns
        .iter()
        .map(|turn| {
            let (text, n) = redact_dollars_text(&turn.text, &packs.budget_phrases);
            replacements += n;
            Turn {
                role: turn.role,
                text,
            }
        })
        .collect();
    let out = Transcript {
        turns,
        turn_limit_hit: t.turn_limit_hit,
    };
    let mut report = verify_redaction(&out, InferenceVariant::DollarRedacted, packs);
    report.replacements = replacements;
    report.passes = 1;
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_packs;

    fn one_turn(text: &str) -> Transcript {
        Transcript::new(vec![Turn::buyer(text)], false).unwrap()
    }

    #[test]
    fn replaces_amounts_and_phrases() {
        let packs = builtin_packs();
        let (out, report) = redact_dollars(&one_turn("priced at $49.99 today"), packs);
        assert_eq!(out.turns[0].text, "priced at [PRICE REDACTED] today");
        assert_eq!(report.replacements, 1);
        let (out, _) = redact_dollars(&one_turn("That is within my budget, about 50 dollars."), packs);
        assert_eq!(
            out.turns[0].text,
            "That is [BUDGET PHRASE REDACTED], about [PRICE REDACTED]."
        );
    }

    #[test]
    fn identity_without_amounts() {
        let t = one_turn("Which one would you recommend?");
        let (out, report) = redact_dollars(&t, builtin_packs());
        assert_eq!(out, t);
        assert_eq!(report.replacements, 0);
        assert!(report.is_clean());
    }

    #[test]
    fn idempotent() {
        let packs = builtin_packs();
        let (once, _) = redact_dollars(&one_turn("$1,299.00 or 50 dollars, my budget is tight"), packs);
        let (twice, report) = redact_dollars(&once, packs);
        assert_eq!(once, twice);
        assert_eq!(report.replacements, 0);
    }

    #[test]
    fn empty_transcript_passes_through() {
        let t = Transcript::default();
        let (out, report) = redact_dollars(&t, builtin_packs());
        assert!(out.is_empty());
        assert!(report.is_clean());
    }
}
