use std::collections::BTreeMap;

use super::{
    find_currency_spans, overlaps, protected_spans, RedactionReport, Violation, ViolationKind,
};
use crate::model::{InferenceVariant, PackSet, Role, Transcript};

/// Scans a redacted transcript for anything the variant should have removed.
/// Violations are reported, never raised. The full variant has no rules.
pub fn verify_redaction(t: &Transcript, variant: InferenceVariant, packs: &PackSet) -> RedactionReport {
    let residual_violations = match variant {
        InferenceVariant::Full => Vec::new(),
        InferenceVariant::DollarRedacted => dollar_violations(t, packs),
        InferenceVariant::PersonaRedacted => persona_violations(t, packs),
    };
    RedactionReport {
        variant,
        replacements: 0,
        residual_violations,
        passes: 0,
    }
}

fn dollar_violations(t: &Transcript, packs: &PackSet) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, turn) in t.turns.iter().enumerate() {
        for (s, e) in find_currency_spans(&turn.text) {
            out.push(Violation {
                turn: i,
                span: turn.text[s..e].to_string(),
                kind: ViolationKind::Currency,
            });
        }
        for m in packs.budget_phrases.find_all(&turn.text) {
            out.push(Violation {
                turn: i,
                span: m.text,
                kind: ViolationKind::BudgetPhrase,
            });
        }
    }
    out
}

fn product_names(packs: &PackSet) -> Vec<String> {
    packs.catalog.products.iter().map(|p| p.name.clone()).collect()
}

/// Financial-register words in buyer turns and identity terms in any turn,
/// ignoring product names, prices and redaction tokens.
fn persona_violations(t: &Transcript, packs: &PackSet) -> Vec<Violation> {
    let names = product_names(packs);
    let mut out = Vec::new();
    for (i, turn) in t.turns.iter().enumerate() {
        let protected = protected_spans(&turn.text, &names);
        let mut found: Vec<(usize, Violation)> = Vec::new();
        if turn.role == Role::Buyer {
            for m in packs.financial_stoplist.find_all(&turn.text) {
                if !overlaps(&protected, m.start, m.end) {
                    found.push((
                        m.start,
                        Violation {
                            turn: i,
                            span: m.text,
                            kind: ViolationKind::FinancialWord,
                        },
                    ));
                }
            }
        }
        for m in packs.persona_terms.find_all(&turn.text) {
            if !overlaps(&protected, m.start, m.end) {
                found.push((
                    m.start,
                    Violation {
                        turn: i,
                        span: m.text,
                        kind: ViolationKind::PersonaTerm,
                    },
                ));
            }
        }
        found.sort_by_key(|(pos, _)| *pos);
        out.extend(found.into_iter().map(|(_, v)| v));
    }
    out
}

fn token_counts(text: &str, names: &[String]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for (s, e) in find_currency_spans(text) {
        *counts.entry(text[s..e].to_string()).or_default() += 1;
    }
    for name in names {
        let n = text.matches(name.as_str()).count();
        if n > 0 {
            *counts.entry(name.clone()).or_default() += n;
        }
    }
    counts
}

/// Persona verification of `output` plus the preservation rules relative to
/// `input`: same role sequence, and every product name and price token of
/// each input turn still present in the matching output turn.
pub fn verify_persona_against(input: &Transcript, output: &Transcript, packs: &PackSet) -> RedactionReport {
    let mut report = verify_redaction(output, InferenceVariant::PersonaRedacted, packs);
    let roles = |t: &Transcript| t.turns.iter().map(|x| x.role).collect::<Vec<_>>();
    if roles(input) != roles(output) {
        report.residual_violations.push(Violation {
            turn: input.turns.len().min(output.turns.len()),
            span: format!(
                "{} turns in, {} turns out",
                input.turns.len(),
                output.turns.len()
            ),
            kind: ViolationKind::Structure,
        });
        return report;
    }
    let names = product_names(packs);
    for (i, (a, b)) in input.turns.iter().zip(&output.turns).enumerate() {
        let kept = token_counts(&b.text, &names);
        for (token, n) in token_counts(&a.text, &names) {
            if kept.get(&token).copied().unwrap_or(0) < n {
                report.residual_violations.push(Violation {
                    turn: i,
                    span: token,
                    kind: ViolationKind::Dropped,
                });
            }
        }
    }
    report
}
