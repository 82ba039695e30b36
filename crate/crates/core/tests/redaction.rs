mod common;

use common::{corpus, packs, reference_currency_hits};
use leakage_core::agent::RetryPolicy;
use leakage_core::model::{InferenceVariant, Transcript};
use leakage_core::redaction::{redact_dollars, redact_persona, verify_redaction, ScriptedPersonaRedactor};

fn fixture(name: &str) -> Transcript {
    corpus().into_iter().find(|(n, _)| n == name).unwrap().1
}

#[test]
fn every_corpus_transcript_comes_out_clean() {
    let packs = packs();
    for (name, t) in corpus() {
        let (out, report) = redact_dollars(&t, &packs);
        assert!(report.is_clean(), "{name}: {:?}", report.residual_violations);
        assert!(verify_redaction(&out, InferenceVariant::DollarRedacted, &packs).is_clean(), "{name}");
        assert_eq!(out.turns.len(), t.turns.len(), "{name}");
        for (a, b) in t.turns.iter().zip(&out.turns) {
            assert_eq!(a.role, b.role);
            assert_eq!(reference_currency_hits(&b.text), 0, "{name}: {}", b.text);
        }
        let (again, r2) = redact_dollars(&out, &packs);
        assert_eq!(again, out, "{name}");
        assert_eq!(r2.replacements, 0);
    }
}

#[test]
fn commas_and_decimals_are_single_amounts() {
    let (out, report) = redact_dollars(&fixture("adv01_commas.txt"), &packs());
    assert_eq!(report.replacements, 4 + 1);
    assert!(!out.turns[0].text.contains("1,200") && !out.turns[0].text.contains(".50"));
    assert!(out.turns[1].text.contains("Zenith Audiophile Edition"));
}

#[test]
fn text_without_money_is_untouched() {
    let t = fixture("adv11_nomoney.txt");
    let (out, report) = redact_dollars(&t, &packs());
    assert_eq!(out, t);
    assert_eq!(report.replacements, 0);
}

#[test]
fn currency_codes_in_any_case() {
    let (out, _) = redact_dollars(&fixture("adv02_usd.txt"), &packs());
    let text = out.to_marker_text();
    for gone in ["USD 250", "USD250", "usd 150", "$249.99"] {
        assert!(!text.contains(gone), "{gone} survived in {text}");
    }
    assert!(text.contains("SonicElite ANC Max"));
}

#[test]
fn persona_redaction_keeps_redacted_openings_stable() {
    let packs = packs();
    let redactor = ScriptedPersonaRedactor::new(packs.clone());
    for cell in ["vp50", "vp100", "vp150", "vp200", "vp300", "vp500"] {
        let t = fixture(&format!("opening_{cell}.txt"));
        let (out, report) = redact_persona(&t, &redactor, &packs, &RetryPolicy::immediate(1), 7).unwrap();
        assert!(report.is_clean(), "{cell}: {:?}", report.residual_violations);
        assert_eq!(out.turns.len(), 1);
        let tokens = |s: &str| s.matches("[PERSONA REDACTED]").count();
        assert!(tokens(&out.turns[0].text) >= tokens(&t.turns[0].text), "{cell}");
        let (twice, _) = redact_persona(&out, &redactor, &packs, &RetryPolicy::immediate(1), 7).unwrap();
        assert_eq!(twice, out, "{cell}");
    }
}
