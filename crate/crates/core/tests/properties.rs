mod common;

use std::collections::BTreeMap;

use common::*;
use leakage_core::model::{Transcript, Turn};
use leakage_core::redaction::{find_currency_spans, redact_dollars, redact_dollars_text};
use leakage_core::stats::{bootstrap_slope, ols_slope, spearman_rho, summarize_cells, CellData};
use proptest::prelude::*;

fn fragment() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-tv-zA-TV-Z]{1,8}",
        Just("my budget".to_string()),
        Just("Within my budget".to_string()),
        Just("price range".to_string()),
        Just("SonicElite ANC Max".to_string()),
        (1u32..100_000).prop_map(|n| format!("${n}")),
        (1u32..1000, 0u32..100).prop_map(|(a, b)| format!("${a}.{b:02}")),
        (1u32..1000).prop_map(|n| format!("USD {n}")),
        (1u32..1000).prop_map(|n| format!("{n} dollars")),
        (1u32..100, 0u32..1000).prop_map(|(a, b)| format!("${a},{b:03}")),
        Just("[PRICE REDACTED]".to_string()),
        "[0-9]{1,4}",
        "[ ,.!?()-]{1,2}",
    ]
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(fragment(), 1..12).prop_map(|v| v.join(" "))
}

fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((1.0f64..1000.0, -500.0f64..2000.0), 2..30)
}

proptest! {
    #[test]
    fn dollar_redaction_is_idempotent_and_complete(text in sentence()) {
        let packs = packs();
        let (once, _) = redact_dollars_text(&text, &packs.budget_phrases);
        let (twice, n) = redact_dollars_text(&once, &packs.budget_phrases);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(n, 0);
        prop_assert!(find_currency_spans(&once).is_empty());
        prop_assert_eq!(reference_currency_hits(&once), 0);
        prop_assert!(packs.budget_phrases.find_all(&once).is_empty());
    }

    #[test]
    fn currency_scanner_agrees_with_reference(text in sentence()) {
        prop_assert_eq!(find_currency_spans(&text).len(), reference_currency_hits(&text));
    }

    #[test]
    fn transcript_round_trip(turns in prop::collection::vec("[a-zA-Z0-9$,.!? ]{1,40}( [a-z]{1,10}){0,3}", 1..8)) {
        let turns: Vec<Turn> = turns
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.trim().is_empty())
            .map(|(i, t)| if i % 2 == 0 { Turn::buyer(t.trim()) } else { Turn::seller(t.trim()) })
            .collect();
        prop_assume!(turns.iter().enumerate().all(|(i, t)| (i % 2 == 0) == (t.role == leakage_core::model::Role::Buyer)));
        prop_assume!(!turns.is_empty());
        let t = Transcript::new(turns, false).unwrap();
        prop_assert_eq!(Transcript::parse_marker_text(&t.to_marker_text()).unwrap(), t.clone());
        let (r, _) = redact_dollars(&t, &packs());
        prop_assert_eq!(r.turns.len(), t.turns.len());
    }

    #[test]
    fn slope_is_affine_equivariant(pts in points(), a in -100.0f64..100.0, b in 0.1f64..10.0) {
        let Ok(s) = ols_slope(&pts) else { return Ok(()) };
        let shifted: Vec<_> = pts.iter().map(|&(x, y)| (x, a + b * y)).collect();
        let scaled_x: Vec<_> = pts.iter().map(|&(x, y)| (b * x, y)).collect();
        prop_assert!((ols_slope(&shifted).unwrap() - b * s).abs() <= 1e-7 * (1.0 + s.abs() * b));
        prop_assert!((ols_slope(&scaled_x).unwrap() - s / b).abs() <= 1e-7 * (1.0 + s.abs() / b));
        let reference = reference_slope(&pts).unwrap();
        prop_assert!((s - reference).abs() <= 1e-9 * (1.0 + s.abs()));
    }

    #[test]
    fn slope_ignores_point_order(mut pts in points(), seed in any::<u64>()) {
        let Ok(s) = ols_slope(&pts) else { return Ok(()) };
        let n = pts.len();
        pts.rotate_left((seed as usize) % n);
        prop_assert!((ols_slope(&pts).unwrap() - s).abs() <= 1e-9 * (1.0 + s.abs()));
    }

    #[test]
    fn spearman_is_rank_invariant(pts in points()) {
        let Ok(r) = spearman_rho(&pts) else { return Ok(()) };
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        let warped: Vec<_> = pts.iter().map(|&(x, y)| (x.ln(), y * y * y + 3.0 * y)).collect();
        prop_assert!((spearman_rho(&warped).unwrap() - r).abs() < 1e-9);
        let reference = reference_spearman(&pts).unwrap();
        prop_assert!((r - reference).abs() < 1e-9);
    }

    #[test]
    fn summaries_ignore_estimate_order(est in prop::collection::vec((0usize..4, 1u32..1000), 4..60)) {
        let targets: BTreeMap<String, f64> = (0..4).map(|i| (format!("c{i}"), 40.0 * (i + 1) as f64)).collect();
        let mut pairs: Vec<(String, f64)> = est.iter().map(|&(c, e)| (format!("c{c}"), e as f64)).collect();
        prop_assume!((0..4).all(|i| pairs.iter().any(|(c, _)| c == &format!("c{i}"))));
        let a = summarize_cells(&pairs, &targets).unwrap();
        pairs.reverse();
        let b = summarize_cells(&pairs, &targets).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.cell_id, &y.cell_id);
            prop_assert!((x.mean_estimate - y.mean_estimate).abs() < 1e-9);
            prop_assert_eq!(x.within_25_count, y.within_25_count);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bootstrap_ci_brackets_and_repeats(means in prop::collection::vec(0.0f64..500.0, 3), seed in any::<u64>()) {
        let cells: Vec<CellData> = [50.0, 150.0, 300.0]
            .iter()
            .zip(&means)
            .map(|(&t, &m)| CellData::new(format!("c{t}"), t, vec![m - 10.0, m, m + 25.0, m + 3.0]))
            .collect();
        let a = bootstrap_slope(&cells, 200, seed).unwrap();
        let b = bootstrap_slope(&cells, 200, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.ci_low <= a.ci_high);
        prop_assert!(a.width() >= 0.0);
    }
}
