#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use leakage_core::agent::{run_dialogue, DialogueLimits, DialogueSetup, ScriptedBuyer, ScriptedSeller};
use leakage_core::model::{builtin_packs, Design, ExperimentPlan, PackSet, Transcript};

pub fn packs() -> Arc<PackSet> {
    Arc::new(builtin_packs().clone())
}

/// Hand-written fixtures plus 30 scripted dialogues (15 verbal, 15 numeric).
pub fn corpus() -> Vec<(String, Transcript)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    let mut out: Vec<(String, Transcript)> = files
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).unwrap();
            let t = Transcript::parse_marker_text(text.trim_end())
                .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p.file_name().unwrap().to_string_lossy().into_owned(), t)
        })
        .collect();
    let packs = packs();
    let buyer = ScriptedBuyer::new(packs.clone());
    let seller = ScriptedSeller::new(packs.catalog.products.clone());
    let plan = ExperimentPlan::build(&packs, Design::Main, 3, 99).unwrap();
    let mut verbal = 0;
    let mut numeric = 0;
    for trial in &plan.trials {
        let is_numeric = trial.condition == leakage_core::model::Condition::Numeric;
        let slot = if is_numeric { &mut numeric } else { &mut verbal };
        if *slot == 15 {
            continue;
        }
        *slot += 1;
        let setup = DialogueSetup::new(&packs, &packs.instruction_for(trial).unwrap(), DialogueLimits::default()).unwrap();
        let t = run_dialogue(&setup, &buyer, &seller, trial.seed).unwrap().transcript;
        out.push((trial.trial_id.clone(), t));
    }
    out
}

/// Independent, character-level currency scanner: a `$` or `USD` followed
/// by a digit, or a number followed by `dollar`/`US dollar`.
pub fn reference_currency_hits(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let lower: Vec<char> = text.to_lowercase().chars().collect();
    assert_eq!(chars.len(), lower.len(), "non-ascii case mapping in fixture");
    let skip_ws = |mut i: usize| {
        while i < chars.len() && chars[i] == ' ' {
            i += 1;
        }
        i
    };
    let word_at = |i: usize, w: &str| -> bool {
        let w: Vec<char> = w.chars().collect();
        i + w.len() <= lower.len() && lower[i..i + w.len()] == w[..]
    };
    let mut hits = 0;
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '$' {
            let j = skip_ws(i + 1);
            if j < chars.len() && chars[j].is_ascii_digit() {
                hits += 1;
            }
        } else if word_at(i, "usd") && (i == 0 || !chars[i - 1].is_alphanumeric()) {
            let j = skip_ws(i + 3);
            if j < chars.len() && chars[j].is_ascii_digit() {
                hits += 1;
            }
        } else if chars[i].is_ascii_digit() && (i == 0 || !chars[i - 1].is_ascii_digit() && chars[i - 1] != ',' && chars[i - 1] != '.') {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == ',' || chars[j] == '.') {
                j += 1;
            }
            let mut k = skip_ws(j);
            if word_at(k, "us ") {
                k = skip_ws(k + 3);
            }
            if word_at(k, "dollar") {
                hits += 1;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    hits
}

pub fn reference_mean(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in xs {
        s += x;
    }
    s / xs.len() as f64
}

/// Slope from the normal equations solved by Cramer's rule.
pub fn reference_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-9 * n * sxx.max(1.0) {
        return None;
    }
    Some((n * sxy - sx * sy) / det)
}

/// Rank = 1 + number of smaller values + half the number of other equal ones.
pub fn reference_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let less = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn reference_pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let ma = reference_mean(a);
    let mb = reference_mean(b);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    if da == 0.0 || db == 0.0 {
        return None;
    }
    Some(num / (da * db).sqrt())
}

pub fn reference_spearman(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    reference_pearson(&reference_ranks(&xs), &reference_ranks(&ys))
}

/// (mean, mae, within-25 count, n) per cell.
pub fn reference_summary(
    estimates: &[(String, f64)],
    targets: &BTreeMap<String, f64>,
) -> BTreeMap<String, (f64, f64, usize, usize)> {
    let mut out = BTreeMap::new();
    for (cell, &t) in targets {
        let xs: Vec<f64> = estimates.iter().filter(|(c, _)| c == cell).map(|(_, e)| *e).collect();
        let mae = xs.iter().map(|e| (e - t).abs()).sum::<f64>() / xs.len() as f64;
        let within = xs.iter().filter(|&&e| e >= 0.75 * t && e <= 1.25 * t).count();
        out.insert(cell.clone(), (reference_mean(&xs), mae, within, xs.len()));
    }
    out
}
