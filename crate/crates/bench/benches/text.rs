use criterion::{criterion_group, criterion_main, Criterion};
use leakage_bench::priced_transcript;
use leakage_core::model::{builtin_packs, InferenceVariant, Transcript};
use leakage_core::redaction::{find_currency_spans, redact_dollars, verify_redaction};
use std::hint::black_box;

fn redaction(c: &mut Criterion) {
    let packs = builtin_packs();
    let t = priced_transcript(20);
    let text = t.to_marker_text();
    c.bench_function("currency_scan", |b| b.iter(|| find_currency_spans(black_box(&text))));
    c.bench_function("redact_dollars", |b| b.iter(|| redact_dollars(black_box(&t), packs)));
    let (clean, _) = redact_dollars(&t, packs);
    c.bench_function("verify_dollar_redacted", |b| {
        b.iter(|| verify_redaction(black_box(&clean), InferenceVariant::DollarRedacted, packs))
    });
    c.bench_function("parse_marker_text", |b| b.iter(|| Transcript::parse_marker_text(black_box(&text)).unwrap()));
}

criterion_group!(benches, redaction);
criterion_main!(benches);
