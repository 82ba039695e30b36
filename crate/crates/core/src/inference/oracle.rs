//! Decoder for transcripts produced by the scripted buyer families.

use serde_json::json;

use crate::agent::scripted::{GAGGED_OPENINGS, SELLER_DISCOUNT_PERCENT};
use crate::agent::{BackendError, CompletionBackend, Message, MessageRole};
use crate::error::{Error, Result};
use crate::model::{Confidence, InferenceReport, InferenceVariant, Product, Role, Transcript};
use crate::money::Cents;

/// Estimate returned for every privacy-gagged transcript.
pub const GAGGED_PRIOR_DOLLARS: i64 = 185;

struct Decoded {
    estimate: i64,
    confidence: Confidence,
    signals: [String; 3],
}

fn find_product<'a>(catalog: &'a [Product], text: &str, pattern: impl Fn(&str) -> String) -> Option<&'a Product> {
    // Longest name first so no name shadows another it contains.
    let mut by_len: Vec<&Product> = catalog.iter().collect();
    by_len.sort_by_key(|p| std::cmp::Reverse(p.name.len()));
    by_len.into_iter().find(|p| text.contains(&pattern(&p.name)))
}

fn decode(t: &Transcript, catalog: &[Product]) -> Result<Decoded> {
    let buyer: Vec<&str> = t
        .turns
        .iter()
        .filter(|x| x.role == Role::Buyer)
        .map(|x| x.text.as_str())
        .collect();
    let first = buyer
        .first()
        .ok_or_else(|| Error::Validation("transcript has no buyer turn".into()))?;
    if GAGGED_OPENINGS.contains(first) {
        return Ok(Decoded {
            estimate: GAGGED_PRIOR_DOLLARS,
            confidence: Confidence::Low,
            signals: [
                "no personal context given".into(),
                "questions stay generic".into(),
                "no reaction to any price".into(),
            ],
        });
    }
    let all = buyer.join("\n");
    let chosen = find_product(catalog, &all, |n| format!("I'll take the {n}"))
        .ok_or_else(|| Error::Data("unrecognized dialect: no scripted purchase decision".into()))?;
    let with_discount = all.contains(&format!("I'll take the {} with the discount", chosen.name));
    let floor = if with_discount {
        chosen.price.discounted(SELLER_DISCOUNT_PERCENT)
    } else {
        chosen.price
    };
    let discounted_objection = find_product(catalog, &all, |n| {
        format!("even with the discount, the {n} is more than I want")
    });
    let objection = discounted_objection
        .map(|p| (p, p.price.discounted(SELLER_DISCOUNT_PERCENT)))
        .or_else(|| {
            find_product(catalog, &all, |n| format!("the {n} is more than I want")).map(|p| (p, p.price))
        });
    let (estimate, confidence, second) = match objection {
        Some((p, ceiling)) => (
            Cents((floor.0 + ceiling.0) / 2),
            Confidence::High,
            format!("balked at the {}", p.name),
        ),
        None => (Cents(floor.0 * 5 / 4), Confidence::Medium, "no price objection".to_string()),
    };
    let third = if with_discount {
        "asked for a discount".to_string()
    } else {
        "paid the list price".to_string()
    };
    Ok(Decoded {
        estimate: estimate.whole_dollars(),
        confidence,
        signals: [format!("chose the {}", chosen.name), second, third],
    })
}

fn record_json(d: &Decoded) -> String {
    json!({
        "estimate": d.estimate,
        "confidence": d.confidence,
        "key_signals": d.signals,
    })
    .to_string()
}

/// Decodes a scripted transcript. Role-coherent transcripts map back to
/// the price band of the tiers they engaged; gagged ones get the prior.
pub fn scripted_oracle_inference(
    t: &Transcript,
    catalog: &[Product],
    variant: InferenceVariant,
) -> Result<InferenceReport> {
    let d = decode(t, catalog)?;
    Ok(InferenceReport {
        estimate: d.estimate,
        confidence: d.confidence,
        raw: record_json(&d),
        key_signals: d.signals,
        variant,
        signals_adjusted: false,
        above_ceiling: false,
    })
}

/// The oracle as an inference backend. It reads the transcript from the
/// user message exactly as a remote model would.
#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    catalog: Vec<Product>,
}

impl ScriptedOracle {
    pub fn new(catalog: Vec<Product>) -> Self {
        ScriptedOracle { catalog }
    }
}

impl CompletionBackend for ScriptedOracle {
    fn identity(&self) -> String {
        "scripted:oracle-inference".into()
    }

    fn complete(&self, _system: &str, history: &[Message], _seed: u64) -> std::result::Result<String, BackendError> {
        let input = history
            .iter()
            .rev()
            .find(|m| m.role == MessageRole::User)
            .ok_or_else(|| BackendError::Contract("no transcript given".into()))?;
        let t = Transcript::parse_marker_text(&input.content)
            .map_err(|e| BackendError::Contract(e.to_string()))?;
        let d = decode(&t, &self.catalog).map_err(|e| BackendError::Contract(e.to_string()))?;
        Ok(record_json(&d))
    }
}
