//! Transcript-only willingness-to-pay inference.

mod oracle;
mod parse;

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

pub use oracle::{scripted_oracle_inference, ScriptedOracle, GAGGED_PRIOR_DOLLARS};
pub use parse::{parse_inference_output, ParseError, ParsedRecord, MISSING_SIGNAL};

use crate::agent::prompts::render_inference_prompt;
use crate::agent::{BackendError, CompletionBackend, Message, RetryPolicy};
use crate::error::{Error, Result};
use crate::model::{InferenceReport, InferenceVariant, PackSet, Transcript};
use crate::redaction::find_currency_spans;

/// Estimates above this many dollars are kept but flagged.
pub const DEFAULT_CEILING_DOLLARS: i64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceSettings {
    pub ceiling_dollars: i64,
    pub retry: RetryPolicy,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        InferenceSettings {
            ceiling_dollars: DEFAULT_CEILING_DOLLARS,
            retry: RetryPolicy::default(),
        }
    }
}

/// The exact (system, user) pair the inference agent receives: the fixed
/// prompt and the transcript text, nothing else.
pub fn assemble_inference_input(t: &Transcript, packs: &PackSet) -> (String, String) {
    (render_inference_prompt(packs), t.to_marker_text())
}

/// Runs the inference agent on one transcript variant. Returns the report
/// and the number of retries used.
pub fn infer_wtp(
    t: &Transcript,
    variant: InferenceVariant,
    backend: &dyn CompletionBackend,
    packs: &PackSet,
    settings: &InferenceSettings,
    seed: u64,
) -> Result<(InferenceReport, u32)> {
    if t.is_empty() {
        return Err(Error::Validation("cannot infer from an empty transcript".into()));
    }
    if variant == InferenceVariant::DollarRedacted
        && t.turns.iter().any(|x| !find_currency_spans(&x.text).is_empty())
    {
        return Err(Error::Contract(
            "dollar-redacted inference input still contains currency amounts".into(),
        ));
    }
    let (system, user) = assemble_inference_input(t, packs);
    let history = [Message::user(user)];
    let last_parse: RefCell<Option<ParseError>> = RefCell::new(None);
    let result = settings.retry.run(|_| {
        let raw = backend.complete(&system, &history, seed)?;
        match parse_inference_output(&raw) {
            Ok(rec) => Ok((rec, raw)),
            Err(e) => {
                let msg = e.reason.clone();
                *last_parse.borrow_mut() = Some(e);
                Err(BackendError::Malformed(msg))
            }
        }
    });
    match result {
        Ok(((rec, raw), retries)) => Ok((
            InferenceReport {
                estimate: rec.estimate,
                confidence: rec.confidence,
                key_signals: rec.key_signals,
                variant,
                raw,
                signals_adjusted: rec.signals_adjusted,
                above_ceiling: rec.estimate > settings.ceiling_dollars,
            },
            retries,
        )),
        Err(BackendError::Exhausted { last, .. }) if matches!(*last, BackendError::Malformed(_)) => {
            match last_parse.into_inner() {
                Some(e) => Err(Error::Parse(e)),
                None => Err(Error::Backend(BackendError::Malformed(last.to_string()))),
            }
        }
        Err(e) => Err(Error::Backend(e)),
    }
}
