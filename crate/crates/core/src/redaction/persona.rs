use std::sync::Arc;

use super::{overlaps, protected_spans, verify_persona_against, RedactionReport, PERSONA_TOKEN};
use crate::agent::prompts::render_persona_redaction_prompt;
use crate::agent::{BackendError, CompletionBackend, Message, MessageRole, RetryPolicy};
use crate::error::Result;
use crate::model::{InferenceVariant, PackSet, Transcript, Turn};

/// Agent-backed persona redaction. A result that fails verification gets
/// one re-pass; if that also fails it is returned with its violations.
pub fn redact_persona(
    t: &Transcript,
    backend: &dyn CompletionBackend,
    packs: &PackSet,
    retry: &RetryPolicy,
    seed: u64,
) -> Result<(Transcript, RedactionReport)> {
    if t.is_empty() {
        let report = RedactionReport {
            variant: InferenceVariant::PersonaRedacted,
            replacements: 0,
            residual_violations: Vec::new(),
            passes: 0,
        };
        return Ok((t.clone(), report));
    }
    let system = render_persona_redaction_prompt(packs);
    let mut out = one_pass(t, backend, &system, retry, seed)?;
    let mut report = verify_persona_against(t, &out, packs);
    report.passes = 1;
    if !report.is_clean() {
        tracing::warn!(
            violations = report.residual_violations.len(),
            "persona redaction failed verification, re-running"
        );
        out = one_pass(&out, backend, &system, retry, seed)?;
        report = verify_persona_against(t, &out, packs);
        report.passes = 2;
    }
    let count = |t: &Transcript| -> usize {
        t.turns.iter().map(|x| x.text.matches(PERSONA_TOKEN).count()).sum()
    };
    report.replacements = count(&out).saturating_sub(count(t));
    Ok((out, report))
}

fn one_pass(
    input: &Transcript,
    backend: &dyn CompletionBackend,
    system: &str,
    retry: &RetryPolicy,
    seed: u64,
) -> Result<Transcript> {
    let history = [Message::user(input.to_marker_text())];
    let (turns, _) = retry.run(|_| {
        let raw = backend.complete(system, &history, seed)?;
        let parsed = Transcript::parse_marker_text(raw.trim())
            .map_err(|e| BackendError::Malformed(format!("redacted transcript: {e}")))?;
        let same_roles = parsed.turns.len() == input.turns.len()
            && parsed.turns.iter().zip(&input.turns).all(|(a, b)| a.role == b.role);
        if !same_roles {
            return Err(BackendError::Malformed(
                "redacted transcript changed the turn structure".into(),
            ));
        }
        Ok(parsed.turns)
    })?;
    Ok(Transcript {
        turns,
        turn_limit_hit: input.turn_limit_hit,
    })
}

/// Term-level persona redactor driven by the same lists the verifier uses.
/// Runs of adjacent matches collapse into one placeholder.
#[derive(Debug, Clone)]
pub struct ScriptedPersonaRedactor {
    packs: Arc<PackSet>,
}

impl ScriptedPersonaRedactor {
    pub fn new(packs: Arc<PackSet>) -> Self {
        ScriptedPersonaRedactor { packs }
    }

    pub fn redact_text(&self, text: &str) -> String {
        let names: Vec<String> = self.packs.catalog.products.iter().map(|p| p.name.clone()).collect();
        let protected = protected_spans(text, &names);
        let mut hits: Vec<(usize, usize)> = self
            .packs
            .persona_terms
            .find_all(text)
            .into_iter()
            .chain(self.packs.financial_stoplist.find_all(text))
            .filter(|m| !overlaps(&protected, m.start, m.end))
            .map(|m| (m.start, m.end))
            .collect();
        hits.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (s, e) in hits {
            if let Some(last) = merged.last_mut() {
                let gap = &text[last.1.min(s)..s];
                if s <= last.1 || gap.chars().all(|c| c.is_whitespace() || c == '-') {
                    last.1 = last.1.max(e);
                    continue;
                }
            }
            merged.push((s, e));
        }
        let mut out = String::with_capacity(text.len());
        let mut pos = 0;
        for (s, e) in merged {
            out.push_str(&text[pos..s]);
            out.push_str(PERSONA_TOKEN);
            pos = e;
        }
        out.push_str(&text[pos..]);
        out
    }
}

impl CompletionBackend for ScriptedPersonaRedactor {
    fn identity(&self) -> String {
        "scripted:persona-redactor".into()
    }

    fn complete(&self, _system: &str, history: &[Message], _seed: u64) -> Result<String, BackendError> {
        let input = history
            .iter()
            .rev()
            .find(|m| m.role == MessageRole::User)
            .ok_or_else(|| BackendError::Contract("no transcript to redact".into()))?;
        let t = Transcript::parse_marker_text(&input.content)
            .map_err(|e| BackendError::Contract(e.to_string()))?;
        let turns = t
            .turns
            .iter()
            .map(|turn| Turn {
                role: turn.role,
                text: self.redact_text(&turn.text),
            })
            .collect();
        Ok(Transcript {
            turns,
            turn_limit_hit: false,
        }
        .to_marker_text())
    }
}
