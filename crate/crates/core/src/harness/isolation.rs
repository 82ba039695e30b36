//! Checks that the inference agent sees the dialogue and nothing else.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::infer::applies;
use super::manifest::{RunManifest, RunStatus};
use super::store::{load_transcript, load_trial, RunDir};
use crate::agent::prompts::render_inference_prompt;
use crate::agent::{BackendError, CompletionBackend, Message};
use crate::error::Result;
use crate::model::{InferenceVariant, PackSet, Transcript, TrialLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationViolation {
    pub trial_id: String,
    pub variant: InferenceVariant,
    pub what: String,
}

fn contains_amount(text: &str, dollars: &str) -> bool {
    let needle = format!("${dollars}");
    text.match_indices(&needle).any(|(i, _)| {
        let rest = &text[i + needle.len()..];
        !rest.starts_with(|c: char| c.is_ascii_digit() || c == ',')
            && !(rest.starts_with('.') && rest[1..].starts_with(|c: char| c.is_ascii_digit()))
    })
}

/// Text fragments from the packs that must only reach the inference agent
/// by way of the dialogue.
fn pack_snippets(packs: &PackSet) -> Vec<String> {
    let mut out = Vec::new();
    for p in &packs.catalog.products {
        out.extend([p.name.clone(), p.features.clone(), p.tier.clone(), p.price.to_string()]);
    }
    out.extend(
        packs
            .standard
            .profiles
            .iter()
            .chain(&packs.stripped.profiles)
            .chain(&packs.factorial.profiles)
            .map(|p| p.description.clone()),
    );
    out.push(packs.numeric.privacy_directive.clone());
    out.push(packs.prompts.customer_preamble.clone());
    out.retain(|s| !s.trim().is_empty());
    out
}

/// Problems with one assembled inference input. `dialogue` is the
/// transcript the trial actually produced, before any redaction.
pub fn check_input(
    system: &str,
    user: &str,
    shown: &Transcript,
    dialogue: &Transcript,
    label: &TrialLabel,
    packs: &PackSet,
) -> Vec<String> {
    let mut problems = Vec::new();
    if system != render_inference_prompt(packs) {
        problems.push("system prompt differs from the fixed inference prompt".into());
    }
    if user != shown.to_marker_text() {
        problems.push("user message is not exactly the transcript text".into());
    }
    let input = format!("{system}\n{user}");
    let mut values = vec![
        ("trial_id", label.trial_id.clone()),
        ("cell_id", label.cell_id.clone()),
        ("seed", label.seed.to_string()),
    ];
    if let Some(p) = &label.profile_id {
        values.push(("profile_id", p.clone()));
    }
    for (field, value) in values {
        if input.contains(&value) {
            problems.push(format!("label field {field} value `{value}` in input"));
        }
    }
    let dialogue_text = dialogue.to_marker_text();
    let target = label.target_wtp.whole_dollars().to_string();
    if contains_amount(&input, &target) && !contains_amount(&dialogue_text, &target) {
        problems.push(format!("target amount ${target} in input but not in dialogue"));
    }
    for snippet in pack_snippets(packs) {
        if input.contains(&snippet) && !dialogue_text.contains(&snippet) {
            let short: String = snippet.chars().take(40).collect();
            problems.push(format!("pack text `{short}` in input but not in dialogue"));
        }
    }
    problems
}

/// Re-assembles the inference input of every completed trial and variant
/// in a run and checks it.
pub fn scan_run(dir: &RunDir, variants: &[InferenceVariant], packs: &PackSet) -> Result<Vec<IsolationViolation>> {
    let manifest = RunManifest::load(dir)?;
    let system = render_inference_prompt(packs);
    let mut out = Vec::new();
    for id in manifest.with_status(RunStatus::Complete) {
        let (dialogue, sidecar) = load_trial(dir, id)?;
        for &v in variants {
            if !applies(v, sidecar.label.condition) {
                continue;
            }
            let path = dir.variant_path(id, v);
            if !path.exists() {
                continue;
            }
            let shown = load_transcript(&path)?;
            let (sys, user) = crate::inference::assemble_inference_input(&shown, packs);
            let mut problems = check_input(&sys, &user, &shown, &dialogue, &sidecar.label, packs);
            if sys != system {
                problems.push("inference prompt changed between trials".into());
            }
            out.extend(problems.into_iter().map(|what| IsolationViolation {
                trial_id: id.to_string(),
                variant: v,
                what,
            }));
        }
    }
    Ok(out)
}

/// Wraps a backend and keeps every (system, history) pair it is sent.
pub struct RecordingBackend<B> {
    inner: B,
    calls: Mutex<Vec<(String, Vec<Message>)>>,
}

impl<B> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<(String, Vec<Message>)> {
        self.calls.lock().expect("recorder lock").clone()
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn complete(&self, system: &str, history: &[Message], seed: u64) -> std::result::Result<String, BackendError> {
        self.calls
            .lock()
            .expect("recorder lock")
            .push((system.to_string(), history.to_vec()));
        self.inner.complete(system, history, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_packs, Condition, Scaffold, TrialStatus, Turn};
    use crate::money::Cents;

    fn label() -> TrialLabel {
        TrialLabel {
            trial_id: "numeric_np_200_v1A_t004".into(),
            condition: Condition::Numeric,
            cell_id: "np_200".into(),
            target_wtp: Cents(20000),
            profile_id: None,
            variant: 1,
            scaffold: Scaffold::A,
            trial_number: 4,
            seed: 987654321,
            status: TrialStatus::Complete,
        }
    }

    #[test]
    fn amount_matching() {
        assert!(contains_amount("budget is $200.", "200"));
        assert!(!contains_amount("costs $2000", "200"));
        assert!(!contains_amount("costs $200.99", "200"));
        assert!(!contains_amount("costs $200,000", "200"));
    }

    #[test]
    fn clean_input_passes_and_leaks_are_caught() {
        let packs = builtin_packs();
        let t = Transcript::new(vec![Turn::buyer("Hi, what do you have?")], false).unwrap();
        let (sys, user) = crate::inference::assemble_inference_input(&t, packs);
        assert!(check_input(&sys, &user, &t, &t, &label(), packs).is_empty());

        let leaky = format!("{user}\nbudget: $200 (np_200)");
        let problems = check_input(&sys, &leaky, &t, &t, &label(), packs);
        assert!(problems.iter().any(|p| p.contains("cell_id")));
        assert!(problems.iter().any(|p| p.contains("target amount")));

        let with_catalog = format!("{sys}\n{}", packs.catalog.products[0].features);
        let problems = check_input(&with_catalog, &user, &t, &t, &label(), packs);
        assert!(problems.iter().any(|p| p.contains("pack text")));
    }
}
