//! The bounded buyer-seller dialogue loop.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{BackendError, CompletionBackend, Message, RetryPolicy};
use super::prompts::{render_buyer_prompt_with, render_seller_prompt, BuyerPromptOptions};
use crate::error::{Error, Result};
use crate::model::{Instruction, PackSet, Role, Transcript, Turn};

/// Commitment phrases that end a dialogue when a buyer turn contains one.
pub const DECISION_MARKERS: [&str; 4] = ["i'll take", "i'll go with", "i'd like to buy", "let's do the"];

pub const EXPLICIT_DECISION_MARKER: &str = "DECISION:";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DialogueLimits {
    pub max_buyer_turns: u32,
    #[serde(with = "secs")]
    pub per_call_timeout: Duration,
    pub max_retries: u32,
    /// Completions longer than this many characters are truncated.
    pub max_turn_chars: usize,
}

impl Default for DialogueLimits {
    fn default() -> Self {
        DialogueLimits {
            max_buyer_turns: 4,
            per_call_timeout: Duration::from_secs(120),
            max_retries: 3,
            max_turn_chars: 4000,
        }
    }
}

/// True iff the buyer turn contains a commitment phrase (case-insensitive).
pub fn detect_purchase_decision(buyer_turn: &str) -> bool {
    let lower = normalize_apostrophes(buyer_turn).to_lowercase();
    DECISION_MARKERS.iter().any(|m| lower.contains(m))
}

fn normalize_apostrophes(s: &str) -> String {
    s.replace(['\u{2019}', '\u{2018}'], "'")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRule {
    /// Also treat a turn containing `DECISION:` as a decision.
    pub honor_explicit_marker: bool,
}

impl DecisionRule {
    pub fn detect(&self, buyer_turn: &str) -> bool {
        detect_purchase_decision(buyer_turn)
            || (self.honor_explicit_marker && buyer_turn.contains(EXPLICIT_DECISION_MARKER))
    }
}

/// Everything a dialogue needs besides the backends.
#[derive(Debug, Clone)]
pub struct DialogueSetup {
    pub buyer_system: String,
    pub seller_system: String,
    pub limits: DialogueLimits,
    pub decision: DecisionRule,
    pub retry: RetryPolicy,
}

impl DialogueSetup {
    pub fn new(packs: &PackSet, instruction: &Instruction, limits: DialogueLimits) -> Result<Self> {
        Self::with_rule(packs, instruction, limits, DecisionRule::default())
    }

    pub fn with_rule(
        packs: &PackSet,
        instruction: &Instruction,
        limits: DialogueLimits,
        decision: DecisionRule,
    ) -> Result<Self> {
        let options = BuyerPromptOptions {
            decision_marker: decision.honor_explicit_marker,
        };
        Ok(DialogueSetup {
            buyer_system: render_buyer_prompt_with(packs, instruction, options),
            seller_system: render_seller_prompt(packs, &packs.catalog.products)?,
            limits,
            decision,
            retry: RetryPolicy::immediate(limits.max_retries),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = RetryPolicy {
            max_retries: self.limits.max_retries,
            ..retry
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueOutcome {
    pub transcript: Transcript,
    /// Indices of turns cut at `max_turn_chars`.
    pub truncated_turns: Vec<usize>,
    pub retries: u32,
}

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("invalid dialogue limits: {0}")]
    Limits(String),
    #[error("{role:?} backend failed at turn {turn}: {source}")]
    Backend {
        role: Role,
        turn: usize,
        #[source]
        source: BackendError,
    },
}

impl From<DialogueError> for Error {
    fn from(e: DialogueError) -> Self {
        match e {
            DialogueError::Limits(msg) => Error::Validation(msg),
            DialogueError::Backend { source, .. } => Error::Backend(source),
        }
    }
}

/// Runs buyer and seller in alternation, buyer first, until the buyer
/// commits to a purchase or uses its last turn.
pub fn run_dialogue(
    setup: &DialogueSetup,
    buyer: &dyn CompletionBackend,
    seller: &dyn CompletionBackend,
    seed: u64,
) -> Result<DialogueOutcome, DialogueError> {
    let limits = &setup.limits;
    if limits.max_buyer_turns < 1 {
        return Err(DialogueError::Limits("max_buyer_turns must be at least 1".into()));
    }
    if limits.max_turn_chars < 1 {
        return Err(DialogueError::Limits("max_turn_chars must be at least 1".into()));
    }
    let mut turns: Vec<Turn> = Vec::new();
    let mut truncated = Vec::new();
    let mut retries = 0;
    let mut decided = false;

    for buyer_turn in 1..=limits.max_buyer_turns {
        let text = next_turn(setup, buyer, Role::Buyer, &setup.buyer_system, &turns, seed)
            .map_err(|(source, r)| {
                retries += r;
                DialogueError::Backend {
                    role: Role::Buyer,
                    turn: turns.len(),
                    source,
                }
            })?;
        retries += text.retries;
        if text.truncated {
            truncated.push(turns.len());
        }
        decided = setup.decision.detect(&text.text);
        turns.push(Turn::buyer(text.text));
        if decided || buyer_turn == limits.max_buyer_turns {
            break;
        }

        let text = next_turn(setup, seller, Role::Seller, &setup.seller_system, &turns, seed)
            .map_err(|(source, _)| DialogueError::Backend {
                role: Role::Seller,
                turn: turns.len(),
                source,
            })?;
        retries += text.retries;
        if text.truncated {
            truncated.push(turns.len());
        }
        turns.push(Turn::seller(text.text));
    }

    let transcript = Transcript {
        turns,
        turn_limit_hit: !decided,
    };
    debug_assert!(transcript.validate().is_ok());
    Ok(DialogueOutcome {
        transcript,
        truncated_turns: truncated,
        retries,
    })
}

struct CleanTurn {
    text: String,
    truncated: bool,
    retries: u32,
}

/// Conversation as seen by `speaker`: its own turns are assistant messages.
pub fn history_for(speaker: Role, turns: &[Turn]) -> Vec<Message> {
    turns
        .iter()
        .map(|t| {
            if t.role == speaker {
                Message::assistant(t.text.clone())
            } else {
                Message::user(t.text.clone())
            }
        })
        .collect()
}

fn next_turn(
    setup: &DialogueSetup,
    backend: &dyn CompletionBackend,
    speaker: Role,
    system: &str,
    turns: &[Turn],
    seed: u64,
) -> Result<CleanTurn, (BackendError, u32)> {
    let history = history_for(speaker, turns);
    let ((text, truncated), retries) = setup
        .retry
        .run(|_| {
            let raw = backend.complete(system, &history, seed)?;
            let clean = sanitize_completion(&raw, speaker);
            if clean.is_empty() {
                return Err(BackendError::Empty);
            }
            Ok(truncate_chars(&clean, setup.limits.max_turn_chars))
        })
        .map_err(|e| (e, setup.retry.max_retries))?;
    Ok(CleanTurn {
        text,
        truncated,
        retries,
    })
}

/// Trims a completion, drops an echoed role marker, and defuses lines that
/// would read as a new turn in the transcript file.
pub fn sanitize_completion(raw: &str, speaker: Role) -> String {
    let mut text = raw.trim();
    for prefix in [speaker.marker(), &format!("{}:", speaker.marker())] {
        if let Some(rest) = text.strip_prefix(prefix) {
            text = rest.trim_start_matches(':').trim();
        }
    }
    let lines: Vec<String> = text
        .lines()
        .map(|line| {
            if line.starts_with(Role::Buyer.marker()) || line.starts_with(Role::Seller.marker()) {
                // "[BUYER] x" becomes "(BUYER) x"
                format!("({}", &line[1..]).replacen(']', ")", 1)
            } else {
                line.trim_end().to_string()
            }
        })
        .collect();
    lines.join("\n").trim().to_string()
}

fn truncate_chars(text: &str, max_chars: usize) -> (String, bool) {
    match text.char_indices().nth(max_chars) {
        None => (text.to_string(), false),
        Some((idx, _)) => (text[..idx].trim_end().to_string(), true),
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs(u64::deserialize(d)?))
    }
}
