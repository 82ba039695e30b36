//! Domain types shared by every stage of the pipeline.

mod packs;
mod plan;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Cents;

pub use packs::{
    builtin_packs, target_for_cell, Catalog, NumericCell, NumericPack, PackSet, ProfilePackFile,
    PromptPack, ScaffoldTemplates,
};
pub use plan::{build_plan, Design, ExperimentPlan, PlannedTrial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub code: char,
    pub name: String,
    pub features: String,
    pub rating: f64,
    pub tier: String,
    #[serde(rename = "price_cents")]
    pub price: Cents,
}

impl Product {
    /// Catalog line as the seller sees it, without the price.
    pub fn description(&self) -> String {
        format!(
            "{}. {}. Rated {:.1}/5. {}.",
            self.name, self.features, self.rating, self.tier
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfilePack {
    Standard,
    Stripped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerProfile {
    pub id: String,
    /// Scoring cell the profile belongs to; equals `id` for variant 1.
    #[serde(rename = "cell")]
    pub cell_id: String,
    pub variant: u8,
    #[serde(rename = "target_wtp_cents")]
    pub target_wtp: Cents,
    pub description: String,
    #[serde(skip, default = "default_pack")]
    pub pack: ProfilePack,
}

fn default_pack() -> ProfilePack {
    ProfilePack::Standard
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scaffold {
    A,
    B,
}

impl Scaffold {
    pub const ALL: [Scaffold; 2] = [Scaffold::A, Scaffold::B];
}

impl fmt::Display for Scaffold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaffold::A => "A",
            Scaffold::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionForm {
    Verbal,
    Numeric,
}

/// A confidential numeric budget plus its privacy directive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericBudget {
    pub cell_id: String,
    pub budget: Cents,
    pub privacy_directive: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delegation {
    Verbal(ConsumerProfile),
    Numeric(NumericBudget),
}

/// What the consumer hands to the buyer agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub delegation: Delegation,
    pub scaffold: Scaffold,
}

impl Instruction {
    pub fn verbal(profile: ConsumerProfile, scaffold: Scaffold) -> Self {
        Instruction {
            delegation: Delegation::Verbal(profile),
            scaffold,
        }
    }

    pub fn numeric(budget: NumericBudget, scaffold: Scaffold) -> Self {
        Instruction {
            delegation: Delegation::Numeric(budget),
            scaffold,
        }
    }

    pub fn form(&self) -> InstructionForm {
        match self.delegation {
            Delegation::Verbal(_) => InstructionForm::Verbal,
            Delegation::Numeric(_) => InstructionForm::Numeric,
        }
    }

    pub fn profile(&self) -> Option<&ConsumerProfile> {
        match &self.delegation {
            Delegation::Verbal(p) => Some(p),
            Delegation::Numeric(_) => None,
        }
    }

    pub fn budget(&self) -> Option<Cents> {
        match &self.delegation {
            Delegation::Numeric(b) => Some(b.budget),
            Delegation::Verbal(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Verbal,
    Numeric,
    Stripped,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Verbal => "verbal",
            Condition::Numeric => "numeric",
            Condition::Stripped => "stripped",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Buyer,
    Seller,
}

impl Role {
    pub fn marker(self) -> &'static str {
        match self {
            Role::Buyer => "[BUYER]",
            Role::Seller => "[SELLER]",
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::Buyer => Role::Seller,
            Role::Seller => Role::Buyer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn buyer(text: impl Into<String>) -> Self {
        Turn {
            role: Role::Buyer,
            text: text.into(),
        }
    }

    pub fn seller(text: impl Into<String>) -> Self {
        Turn {
            role: Role::Seller,
            text: text.into(),
        }
    }
}

/// An ordered buyer/seller dialogue.
///
/// On disk a transcript is plain text: one paragraph per turn, each starting
/// with `[BUYER]` or `[SELLER]`, paragraphs separated by a blank line.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub turns: Vec<Turn>,
    pub turn_limit_hit: bool,
}

impl Transcript {
    /// Builds a transcript, checking role alternation and marker safety.
    pub fn new(turns: Vec<Turn>, turn_limit_hit: bool) -> Result<Self> {
        let t = Transcript {
            turns,
            turn_limit_hit,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let mut expected = Role::Buyer;
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.role != expected {
                return Err(Error::Validation(format!(
                    "turn {i} is {:?}, expected {:?}",
                    turn.role, expected
                )));
            }
            if turn.text.trim() != turn.text {
                return Err(Error::Validation(format!(
                    "turn {i} has leading or trailing whitespace"
                )));
            }
            if turn
                .text
                .lines()
                .any(|l| l.starts_with(Role::Buyer.marker()) || l.starts_with(Role::Seller.marker()))
            {
                return Err(Error::Validation(format!(
                    "turn {i} contains a line starting with a role marker"
                )));
            }
            expected = expected.other();
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn buyer_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.role == Role::Buyer)
    }

    pub fn buyer_turn_count(&self) -> usize {
        self.buyer_turns().count()
    }

    /// Renders the bracket-marker text form.
    pub fn to_marker_text(&self) -> String {
        let mut out = String::new();
        for (i, turn) in self.turns.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(turn.role.marker());
            out.push(' ');
            out.push_str(&turn.text);
        }
        if !self.turns.is_empty() {
            out.push('\n');
        }
        out
    }

    /// Parses the bracket-marker text form. `turn_limit_hit` is not part of
    /// the text and comes back as `false`.
    pub fn parse_marker_text(text: &str) -> Result<Self> {
        let mut turns: Vec<Turn> = Vec::new();
        let mut current: Option<(Role, String)> = None;
        for line in text.lines() {
            let started = [Role::Buyer, Role::Seller].into_iter().find_map(|role| {
                line.strip_prefix(role.marker())
                    .map(|rest| (role, rest.strip_prefix(' ').unwrap_or(rest)))
            });
            match started {
                Some((role, rest)) => {
                    if let Some((r, body)) = current.take() {
                        turns.push(Turn {
                            role: r,
                            text: body.trim().to_string(),
                        });
                    }
                    current = Some((role, rest.to_string()));
                }
                None => match current.as_mut() {
                    Some((_, body)) => {
                        body.push('\n');
                        body.push_str(line);
                    }
                    None if line.trim().is_empty() => {}
                    None => {
                        return Err(Error::Data(format!(
                            "transcript text before the first role marker: {line:?}"
                        )))
                    }
                },
            }
        }
        if let Some((r, body)) = current {
            turns.push(Turn {
                role: r,
                text: body.trim().to_string(),
            });
        }
        Transcript::new(turns, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Complete,
    Lost,
}

/// Ground truth for one trial. Lives in a sidecar file and never enters a
/// prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialLabel {
    pub trial_id: String,
    pub condition: Condition,
    pub cell_id: String,
    #[serde(rename = "target_wtp_cents")]
    pub target_wtp: Cents,
    pub profile_id: Option<String>,
    pub variant: u8,
    pub scaffold: Scaffold,
    pub trial_number: u32,
    pub seed: u64,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

impl FromStr for Confidence {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Confidence::Low),
            "medium" => Ok(Confidence::Medium),
            "high" => Ok(Confidence::High),
            _ => Err(()),
        }
    }
}

/// Which transcript the inference agent reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceVariant {
    Full,
    DollarRedacted,
    PersonaRedacted,
}

impl InferenceVariant {
    pub const ALL: [InferenceVariant; 3] = [
        InferenceVariant::Full,
        InferenceVariant::DollarRedacted,
        InferenceVariant::PersonaRedacted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InferenceVariant::Full => "full",
            InferenceVariant::DollarRedacted => "dollar_redacted",
            InferenceVariant::PersonaRedacted => "persona_redacted",
        }
    }
}

impl fmt::Display for InferenceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InferenceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(InferenceVariant::Full),
            "dollar_redacted" | "dollar" | "redacted" => Ok(InferenceVariant::DollarRedacted),
            "persona_redacted" | "persona" => Ok(InferenceVariant::PersonaRedacted),
            other => Err(Error::Validation(format!("unknown inference variant `{other}`"))),
        }
    }
}

/// A validated willingness-to-pay estimate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceReport {
    /// Whole US dollars, always positive.
    pub estimate: i64,
    pub confidence: Confidence,
    pub key_signals: [String; 3],
    pub variant: InferenceVariant,
    pub raw: String,
    /// Set when the record had more or fewer than three signals.
    #[serde(default)]
    pub signals_adjusted: bool,
    /// Set when the estimate exceeds the sanity ceiling. The estimate is kept.
    #[serde(default)]
    pub above_ceiling: bool,
}
