//! Deterministic backend families for desk-scale runs.
//!
//! Every backend here is a pure function of (system prompt, history, seed).
//! The buyers read their instruction back out of the system prompt they are
//! given, exactly as a remote model would.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::backend::{BackendError, CompletionBackend, Message, MessageRole};
use crate::model::{Delegation, Instruction, PackSet, Product};
use crate::money::Cents;

/// Seller discount offered when a buyer asks for one, in percent.
pub const SELLER_DISCOUNT_PERCENT: i64 = 10;

/// Objection phrase emitted by the role-coherent buyer.
pub fn objection_line(product: &Product, quoted: Cents, after_discount: bool) -> String {
    if after_discount {
        format!(
            "At {quoted} even with the discount, the {} is more than I want to put into headphones.",
            product.name
        )
    } else {
        format!(
            "At {quoted}, the {} is more than I want to put into headphones.",
            product.name
        )
    }
}

pub fn decision_line(product: &Product, with_discount: bool) -> String {
    if with_discount {
        format!("I'll take the {} with the discount.", product.name)
    } else {
        format!("I'll take the {}.", product.name)
    }
}

pub const HEADROOM_LINE: &str = "Price isn't the deciding factor for me here.";

/// Openings used by the privacy-gagged buyer, picked by seed parity.
pub const GAGGED_OPENINGS: [&str; 2] = [
    "Hi, I'm shopping for a pair of wireless headphones. Could you walk me through what you have?",
    "Hello. I'm looking for wireless headphones and would like an overview of your range.",
];

const GAGGED_WARRANTY: &str = "What warranty comes with these?";

fn own_turns(history: &[Message]) -> usize {
    history
        .iter()
        .filter(|m| m.role == MessageRole::Assistant)
        .count()
}

fn product<'a>(catalog: &'a [Product], code: char) -> &'a Product {
    catalog
        .iter()
        .find(|p| p.code == code)
        .unwrap_or_else(|| panic!("catalog lacks product {code}"))
}

fn ask_about(catalog: &[Product], codes: &[char], question: &str) -> String {
    let names: Vec<String> = codes
        .iter()
        .map(|c| format!("the {}", product(catalog, *c).name))
        .collect();
    format!("Could you tell me more about {}? {question}", names.join(" and "))
}

/// One step of the role-coherent policy for a target level.
fn role_coherent_step(
    catalog: &[Product],
    target: Cents,
    turn: usize,
    seed: u64,
) -> Result<String, BackendError> {
    let alt = seed % 2 == 1;
    let p = |c| product(catalog, c);
    let discounted = |c| p(c).price.discounted(SELLER_DISCOUNT_PERCENT);
    let text = match (target.0, turn) {
        (5000, 1) if alt => "Hello. I need basic wireless headphones as a graduate student: long hours in the library, public transit in between. Good battery life is the main thing. What are my options?".to_string(),
        (5000, 1) => "Hi! I'm a grad student looking for wireless headphones for studying in the library and riding public transit. Battery life matters a lot for long study sessions. What do you have that covers the basics?".to_string(),
        (5000, 2) => ask_about(catalog, &['A', 'B'], "How does the battery life compare?"),
        (5000, 3) => format!(
            "{} Does the {} hold a charge through a full day?",
            objection_line(p('B'), p('B').price, false),
            p('A').name
        ),
        (5000, 4) => decision_line(p('A'), false),

        (10000, 1) if alt => "Hello. I started my first job after college and want wireless headphones I can rely on for the commute and for calls at work. What would you suggest?".to_string(),
        (10000, 1) => "Hi, I just started my first job out of college and need decent wireless headphones for my daily commute and some work calls. Something reliable. What would you suggest?".to_string(),
        (10000, 2) => ask_about(catalog, &['B', 'C'], "How are the microphones for calls?"),
        (10000, 3) => format!(
            "{} The {} sounds like it covers what I need.",
            objection_line(p('C'), p('C').price, false),
            p('B').name
        ),
        (10000, 4) => decision_line(p('B'), false),

        (15000, 1) if alt => "Hello! I'm in marketing, and my headphones go with me to the office and the gym every day. I care about how music sounds. What do you carry?".to_string(),
        (15000, 1) => "Hey! I work in marketing and wear headphones all day at the office and at the gym. Music quality matters to me. What do you carry?".to_string(),
        (15000, 2) => ask_about(catalog, &['C'], "How is the sound for music, and does it stay put during a workout?"),
        (15000, 3) => format!("That sounds right for what I need. {}", decision_line(p('C'), false)),

        (20000, 1) if alt => "Hello. I travel for client work and spend a lot of time on flights. Strong noise cancellation and comfort over long hours are what I need. What do you recommend?".to_string(),
        (20000, 1) => "Hi. I'm a consultant and I'm on flights to client sites most weeks. I need strong noise cancellation and all-day comfort. What do you recommend?".to_string(),
        (20000, 2) => ask_about(catalog, &['C', 'D'], "Which one has the better noise cancellation on a plane?"),
        (20000, 3) => format!("Is there any discount available on the {}?", p('D').name),
        (20000, 4) => decision_line(p('D'), true),

        (30000, 1) if alt => "Hello. I'm a music enthusiast with a good pair of speakers at home, and I want headphones that come close to that sound. What is the best you have?".to_string(),
        (30000, 1) => "Hi there. I'm a music enthusiast and already have good speakers at home. I'd like headphones that come close to that sound. What's your best?".to_string(),
        (30000, 2) => ask_about(catalog, &['D', 'E'], "How do they compare on sound quality?"),
        (30000, 3) => format!("Is there any discount available on the {}?", p('E').name),
        (30000, 4) => format!(
            "{} {}",
            objection_line(p('E'), discounted('E'), true),
            decision_line(p('D'), false)
        ),

        (50000, 1) if alt => "Good afternoon. I'm an audiophile building out my home listening setup, and sound fidelity comes first. Tell me about your top model.".to_string(),
        (50000, 1) => "Hello. I'm an audiophile and I'm adding headphones to my home listening setup. Sound fidelity comes first. Tell me about your top model.".to_string(),
        (50000, 2) => ask_about(catalog, &['E'], "What drivers and DAC does it use?"),
        (50000, 3) => format!(
            "Does the {} support lossless codecs over Bluetooth, or do I need a wired connection to its DAC?",
            p('E').name
        ),
        (50000, 4) => format!("{HEADROOM_LINE} {}", decision_line(p('E'), false)),

        (level, t) if [5000, 10000, 15000, 20000, 30000, 50000].contains(&level) => {
            return Err(BackendError::Contract(format!(
                "role-coherent buyer has no turn {t} (the dialogue already ended)"
            )))
        }
        (level, _) => {
            return Err(BackendError::Contract(format!(
                "no role-coherent policy for target {}",
                Cents(level)
            )))
        }
    };
    Ok(text)
}

/// Next buyer turn of the role-coherent family for a verbal instruction.
pub fn scripted_role_coherent_buyer(
    catalog: &[Product],
    instruction: &Instruction,
    history: &[Message],
    seed: u64,
) -> Result<String, BackendError> {
    let Delegation::Verbal(profile) = &instruction.delegation else {
        return Err(BackendError::Contract(
            "role-coherent buyer needs a verbal instruction".into(),
        ));
    };
    role_coherent_step(catalog, profile.target_wtp, own_turns(history) + 1, seed)
}

/// Next buyer turn of the privacy-gagged family. Output never depends on the
/// budget.
pub fn scripted_privacy_gagged_buyer(
    catalog: &[Product],
    instruction: &Instruction,
    history: &[Message],
    seed: u64,
) -> Result<String, BackendError> {
    if !matches!(instruction.delegation, Delegation::Numeric(_)) {
        return Err(BackendError::Contract(
            "privacy-gagged buyer needs a numeric instruction".into(),
        ));
    }
    Ok(gagged_step(catalog, own_turns(history) + 1, seed))
}

fn gagged_step(catalog: &[Product], turn: usize, seed: u64) -> String {
    match turn {
        1 => GAGGED_OPENINGS[(seed % 2) as usize].to_string(),
        2 => ask_about(
            catalog,
            &['C', 'D'],
            "How do they compare on noise cancellation?",
        ),
        3 => GAGGED_WARRANTY.to_string(),
        _ => format!("Thanks. {}", decision_line(product(catalog, 'C'), false)),
    }
}

/// Role-coherent buyer as a completion backend.
#[derive(Debug, Clone)]
pub struct RoleCoherentBuyer {
    packs: Arc<PackSet>,
}

impl RoleCoherentBuyer {
    pub fn new(packs: Arc<PackSet>) -> Self {
        RoleCoherentBuyer { packs }
    }
}

impl CompletionBackend for RoleCoherentBuyer {
    fn identity(&self) -> String {
        "scripted:role-coherent-buyer".into()
    }

    fn complete(&self, system: &str, history: &[Message], seed: u64) -> Result<String, BackendError> {
        if system.contains(&self.packs.numeric.privacy_directive) {
            return Err(BackendError::Contract(
                "role-coherent buyer needs a verbal instruction".into(),
            ));
        }
        let profile = self.packs.profile_in_text(system).ok_or_else(|| {
            BackendError::Contract("no known consumer profile in the buyer prompt".into())
        })?;
        role_coherent_step(
            &self.packs.catalog.products,
            profile.target_wtp,
            own_turns(history) + 1,
            seed,
        )
    }
}

/// Privacy-gagged buyer as a completion backend.
#[derive(Debug, Clone)]
pub struct PrivacyGaggedBuyer {
    packs: Arc<PackSet>,
}

impl PrivacyGaggedBuyer {
    pub fn new(packs: Arc<PackSet>) -> Self {
        PrivacyGaggedBuyer { packs }
    }
}

impl CompletionBackend for PrivacyGaggedBuyer {
    fn identity(&self) -> String {
        "scripted:privacy-gagged-buyer".into()
    }

    fn complete(&self, system: &str, history: &[Message], seed: u64) -> Result<String, BackendError> {
        if !system.contains(&self.packs.numeric.privacy_directive) {
            return Err(BackendError::Contract(
                "privacy-gagged buyer needs a numeric instruction".into(),
            ));
        }
        Ok(gagged_step(
            &self.packs.catalog.products,
            own_turns(history) + 1,
            seed,
        ))
    }
}

/// Picks the family by instruction form: role-coherent for verbal prompts,
/// privacy-gagged for numeric ones.
#[derive(Debug, Clone)]
pub struct ScriptedBuyer {
    coherent: RoleCoherentBuyer,
    gagged: PrivacyGaggedBuyer,
}

impl ScriptedBuyer {
    pub fn new(packs: Arc<PackSet>) -> Self {
        ScriptedBuyer {
            coherent: RoleCoherentBuyer::new(packs.clone()),
            gagged: PrivacyGaggedBuyer::new(packs),
        }
    }
}

impl CompletionBackend for ScriptedBuyer {
    fn identity(&self) -> String {
        "scripted:buyer".into()
    }

    fn complete(&self, system: &str, history: &[Message], seed: u64) -> Result<String, BackendError> {
        if system.contains(&self.gagged.packs.numeric.privacy_directive) {
            self.gagged.complete(system, history, seed)
        } else {
            self.coherent.complete(system, history, seed)
        }
    }
}

/// Seller that answers from the catalog it was built with.
#[derive(Debug, Clone)]
pub struct ScriptedSeller {
    catalog: Vec<Product>,
}

impl ScriptedSeller {
    pub fn new(catalog: Vec<Product>) -> Self {
        ScriptedSeller { catalog }
    }

    pub fn reply(&self, buyer_turn: &str) -> String {
        let mentioned: Vec<&Product> = self
            .catalog
            .iter()
            .filter(|p| buyer_turn.contains(&p.name))
            .collect();
        let lower = buyer_turn.to_lowercase();
        if lower.contains("discount") {
            let target = mentioned.last().copied().unwrap_or(&self.catalog[0]);
            return format!(
                "I can offer {SELLER_DISCOUNT_PERCENT}% off the {}, which brings it to {}.",
                target.name,
                target.price.discounted(SELLER_DISCOUNT_PERCENT)
            );
        }
        if lower.contains("warranty") {
            return "Every model comes with a one-year warranty and free returns within thirty days."
                .into();
        }
        if lower.contains("codec") {
            let p = mentioned.last().copied().unwrap_or(&self.catalog[self.catalog.len() - 1]);
            return format!(
                "The {} has {}. For the highest fidelity, use the wired connection.",
                p.name,
                p.features
            );
        }
        if mentioned.is_empty() {
            let range: Vec<String> = self
                .catalog
                .iter()
                .map(|p| format!("the {} at {}", p.name, p.price))
                .collect();
            return format!(
                "Welcome! We carry {} wireless models: {}. Which would you like to hear about?",
                self.catalog.len(),
                range.join(", ")
            );
        }
        mentioned
            .iter()
            .map(|p| {
                format!(
                    "The {} is {}: {}, rated {:.1}/5.",
                    p.name, p.price, p.features, p.rating
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl CompletionBackend for ScriptedSeller {
    fn identity(&self) -> String {
        "scripted:seller".into()
    }

    fn complete(&self, _system: &str, history: &[Message], _seed: u64) -> Result<String, BackendError> {
        let last = history
            .iter()
            .rev()
            .find(|m| m.role == MessageRole::User)
            .ok_or_else(|| BackendError::Contract("seller called before the buyer spoke".into()))?;
        Ok(self.reply(&last.content))
    }
}

/// Wraps a backend and fails every call made with one of the given seeds.
#[derive(Debug, Clone)]
pub struct FaultInjecting<B> {
    inner: B,
    failing_seeds: BTreeSet<u64>,
}

impl<B> FaultInjecting<B> {
    pub fn new(inner: B, failing_seeds: impl IntoIterator<Item = u64>) -> Self {
        FaultInjecting {
            inner,
            failing_seeds: failing_seeds.into_iter().collect(),
        }
    }
}

impl<B: CompletionBackend> CompletionBackend for FaultInjecting<B> {
    fn identity(&self) -> String {
        format!("{}+faults", self.inner.identity())
    }

    fn complete(&self, system: &str, history: &[Message], seed: u64) -> Result<String, BackendError> {
        if self.failing_seeds.contains(&seed) {
            return Err(BackendError::RateLimited("injected failure".into()));
        }
        self.inner.complete(system, history, seed)
    }
}
