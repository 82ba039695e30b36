//! Role prompts, the dialogue loop and completion backends.

mod backend;
pub mod dialogue;
pub mod prompts;
pub mod remote;
pub mod scripted;

pub use backend::{BackendError, CompletionBackend, Message, MessageRole, RetryPolicy};
pub use dialogue::{
    detect_purchase_decision, run_dialogue, DecisionRule, DialogueLimits, DialogueOutcome,
    DialogueSetup,
};
pub use prompts::{
    render_buyer_prompt, render_inference_prompt, render_persona_redaction_prompt,
    render_seller_prompt,
};
pub use remote::{RemoteBackend, RemoteConfig};
pub use scripted::{
    FaultInjecting, PrivacyGaggedBuyer, RoleCoherentBuyer, ScriptedBuyer, ScriptedSeller,
};
