//! Role prompt rendering.

use crate::error::{Error, Result};
use crate::model::{Delegation, Instruction, PackSet, Product};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuyerPromptOptions {
    /// Ask the buyer to prefix its decision with `DECISION:`.
    pub decision_marker: bool,
}

/// Buyer system prompt for an instruction, with the default options.
pub fn render_buyer_prompt(packs: &PackSet, instruction: &Instruction) -> String {
    render_buyer_prompt_with(packs, instruction, BuyerPromptOptions::default())
}

pub fn render_buyer_prompt_with(
    packs: &PackSet,
    instruction: &Instruction,
    options: BuyerPromptOptions,
) -> String {
    let prompts = &packs.prompts;
    let templates = &prompts.scaffold[&instruction.scaffold];
    let hint = if options.decision_marker {
        format!(" {}", prompts.decision_hint)
    } else {
        String::new()
    };
    let text = match &instruction.delegation {
        Delegation::Verbal(profile) => templates
            .verbal
            .replace("{profile}", &profile.description)
            .replace("{no_fabrication}", &prompts.no_fabrication),
        Delegation::Numeric(budget) => templates.numeric.replace(
            "{budget_block}",
            &format!(
                "{} {}",
                packs
                    .numeric
                    .budget_sentence
                    .replace("{budget}", &budget.budget.to_string()),
                budget.privacy_directive
            ),
        ),
    };
    text.replace("{preamble}", &prompts.customer_preamble)
        .replace("{decision_hint}", &hint)
        .trim()
        .to_string()
}

/// One catalog line as listed in the seller prompt.
pub fn catalog_line(product: &Product) -> String {
    format!("{}. {} Price: {}.", product.code, product.description(), product.price)
}

pub fn render_seller_prompt(packs: &PackSet, catalog: &[Product]) -> Result<String> {
    if catalog.is_empty() {
        return Err(Error::Validation("seller catalog is empty".into()));
    }
    let lines: Vec<String> = catalog.iter().map(catalog_line).collect();
    Ok(packs
        .prompts
        .seller
        .template
        .replace("{catalog}", &lines.join("\n"))
        .trim()
        .to_string())
}

/// The inference agent's system prompt. Constant for a given pack set and
/// free of catalog content.
pub fn render_inference_prompt(packs: &PackSet) -> String {
    packs.prompts.inference.template.trim().to_string()
}

pub fn render_persona_redaction_prompt(packs: &PackSet) -> String {
    packs.prompts.persona_redaction.template.trim().to_string()
}
