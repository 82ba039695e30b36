//! Built-in and user-supplied data packs: catalog, profiles, numeric
//! instructions, prompt templates and the redaction word lists.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    ConsumerProfile, Instruction, NumericBudget, PlannedTrial, ProfilePack, Product, Scaffold,
};
use crate::error::{Error, Result};
use crate::money::Cents;
use crate::model::Condition;
use crate::redaction::{find_currency_spans, WordList};

/// Target willingness-to-pay levels, in cents.
pub const TARGET_LEVELS: [i64; 6] = [5000, 10000, 15000, 20000, 30000, 50000];

const CATALOG: &str = include_str!("../../data/packs/catalog.toml");
const STANDARD: &str = include_str!("../../data/packs/profiles_standard.toml");
const STRIPPED: &str = include_str!("../../data/packs/profiles_stripped.toml");
const FACTORIAL: &str = include_str!("../../data/packs/profiles_factorial.toml");
const NUMERIC: &str = include_str!("../../data/packs/numeric.toml");
const PROMPTS: &str = include_str!("../../data/packs/prompts.toml");
const BUDGET_PHRASES: &str = include_str!("../../data/lists/budget_phrases.txt");
const STOPLIST: &str = include_str!("../../data/lists/financial_stoplist.txt");
const PERSONA_TERMS: &str = include_str!("../../data/lists/persona_terms.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub version: String,
    #[serde(rename = "product")]
    pub products: Vec<Product>,
}

impl Catalog {
    pub fn validate(&self) -> Result<()> {
        if self.products.is_empty() {
            return Err(Error::Validation("catalog is empty".into()));
        }
        for pair in self.products.windows(2) {
            if pair[0].code >= pair[1].code || pair[0].price >= pair[1].price {
                return Err(Error::Validation(format!(
                    "catalog prices must strictly ascend with product code ({} -> {})",
                    pair[0].code, pair[1].code
                )));
            }
        }
        for p in &self.products {
            let tenths = p.rating * 10.0;
            if !(0.0..=5.0).contains(&p.rating) || (tenths - tenths.round()).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "product {} rating {} is not in 0-5 with one decimal",
                    p.code, p.rating
                )));
            }
        }
        Ok(())
    }

    pub fn by_name(&self, name: &str) -> Option<&Product> {
        self.products.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePackFile {
    pub version: String,
    pub pack: ProfilePack,
    #[serde(default)]
    pub synthetic: bool,
    #[serde(rename = "profile")]
    pub profiles: Vec<ConsumerProfile>,
}

impl ProfilePackFile {
    fn parse(text: &str, context: &str) -> Result<Self> {
        let mut file: ProfilePackFile = parse_toml(text, context)?;
        for p in &mut file.profiles {
            p.pack = file.pack;
        }
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericCell {
    pub id: String,
    #[serde(rename = "budget_cents")]
    pub budget: Cents,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericPack {
    pub version: String,
    pub budget_sentence: String,
    pub privacy_directive: String,
    #[serde(rename = "cell")]
    pub cells: Vec<NumericCell>,
}

impl NumericPack {
    /// The budget sentence followed by the privacy directive.
    pub fn budget_block(&self, budget: Cents) -> String {
        format!(
            "{} {}",
            self.budget_sentence.replace("{budget}", &budget.to_string()),
            self.privacy_directive
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaffoldTemplates {
    pub verbal: String,
    pub numeric: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPack {
    pub version: String,
    pub customer_preamble: String,
    pub no_fabrication: String,
    pub decision_hint: String,
    pub scaffold: BTreeMap<Scaffold, ScaffoldTemplates>,
    pub seller: Template,
    pub inference: Template,
    pub persona_redaction: Template,
}

/// Every data pack the harness reads.
#[derive(Debug, Clone)]
pub struct PackSet {
    pub catalog: Catalog,
    pub standard: ProfilePackFile,
    pub stripped: ProfilePackFile,
    pub factorial: ProfilePackFile,
    pub numeric: NumericPack,
    pub prompts: PromptPack,
    pub budget_phrases: WordList,
    pub financial_stoplist: WordList,
    pub persona_terms: WordList,
    versions: BTreeMap<String, String>,
}

/// Shared instance of the built-in packs.
pub fn builtin_packs() -> &'static PackSet {
    static PACKS: OnceLock<PackSet> = OnceLock::new();
    PACKS.get_or_init(|| PackSet::builtin().expect("built-in packs are valid"))
}

/// Target willingness to pay for a cell or profile id in the built-in packs.
pub fn target_for_cell(cell_id: &str) -> Result<Cents> {
    builtin_packs().target_for_cell(cell_id)
}

struct Sources<'a> {
    catalog: (&'a str, &'a str),
    standard: (&'a str, &'a str),
    stripped: (&'a str, &'a str),
    factorial: (&'a str, &'a str),
    numeric: (&'a str, &'a str),
    prompts: (&'a str, &'a str),
    budget_phrases: (&'a str, &'a str),
    stoplist: (&'a str, &'a str),
    persona_terms: (&'a str, &'a str),
}

impl PackSet {
    pub fn builtin() -> Result<Self> {
        Self::from_sources(Sources {
            catalog: ("catalog.toml", CATALOG),
            standard: ("profiles_standard.toml", STANDARD),
            stripped: ("profiles_stripped.toml", STRIPPED),
            factorial: ("profiles_factorial.toml", FACTORIAL),
            numeric: ("numeric.toml", NUMERIC),
            prompts: ("prompts.toml", PROMPTS),
            budget_phrases: ("budget_phrases.txt", BUDGET_PHRASES),
            stoplist: ("financial_stoplist.txt", STOPLIST),
            persona_terms: ("persona_terms.txt", PERSONA_TERMS),
        })
    }

    /// Loads packs from `dir`, falling back to the built-in file for any
    /// pack the directory does not provide.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str, builtin: &'static str| -> Result<String> {
            let path = dir.join(name);
            if path.exists() {
                fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
            } else {
                Ok(builtin.to_string())
            }
        };
        let catalog = read("catalog.toml", CATALOG)?;
        let standard = read("profiles_standard.toml", STANDARD)?;
        let stripped = read("profiles_stripped.toml", STRIPPED)?;
        let factorial = read("profiles_factorial.toml", FACTORIAL)?;
        let numeric = read("numeric.toml", NUMERIC)?;
        let prompts = read("prompts.toml", PROMPTS)?;
        let budget = read("budget_phrases.txt", BUDGET_PHRASES)?;
        let stop = read("financial_stoplist.txt", STOPLIST)?;
        let persona = read("persona_terms.txt", PERSONA_TERMS)?;
        Self::from_sources(Sources {
            catalog: ("catalog.toml", &catalog),
            standard: ("profiles_standard.toml", &standard),
            stripped: ("profiles_stripped.toml", &stripped),
            factorial: ("profiles_factorial.toml", &factorial),
            numeric: ("numeric.toml", &numeric),
            prompts: ("prompts.toml", &prompts),
            budget_phrases: ("budget_phrases.txt", &budget),
            stoplist: ("financial_stoplist.txt", &stop),
            persona_terms: ("persona_terms.txt", &persona),
        })
    }

    fn from_sources(src: Sources<'_>) -> Result<Self> {
        let catalog: Catalog = parse_toml(src.catalog.1, src.catalog.0)?;
        let standard = ProfilePackFile::parse(src.standard.1, src.standard.0)?;
        let stripped = ProfilePackFile::parse(src.stripped.1, src.stripped.0)?;
        let factorial = ProfilePackFile::parse(src.factorial.1, src.factorial.0)?;
        let numeric: NumericPack = parse_toml(src.numeric.1, src.numeric.0)?;
        let prompts: PromptPack = parse_toml(src.prompts.1, src.prompts.0)?;

        let mut versions = BTreeMap::new();
        versions.insert(src.catalog.0.to_string(), catalog.version.clone());
        versions.insert(src.standard.0.to_string(), standard.version.clone());
        versions.insert(src.stripped.0.to_string(), stripped.version.clone());
        versions.insert(src.factorial.0.to_string(), factorial.version.clone());
        versions.insert(src.numeric.0.to_string(), numeric.version.clone());
        versions.insert(src.prompts.0.to_string(), prompts.version.clone());
        for (name, text) in [src.budget_phrases, src.stoplist, src.persona_terms] {
            versions.insert(name.to_string(), content_digest(text));
        }

        let packs = PackSet {
            catalog,
            standard,
            stripped,
            factorial,
            numeric,
            prompts,
            budget_phrases: WordList::parse(src.budget_phrases.1),
            financial_stoplist: WordList::parse(src.stoplist.1),
            persona_terms: WordList::parse(src.persona_terms.1),
            versions,
        };
        packs.validate()?;
        Ok(packs)
    }

    /// Pack file name to version string (list files use a content digest).
    pub fn versions(&self) -> &BTreeMap<String, String> {
        &self.versions
    }

    pub fn validate(&self) -> Result<()> {
        self.catalog.validate()?;
        for (file, prefix) in [
            (&self.standard, "vp_"),
            (&self.stripped, "sv_"),
            (&self.factorial, "fv_"),
        ] {
            for p in &file.profiles {
                if !p.id.starts_with(prefix) {
                    return Err(Error::Validation(format!(
                        "profile `{}` should use the `{prefix}` prefix",
                        p.id
                    )));
                }
                if !TARGET_LEVELS.contains(&p.target_wtp.0) {
                    return Err(Error::Validation(format!(
                        "profile `{}` target {} is not a design level",
                        p.id, p.target_wtp
                    )));
                }
                if !(1..=3).contains(&p.variant) {
                    return Err(Error::Validation(format!(
                        "profile `{}` variant {} is outside 1-3",
                        p.id, p.variant
                    )));
                }
                if !find_currency_spans(&p.description).is_empty() {
                    return Err(Error::Validation(format!(
                        "profile `{}` description contains a currency amount",
                        p.id
                    )));
                }
                if p.pack == ProfilePack::Stripped {
                    if let Some(m) = self.financial_stoplist.find_all(&p.description).first() {
                        return Err(Error::Validation(format!(
                            "stripped profile `{}` contains financial word `{}`",
                            p.id, m.text
                        )));
                    }
                }
            }
        }
        for cell in &self.numeric.cells {
            if !TARGET_LEVELS.contains(&cell.budget.0) {
                return Err(Error::Validation(format!(
                    "numeric cell `{}` budget {} is not a design level",
                    cell.id, cell.budget
                )));
            }
        }
        if !self.numeric.budget_sentence.contains("{budget}") {
            return Err(Error::Validation(
                "numeric budget sentence lacks a {budget} placeholder".into(),
            ));
        }
        for s in Scaffold::ALL {
            if !self.prompts.scaffold.contains_key(&s) {
                return Err(Error::Validation(format!("prompt pack lacks scaffold {s}")));
            }
        }
        Ok(())
    }

    fn profiles(&self) -> impl Iterator<Item = &ConsumerProfile> {
        self.standard
            .profiles
            .iter()
            .chain(&self.stripped.profiles)
            .chain(&self.factorial.profiles)
    }

    pub fn target_for_cell(&self, id: &str) -> Result<Cents> {
        if let Some(p) = self.profiles().find(|p| p.id == id || p.cell_id == id) {
            return Ok(p.target_wtp);
        }
        self.numeric
            .cells
            .iter()
            .find(|c| c.id == id)
            .map(|c| c.budget)
            .ok_or_else(|| Error::UnknownCell(id.to_string()))
    }

    /// Cell ids for a condition, ordered by target.
    pub fn cells(&self, condition: Condition) -> Vec<String> {
        let mut cells: Vec<(Cents, String)> = match condition {
            Condition::Verbal => self
                .standard
                .profiles
                .iter()
                .filter(|p| p.variant == 1)
                .map(|p| (p.target_wtp, p.cell_id.clone()))
                .collect(),
            Condition::Stripped => self
                .stripped
                .profiles
                .iter()
                .filter(|p| p.variant == 1)
                .map(|p| (p.target_wtp, p.cell_id.clone()))
                .collect(),
            Condition::Numeric => self
                .numeric
                .cells
                .iter()
                .map(|c| (c.budget, c.id.clone()))
                .collect(),
        };
        cells.sort();
        cells.into_iter().map(|(_, id)| id).collect()
    }

    /// Profile for a (cell, variant) pair of a verbal or stripped condition.
    pub fn profile(&self, cell_id: &str, variant: u8) -> Result<&ConsumerProfile> {
        self.profiles()
            .find(|p| p.cell_id == cell_id && p.variant == variant)
            .ok_or_else(|| Error::UnknownCell(format!("{cell_id} variant {variant}")))
    }

    pub fn numeric_budget(&self, cell_id: &str) -> Result<NumericBudget> {
        let cell = self
            .numeric
            .cells
            .iter()
            .find(|c| c.id == cell_id)
            .ok_or_else(|| Error::UnknownCell(cell_id.to_string()))?;
        Ok(NumericBudget {
            cell_id: cell.id.clone(),
            budget: cell.budget,
            privacy_directive: self.numeric.privacy_directive.clone(),
        })
    }

    pub fn instruction_for(&self, trial: &PlannedTrial) -> Result<Instruction> {
        match trial.condition {
            Condition::Numeric => Ok(Instruction::numeric(
                self.numeric_budget(&trial.cell_id)?,
                trial.scaffold,
            )),
            Condition::Verbal | Condition::Stripped => Ok(Instruction::verbal(
                self.profile(&trial.cell_id, trial.variant)?.clone(),
                trial.scaffold,
            )),
        }
    }

    /// Finds the profile whose description appears verbatim in `text`.
    pub fn profile_in_text(&self, text: &str) -> Option<&ConsumerProfile> {
        self.profiles().find(|p| text.contains(&p.description))
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    toml::from_str(text).map_err(|source| Error::Toml {
        context: context.to_string(),
        source,
    })
}

fn content_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    format!("sha256:{}", &hex::encode(digest)[..12])
}
