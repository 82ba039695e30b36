use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{
    CompletionBackend, DialogueLimits, FaultInjecting, RemoteBackend, RemoteConfig, RetryPolicy,
    ScriptedBuyer, ScriptedSeller,
};
use crate::error::{Error, Result};
use crate::inference::{ScriptedOracle, DEFAULT_CEILING_DOLLARS};
use crate::model::{Design, InferenceVariant, PackSet};
use crate::redaction::ScriptedPersonaRedactor;
use crate::stats::DEFAULT_RESAMPLES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    /// Per-role model overrides: `buyer`, `seller`, `inference`, `redactor`.
    pub models: BTreeMap<String, String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: "https://api.openai.com/v1".into(),
            model: String::new(),
            api_key_env: "LEAKAGE_API_KEY".into(),
            models: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: DEFAULT_RESAMPLES,
            seed: 20_250_101,
        }
    }
}

/// Everything a run needs, in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub name: String,
    pub designs: Vec<Design>,
    pub trials_per_cell: u32,
    pub master_seed: u64,
    pub variants: Vec<InferenceVariant>,
    /// Maximum trials (and so backend calls) in flight.
    pub concurrency: usize,
    pub limits: DialogueLimits,
    pub retry: RetryPolicy,
    /// Directory of pack files overriding the built-in ones.
    pub packs_dir: Option<PathBuf>,
    pub backend: BackendConfig,
    pub bootstrap: BootstrapConfig,
    pub ceiling_dollars: i64,
    pub decision_marker: bool,
    /// Trial ids whose buyer calls always fail. For exercising loss handling.
    pub inject_failures: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            designs: vec![Design::Main],
            trials_per_cell: 60,
            master_seed: 42,
            variants: vec![InferenceVariant::Full, InferenceVariant::DollarRedacted],
            concurrency: 8,
            limits: DialogueLimits::default(),
            retry: RetryPolicy::default(),
            packs_dir: None,
            backend: BackendConfig::default(),
            bootstrap: BootstrapConfig::default(),
            ceiling_dollars: DEFAULT_CEILING_DOLLARS,
            decision_marker: false,
            inject_failures: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Scripted backends, no waiting between retries.
    pub fn scripted(trials_per_cell: u32, master_seed: u64) -> Self {
        RunConfig {
            trials_per_cell,
            master_seed,
            retry: RetryPolicy::immediate(3),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Toml {
            context: "run config".into(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.designs.is_empty() {
            return Err(Error::Validation("config lists no designs".into()));
        }
        if self.trials_per_cell == 0 {
            return Err(Error::Validation("trials_per_cell must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Validation("concurrency must be positive".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Validation("config lists no inference variants".into()));
        }
        if self.limits.max_buyer_turns == 0 {
            return Err(Error::Validation("max_buyer_turns must be positive".into()));
        }
        if self.bootstrap.resamples == 0 {
            return Err(Error::Validation("bootstrap resamples must be positive".into()));
        }
        if self.backend.kind == BackendKind::Remote && self.backend.model.is_empty() {
            let roles = ["buyer", "seller", "inference", "redactor"];
            if !roles.iter().all(|r| self.backend.models.contains_key(*r)) {
                return Err(Error::Validation(
                    "remote backend needs `model` or a model for every role".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn load_packs(&self) -> Result<PackSet> {
        let packs = match &self.packs_dir {
            Some(dir) => PackSet::load_dir(dir)?,
            None => PackSet::builtin()?,
        };
        packs.validate()?;
        Ok(packs)
    }
}

/// The four agent roles a run talks to.
#[derive(Clone)]
pub struct Backends {
    pub buyer: Arc<dyn CompletionBackend>,
    pub seller: Arc<dyn CompletionBackend>,
    pub inference: Arc<dyn CompletionBackend>,
    pub redactor: Arc<dyn CompletionBackend>,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.identities()).finish()
    }
}

impl Backends {
    pub fn scripted(packs: Arc<PackSet>) -> Self {
        let catalog = packs.catalog.products.clone();
        Backends {
            buyer: Arc::new(ScriptedBuyer::new(packs.clone())),
            seller: Arc::new(ScriptedSeller::new(catalog.clone())),
            inference: Arc::new(ScriptedOracle::new(catalog)),
            redactor: Arc::new(ScriptedPersonaRedactor::new(packs)),
        }
    }

    pub fn from_config(cfg: &RunConfig, packs: Arc<PackSet>) -> Result<Self> {
        match cfg.backend.kind {
            BackendKind::Scripted => Ok(Self::scripted(packs)),
            BackendKind::Remote => {
                let make = |role: &str| -> Result<Arc<dyn CompletionBackend>> {
                    let model = cfg
                        .backend
                        .models
                        .get(role)
                        .cloned()
                        .unwrap_or_else(|| cfg.backend.model.clone());
                    let remote = RemoteBackend::new(
                        RemoteConfig {
                            endpoint: cfg.backend.endpoint.clone(),
                            model,
                            api_key_env: cfg.backend.api_key_env.clone(),
                        },
                        cfg.limits.per_call_timeout,
                    )?;
                    Ok(Arc::new(remote))
                };
                Ok(Backends {
                    buyer: make("buyer")?,
                    seller: make("seller")?,
                    inference: make("inference")?,
                    redactor: make("redactor")?,
                })
            }
        }
    }

    /// Makes every buyer call with one of these seeds fail.
    pub fn with_buyer_faults(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.buyer = Arc::new(FaultInjecting::new(self.buyer, seeds));
        self
    }

    pub fn identities(&self) -> BTreeMap<String, String> {
        [
            ("buyer", &self.buyer),
            ("seller", &self.seller),
            ("inference", &self.inference),
            ("redactor", &self.redactor),
        ]
        .into_iter()
        .map(|(k, b)| (k.to_string(), b.identity()))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::scripted(10, 7);
        cfg.designs = vec![Design::Main, Design::Factorial];
        cfg.inject_failures = vec!["verbal_vp_50_v1A_t001".into()];
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = RunConfig::from_toml("trials_per_cell = 3\n[backend]\nkind = \"scripted\"\n").unwrap();
        assert_eq!(cfg.trials_per_cell, 3);
        assert_eq!(cfg.designs, vec![Design::Main]);
        assert_eq!(cfg.limits.max_buyer_turns, 4);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            RunConfig::from_toml("trials_per_cell = 0"),
            Err(Error::Validation(_))
        ));
        assert!(RunConfig::from_toml("concurrency = 0").is_err());
        assert!(RunConfig::from_toml("[backend]\nkind = \"remote\"").is_err());
        assert!(RunConfig::from_toml("designs = [\"nope\"]").is_err());
    }
}
