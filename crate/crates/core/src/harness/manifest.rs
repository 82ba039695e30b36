use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::store::{read_json, replace_atomic, to_json_bytes, RunDir};
use crate::error::{Error, Result};
use crate::model::ExperimentPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Complete,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default)]
    pub retries: u32,
}

impl TrialRecord {
    pub fn pending() -> Self {
        TrialRecord {
            status: RunStatus::Pending,
            reason: None,
            retries: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub plan_digest: String,
    pub master_seed: u64,
    pub backends: BTreeMap<String, String>,
    pub pack_versions: BTreeMap<String, String>,
    pub trials: BTreeMap<String, TrialRecord>,
}

impl RunManifest {
    pub fn new(
        plan: &ExperimentPlan,
        backends: BTreeMap<String, String>,
        pack_versions: BTreeMap<String, String>,
    ) -> Self {
        let digest = plan.digest();
        RunManifest {
            run_id: format!("{}-{}", plan.name, &digest[..12]),
            plan_digest: digest,
            master_seed: plan.master_seed,
            backends,
            pack_versions,
            trials: plan
                .trials
                .iter()
                .map(|t| (t.trial_id.clone(), TrialRecord::pending()))
                .collect(),
        }
    }

    pub fn load(dir: &RunDir) -> Result<Self> {
        read_json(&dir.manifest_path())
    }

    pub fn save(&self, dir: &RunDir) -> Result<()> {
        replace_atomic(&dir.manifest_path(), &to_json_bytes(self))
    }

    /// Refuses a plan other than the one this manifest was made for.
    pub fn check_plan(&self, plan: &ExperimentPlan) -> Result<()> {
        let digest = plan.digest();
        if digest != self.plan_digest {
            return Err(Error::DigestMismatch {
                plan: digest,
                manifest: self.plan_digest.clone(),
            });
        }
        Ok(())
    }

    /// Adds pending entries for trials appended to the plan and takes on
    /// the new digest.
    pub fn extend_for(&mut self, plan: &ExperimentPlan) {
        for t in &plan.trials {
            self.trials
                .entry(t.trial_id.clone())
                .or_insert_with(TrialRecord::pending);
        }
        self.plan_digest = plan.digest();
    }

    pub fn pending(&self) -> impl Iterator<Item = &str> {
        self.with_status(RunStatus::Pending)
    }

    pub fn with_status(&self, status: RunStatus) -> impl Iterator<Item = &str> {
        self.trials
            .iter()
            .filter(move |(_, r)| r.status == status)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, status: RunStatus) -> usize {
        self.with_status(status).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_plan, Design};

    #[test]
    fn new_manifest_is_all_pending() {
        let plan = build_plan(Design::Main, 2, 1).unwrap();
        let m = RunManifest::new(&plan, BTreeMap::new(), BTreeMap::new());
        assert_eq!(m.count(RunStatus::Pending), 24);
        assert!(m.check_plan(&plan).is_ok());
        let other = build_plan(Design::Main, 2, 2).unwrap();
        assert!(matches!(m.check_plan(&other), Err(Error::DigestMismatch { .. })));
    }

    #[test]
    fn save_and_load() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path());
        let plan = build_plan(Design::Main, 1, 1).unwrap();
        let mut m = RunManifest::new(&plan, BTreeMap::new(), BTreeMap::new());
        m.trials.values_mut().next().unwrap().status = RunStatus::Lost;
        m.save(&dir).unwrap();
        assert_eq!(RunManifest::load(&dir).unwrap(), m);
    }
}
