use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use tracing::{info, warn};

use super::config::{Backends, RunConfig};
use super::manifest::{RunManifest, RunStatus, TrialRecord};
use super::store::{self, read_json, replace_atomic, to_json_bytes, write_new, RunDir, Sidecar};
use crate::agent::dialogue::DialogueError;
use crate::agent::{run_dialogue, DecisionRule, DialogueSetup};
use crate::error::{Error, Result};
use crate::model::{
    Condition, ExperimentPlan, PackSet, PlannedTrial, Scaffold, TrialLabel, TrialStatus,
};

/// How often (in finished trials) the manifest is flushed during a run.
const MANIFEST_FLUSH_EVERY: usize = 32;

pub fn label_for(packs: &PackSet, trial: &PlannedTrial, status: TrialStatus) -> Result<TrialLabel> {
    let profile_id = match trial.condition {
        Condition::Numeric => None,
        _ => Some(packs.profile(&trial.cell_id, trial.variant)?.id.clone()),
    };
    Ok(TrialLabel {
        trial_id: trial.trial_id.clone(),
        condition: trial.condition,
        cell_id: trial.cell_id.clone(),
        target_wtp: packs.target_for_cell(&trial.cell_id)?,
        profile_id,
        variant: trial.variant,
        scaffold: trial.scaffold,
        trial_number: trial.trial_number,
        seed: trial.seed,
        status,
    })
}

/// Seeds of the named trials, for fault injection.
pub fn fault_seeds(plan: &ExperimentPlan, trial_ids: &[String]) -> Result<Vec<u64>> {
    trial_ids
        .iter()
        .map(|id| {
            plan.trial(id)
                .map(|t| t.seed)
                .ok_or_else(|| Error::Validation(format!("fault target `{id}` is not in the plan")))
        })
        .collect()
}

/// Stores the plan in a fresh directory, or checks it against the one
/// already there.
fn bind_plan(dir: &RunDir, plan: &ExperimentPlan) -> Result<()> {
    let path = dir.plan_path();
    if path.exists() {
        let stored: ExperimentPlan = read_json(&path)?;
        if stored.digest() != plan.digest() {
            return Err(Error::DigestMismatch {
                plan: plan.digest(),
                manifest: stored.digest(),
            });
        }
        return Ok(());
    }
    write_new(&path, &to_json_bytes(plan))?;
    Ok(())
}

enum Outcome {
    Complete { retries: u32 },
    Lost { reason: String },
}

fn run_one(
    dir: &RunDir,
    trial: &PlannedTrial,
    packs: &PackSet,
    backends: &Backends,
    cfg: &RunConfig,
) -> Result<Outcome> {
    let instruction = packs.instruction_for(trial)?;
    let rule = DecisionRule {
        honor_explicit_marker: cfg.decision_marker,
    };
    let setup = DialogueSetup::with_rule(packs, &instruction, cfg.limits, rule)?.with_retry(cfg.retry);
    match run_dialogue(&setup, &*backends.buyer, &*backends.seller, trial.seed) {
        Ok(out) => {
            let sidecar = Sidecar {
                label: label_for(packs, trial, TrialStatus::Complete)?,
                turn_limit_hit: out.transcript.turn_limit_hit,
                truncated_turns: out.truncated_turns,
                lost_reason: None,
            };
            store::write_trial(dir, &out.transcript, &sidecar)?;
            Ok(Outcome::Complete {
                retries: out.retries,
            })
        }
        Err(e @ DialogueError::Backend { .. }) => {
            let reason = e.to_string();
            warn!(trial = %trial.trial_id, %reason, "trial lost");
            let sidecar = Sidecar {
                label: label_for(packs, trial, TrialStatus::Lost)?,
                turn_limit_hit: false,
                truncated_turns: Vec::new(),
                lost_reason: Some(reason.clone()),
            };
            store::write_lost(dir, &sidecar)?;
            Ok(Outcome::Lost { reason })
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs every pending trial of `plan` into `dir`. Re-invoking on the same
/// directory only runs what is still pending; a different plan is refused.
pub fn execute(
    dir: &RunDir,
    plan: &ExperimentPlan,
    packs: &PackSet,
    backends: &Backends,
    cfg: &RunConfig,
) -> Result<RunManifest> {
    plan.validate()?;
    cfg.validate()?;
    bind_plan(dir, plan)?;
    let mut manifest = if dir.manifest_path().exists() {
        let m = RunManifest::load(dir)?;
        m.check_plan(plan)?;
        m
    } else {
        RunManifest::new(plan, backends.identities(), packs.versions().clone())
    };
    manifest.backends = backends.identities();
    replace_atomic(&dir.config_path(), cfg.to_toml().as_bytes())?;

    let pending: Vec<&PlannedTrial> = plan
        .trials
        .iter()
        .filter(|t| {
            manifest
                .trials
                .get(&t.trial_id)
                .is_none_or(|r| r.status == RunStatus::Pending)
        })
        .collect();
    for t in &pending {
        store::clear_trial(dir, &t.trial_id)?;
        manifest
            .trials
            .insert(t.trial_id.clone(), TrialRecord::pending());
    }
    manifest.save(dir)?;
    info!(pending = pending.len(), total = plan.trials.len(), "executing trials");

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = cfg.concurrency.min(pending.len()).max(1);
    let mut fatal: Option<Error> = None;
    thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<(usize, Result<Outcome>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, pending) = (&next, &stop, &pending);
            s.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(trial) = pending.get(i) else { break };
                let result = run_one(dir, trial, packs, backends, cfg);
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut since_flush = 0;
        for (i, result) in rx {
            let id = pending[i].trial_id.clone();
            let record = match result {
                Ok(Outcome::Complete { retries }) => TrialRecord {
                    status: RunStatus::Complete,
                    reason: None,
                    retries,
                },
                Ok(Outcome::Lost { reason }) => TrialRecord {
                    status: RunStatus::Lost,
                    reason: Some(reason),
                    retries: cfg.retry.max_retries,
                },
                Err(e) => {
                    stop.store(true, Ordering::Relaxed);
                    fatal.get_or_insert(e.context(format!("trial {id}")));
                    continue;
                }
            };
            manifest.trials.insert(id, record);
            since_flush += 1;
            if since_flush >= MANIFEST_FLUSH_EVERY {
                since_flush = 0;
                if let Err(e) = manifest.save(dir) {
                    stop.store(true, Ordering::Relaxed);
                    fatal.get_or_insert(e);
                }
            }
        }
    });
    manifest.save(dir)?;
    if let Some(e) = fatal {
        return Err(e);
    }
    info!(
        complete = manifest.count(RunStatus::Complete),
        lost = manifest.count(RunStatus::Lost),
        "run finished"
    );
    Ok(manifest)
}

/// Loads the plan stored in a run directory.
pub fn load_plan(dir: &RunDir) -> Result<ExperimentPlan> {
    read_json(&dir.plan_path())
}

pub type CellKey = (Condition, String, u8, Scaffold);

/// One top-up request per design cell with lost trials, sized to the loss.
pub fn lost_requests(plan: &ExperimentPlan, manifest: &RunManifest) -> Vec<(CellKey, u32)> {
    let mut counts: BTreeMap<CellKey, u32> = BTreeMap::new();
    for t in &plan.trials {
        if manifest.trials.get(&t.trial_id).map(|r| r.status) == Some(RunStatus::Lost) {
            *counts
                .entry((t.condition, t.cell_id.clone(), t.variant, t.scaffold))
                .or_default() += 1;
        }
    }
    counts.into_iter().collect()
}

/// Appends new trial numbers to a run's plan and executes them. Lost trials
/// stay lost.
pub fn top_up_run(
    dir: &RunDir,
    requests: &[(CellKey, u32)],
    packs: &PackSet,
    backends: &Backends,
    cfg: &RunConfig,
) -> Result<(Vec<PlannedTrial>, RunManifest)> {
    let mut plan = load_plan(dir)?;
    let mut manifest = RunManifest::load(dir)?;
    manifest.check_plan(&plan)?;
    let added = plan.top_up(requests)?;
    if added.is_empty() {
        return Ok((added, manifest));
    }
    manifest.extend_for(&plan);
    replace_atomic(&dir.plan_path(), &to_json_bytes(&plan))?;
    manifest.save(dir)?;
    let manifest = execute(dir, &plan, packs, backends, cfg)?;
    Ok((added, manifest))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{builtin_packs, Design};

    fn setup(n: u32) -> (tempfile::TempDir, RunDir, ExperimentPlan, Arc<PackSet>, RunConfig) {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path().join("run"));
        let packs = Arc::new(builtin_packs().clone());
        let plan = ExperimentPlan::build(&packs, Design::Main, n, 5).unwrap();
        (tmp, dir, plan, packs, RunConfig::scripted(n, 5))
    }

    #[test]
    fn main_plan_two_per_cell() {
        let (_tmp, dir, plan, packs, cfg) = setup(2);
        let b = Backends::scripted(packs.clone());
        let m = execute(&dir, &plan, &packs, &b, &cfg).unwrap();
        assert_eq!(m.count(RunStatus::Complete), 24);
        let files: Vec<_> = std::fs::read_dir(dir.trials_dir()).unwrap().collect();
        assert_eq!(files.len(), 48);
        for t in &plan.trials {
            assert!(dir.transcript_path(&t.trial_id).exists());
            assert!(dir.label_path(&t.trial_id).exists());
        }
    }

    #[test]
    fn refuses_other_plan() {
        let (_tmp, dir, plan, packs, cfg) = setup(1);
        let b = Backends::scripted(packs.clone());
        execute(&dir, &plan, &packs, &b, &cfg).unwrap();
        let other = ExperimentPlan::build(&packs, Design::Main, 1, 6).unwrap();
        assert!(matches!(
            execute(&dir, &other, &packs, &b, &cfg),
            Err(Error::DigestMismatch { .. })
        ));
    }

    #[test]
    fn injected_failures_are_lost_and_topped_up() {
        let (_tmp, dir, plan, packs, cfg) = setup(2);
        let ids = vec![plan.trials[0].trial_id.clone()];
        let b = Backends::scripted(packs.clone()).with_buyer_faults(fault_seeds(&plan, &ids).unwrap());
        let m = execute(&dir, &plan, &packs, &b, &cfg).unwrap();
        assert_eq!(m.count(RunStatus::Lost), 1);
        assert!(!dir.transcript_path(&ids[0]).exists());
        let sidecar = store::load_sidecar(&dir, &ids[0]).unwrap();
        assert_eq!(sidecar.label.status, TrialStatus::Lost);

        let requests = lost_requests(&plan, &m);
        assert_eq!(requests.len(), 1);
        let clean = Backends::scripted(packs.clone());
        let (added, m) = top_up_run(&dir, &requests, &packs, &clean, &cfg).unwrap();
        assert_eq!(added.len(), 1);
        assert_eq!(added[0].trial_number, 3);
        assert_eq!(m.count(RunStatus::Lost), 1);
        assert_eq!(m.count(RunStatus::Complete), 24);
    }

    #[test]
    fn fault_target_must_exist() {
        let (_tmp, _dir, plan, _packs, _cfg) = setup(1);
        assert!(fault_seeds(&plan, &["nope".into()]).is_err());
    }
}
