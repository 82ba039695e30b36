use std::collections::BTreeMap;
use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::config::Backends;
use super::manifest::{RunManifest, RunStatus};
use super::store::{self, read_json, replace_atomic, to_json_bytes, write_new, RunDir, Sidecar};
use crate::agent::RetryPolicy;
use crate::error::{Error, Result};
use crate::inference::{infer_wtp, InferenceSettings};
use crate::model::{Condition, InferenceReport, InferenceVariant, PackSet, Transcript, TrialStatus};
use crate::redaction::{redact_dollars, redact_persona, RedactionReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub trial_id: String,
    pub variant: InferenceVariant,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<InferenceReport>,
    #[serde(default)]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redaction: Option<RedactionReport>,
    pub backend: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferencePassSummary {
    /// Records written in this pass, by variant.
    pub written: BTreeMap<InferenceVariant, usize>,
    pub lost: BTreeMap<InferenceVariant, usize>,
    /// Records already present from an earlier pass.
    pub existing: usize,
    /// Trials listed as complete whose transcript is missing.
    pub skipped_missing: usize,
}

impl InferencePassSummary {
    pub fn total_written(&self) -> usize {
        self.written.values().sum()
    }
}

/// The persona variant applies to profile-driven trials only.
pub fn applies(variant: InferenceVariant, condition: Condition) -> bool {
    variant != InferenceVariant::PersonaRedacted || condition != Condition::Numeric
}

fn inference_seed(seed: u64, variant: InferenceVariant) -> u64 {
    seed ^ ((variant as u64 + 1) << 56)
}

/// Trial ids that completed, from the manifest if there is one, else from
/// the sidecars on disk.
fn completed_trials(dir: &RunDir) -> Result<Vec<String>> {
    if dir.manifest_path().exists() {
        let m = RunManifest::load(dir)?;
        return Ok(m.with_status(RunStatus::Complete).map(str::to_string).collect());
    }
    let trials = dir.trials_dir();
    if !trials.exists() {
        return Ok(Vec::new());
    }
    let mut ids = Vec::new();
    for entry in fs::read_dir(&trials).map_err(|e| Error::io(&trials, e))? {
        let path = entry.map_err(|e| Error::io(&trials, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(id) = name.strip_suffix(".label.json") {
            let s: Sidecar = read_json(&path)?;
            if s.label.status == TrialStatus::Complete {
                ids.push(id.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Produces the transcript variant the inference agent reads, and stores
/// the redacted text next to the original.
fn prepare_variant(
    dir: &RunDir,
    t: &Transcript,
    sidecar: &Sidecar,
    variant: InferenceVariant,
    packs: &PackSet,
    backends: &Backends,
    retry: &RetryPolicy,
) -> Result<(Transcript, Option<RedactionReport>)> {
    let id = &sidecar.label.trial_id;
    let (out, report) = match variant {
        InferenceVariant::Full => return Ok((t.clone(), None)),
        InferenceVariant::DollarRedacted => redact_dollars(t, packs),
        InferenceVariant::PersonaRedacted => {
            let seed = inference_seed(sidecar.label.seed, variant);
            redact_persona(t, &*backends.redactor, packs, retry, seed)?
        }
    };
    if !report.is_clean() {
        warn!(trial = %id, %variant, violations = report.residual_violations.len(), "redaction left residual violations");
    }
    replace_atomic(&dir.variant_path(id, variant), out.to_marker_text().as_bytes())?;
    replace_atomic(&dir.redaction_report_path(id, variant), &to_json_bytes(&report))?;
    Ok((out, Some(report)))
}

fn infer_one(
    dir: &RunDir,
    trial_id: &str,
    variant: InferenceVariant,
    packs: &PackSet,
    backends: &Backends,
    settings: &InferenceSettings,
) -> Result<Option<InferenceRecord>> {
    let (t, sidecar) = store::load_trial(dir, trial_id)?;
    if !applies(variant, sidecar.label.condition) {
        return Ok(None);
    }
    let lost = |reason: String, redaction: Option<RedactionReport>| InferenceRecord {
        trial_id: trial_id.to_string(),
        variant,
        status: RunStatus::Lost,
        report: None,
        retries: settings.retry.max_retries,
        reason: Some(reason),
        redaction,
        backend: backends.inference.identity(),
    };
    let (input, redaction) = match prepare_variant(dir, &t, &sidecar, variant, packs, backends, &settings.retry) {
        Ok(v) => v,
        Err(e @ Error::Backend(_)) => {
            warn!(trial = %trial_id, %variant, error = %e, "redaction failed");
            return Ok(Some(lost(format!("redaction: {e}"), None)));
        }
        Err(e) => return Err(e),
    };
    let seed = inference_seed(sidecar.label.seed, variant);
    let record = match infer_wtp(&input, variant, &*backends.inference, packs, settings, seed) {
        Ok((report, retries)) => InferenceRecord {
            trial_id: trial_id.to_string(),
            variant,
            status: RunStatus::Complete,
            report: Some(report),
            retries,
            reason: None,
            redaction,
            backend: backends.inference.identity(),
        },
        Err(e @ (Error::Backend(_) | Error::Parse(_) | Error::Contract(_))) => {
            warn!(trial = %trial_id, %variant, error = %e, "inference lost");
            lost(e.to_string(), redaction)
        }
        Err(e) => return Err(e),
    };
    Ok(Some(record))
}

/// Redacts and infers every completed trial for each requested variant.
/// Records already on disk are kept; missing transcripts are skipped.
pub fn run_inference_pass(
    dir: &RunDir,
    variants: &[InferenceVariant],
    packs: &PackSet,
    backends: &Backends,
    settings: &InferenceSettings,
    concurrency: usize,
) -> Result<InferencePassSummary> {
    let trials = completed_trials(dir)?;
    let mut summary = InferencePassSummary::default();
    if trials.is_empty() {
        warn!(dir = %dir.root().display(), "no completed trials to infer from");
        return Ok(summary);
    }
    let mut jobs = Vec::new();
    for id in &trials {
        if !dir.transcript_path(id).exists() || !dir.label_path(id).exists() {
            warn!(trial = %id, "transcript missing, skipped");
            summary.skipped_missing += 1;
            continue;
        }
        for &v in variants {
            if dir.inference_path(id, v).exists() {
                summary.existing += 1;
            } else {
                jobs.push((id.as_str(), v));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let results: Vec<Result<Option<InferenceRecord>>> = pool.install(|| {
        jobs.par_iter()
            .map(|(id, v)| {
                let rec = infer_one(dir, id, *v, packs, backends, settings)
                    .map_err(|e| e.context(format!("trial {id} ({v})")))?;
                if let Some(r) = &rec {
                    write_new(&dir.inference_path(id, *v), &to_json_bytes(r))?;
                }
                Ok(rec)
            })
            .collect()
    });
    for r in results {
        let Some(rec) = r? else { continue };
        let bucket = match rec.status {
            RunStatus::Complete => &mut summary.written,
            _ => &mut summary.lost,
        };
        *bucket.entry(rec.variant).or_default() += 1;
    }
    info!(written = summary.total_written(), existing = summary.existing, "inference pass finished");
    Ok(summary)
}

/// Every inference record in a run directory, in file-name order.
pub fn load_records(dir: &RunDir) -> Result<Vec<InferenceRecord>> {
    let path = dir.inference_dir();
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<_> = fs::read_dir(&path)
        .map_err(|e| Error::io(&path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files.iter().map(|p| read_json(p)).collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::harness::{execute, RunConfig};
    use crate::model::{builtin_packs, Design, ExperimentPlan};

    #[test]
    fn empty_dir_gives_no_records() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path());
        let packs = Arc::new(builtin_packs().clone());
        let b = Backends::scripted(packs.clone());
        let s = run_inference_pass(&dir, &InferenceVariant::ALL, &packs, &b, &InferenceSettings::default(), 2).unwrap();
        assert_eq!(s.total_written(), 0);
        assert!(load_records(&dir).unwrap().is_empty());
    }

    #[test]
    fn variants_and_persona_scope() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path());
        let packs = Arc::new(builtin_packs().clone());
        let b = Backends::scripted(packs.clone());
        let cfg = RunConfig::scripted(1, 3);
        let plan = ExperimentPlan::build(&packs, Design::Main, 1, 3).unwrap();
        execute(&dir, &plan, &packs, &b, &cfg).unwrap();
        let settings = InferenceSettings {
            retry: RetryPolicy::immediate(2),
            ..Default::default()
        };
        let s = run_inference_pass(&dir, &InferenceVariant::ALL, &packs, &b, &settings, 4).unwrap();
        assert_eq!(s.written[&InferenceVariant::Full], 12);
        assert_eq!(s.written[&InferenceVariant::DollarRedacted], 12);
        assert_eq!(s.written[&InferenceVariant::PersonaRedacted], 6);
        assert!(s.lost.is_empty());
        let again = run_inference_pass(&dir, &InferenceVariant::ALL, &packs, &b, &settings, 4).unwrap();
        assert_eq!(again.total_written(), 0);
        assert_eq!(again.existing, 30);
        assert_eq!(load_records(&dir).unwrap().len(), 30);
    }

    #[test]
    fn missing_transcript_is_skipped() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path());
        let packs = Arc::new(builtin_packs().clone());
        let b = Backends::scripted(packs.clone());
        let plan = ExperimentPlan::build(&packs, Design::Main, 1, 3).unwrap();
        execute(&dir, &plan, &packs, &b, &RunConfig::scripted(1, 3)).unwrap();
        fs::remove_file(dir.transcript_path(&plan.trials[0].trial_id)).unwrap();
        let s = run_inference_pass(&dir, &[InferenceVariant::Full], &packs, &b, &InferenceSettings::default(), 2).unwrap();
        assert_eq!(s.skipped_missing, 1);
        assert_eq!(s.total_written(), 11);
    }
}
