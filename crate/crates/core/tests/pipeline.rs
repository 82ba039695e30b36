mod common;

use std::collections::BTreeSet;
use std::fs;
use std::sync::{Arc, Mutex};

use common::packs;
use leakage_core::agent::{BackendError, CompletionBackend, Message, RetryPolicy, ScriptedBuyer};
use leakage_core::harness::{
    build_report, execute, load_records, report, run_inference_pass, store, Backends, BootstrapConfig, RunConfig,
    RunDir, RunManifest, RunStatus,
};
use leakage_core::inference::InferenceSettings;
use leakage_core::model::{Condition, Design, ExperimentPlan, InferenceVariant};
use leakage_core::Error;

/// Remembers which seeds it was asked about.
struct SeedLog<B> {
    inner: B,
    seeds: Mutex<BTreeSet<u64>>,
}

impl<B: CompletionBackend> CompletionBackend for SeedLog<B> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn complete(&self, system: &str, history: &[Message], seed: u64) -> Result<String, BackendError> {
        self.seeds.lock().unwrap().insert(seed);
        self.inner.complete(system, history, seed)
    }
}

fn settings() -> InferenceSettings {
    InferenceSettings {
        retry: RetryPolicy::immediate(2),
        ..Default::default()
    }
}

#[test]
fn resume_runs_only_pending_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = RunDir::new(tmp.path());
    let packs = packs();
    let plan = ExperimentPlan::build(&packs, Design::Main, 2, 11).unwrap();
    let cfg = RunConfig::scripted(2, 11);
    execute(&dir, &plan, &packs, &Backends::scripted(packs.clone()), &cfg).unwrap();

    // Pretend the process died halfway: half the trials pending, with a
    // partial transcript left behind for one of them.
    let mut m = RunManifest::load(&dir).unwrap();
    let reset: Vec<String> = plan.trials.iter().step_by(2).map(|t| t.trial_id.clone()).collect();
    for id in &reset {
        m.trials.get_mut(id).unwrap().status = RunStatus::Pending;
        fs::remove_file(dir.label_path(id)).unwrap();
    }
    fs::write(dir.transcript_path(&reset[0]), "[BUYER] partial").unwrap();
    m.save(&dir).unwrap();

    let log = Arc::new(SeedLog {
        inner: ScriptedBuyer::new(packs.clone()),
        seeds: Mutex::new(BTreeSet::new()),
    });
    let mut backends = Backends::scripted(packs.clone());
    backends.buyer = log.clone();
    let m = execute(&dir, &plan, &packs, &backends, &cfg).unwrap();
    let expected: BTreeSet<u64> = plan
        .trials
        .iter()
        .filter(|t| reset.contains(&t.trial_id))
        .map(|t| t.seed)
        .collect();
    assert_eq!(*log.seeds.lock().unwrap(), expected);
    assert_eq!(m.count(RunStatus::Complete), 24);
    let (t, _) = store::load_trial(&dir, &reset[0]).unwrap();
    assert!(t.turns.len() > 1);
}

#[test]
fn fresh_directories_get_identical_bytes() {
    let packs = packs();
    let plan = ExperimentPlan::build_many(&packs, &[Design::Main, Design::Stripped], 2, 5).unwrap();
    let read = |dir: &RunDir| -> Vec<(String, Vec<u8>)> {
        plan.trials
            .iter()
            .map(|t| (t.trial_id.clone(), fs::read(dir.transcript_path(&t.trial_id)).unwrap()))
            .collect()
    };
    let mut outputs = Vec::new();
    for concurrency in [1, 7] {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path());
        let cfg = RunConfig {
            concurrency,
            ..RunConfig::scripted(2, 5)
        };
        execute(&dir, &plan, &packs, &Backends::scripted(packs.clone()), &cfg).unwrap();
        outputs.push(read(&dir));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn transcript_and_sidecar_files_do_not_mix() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = RunDir::new(tmp.path());
    let packs = packs();
    let plan = ExperimentPlan::build(&packs, Design::Main, 1, 3).unwrap();
    execute(&dir, &plan, &packs, &Backends::scripted(packs.clone()), &RunConfig::scripted(1, 3)).unwrap();
    for t in &plan.trials {
        let text = fs::read_to_string(dir.transcript_path(&t.trial_id)).unwrap();
        assert!(!text.contains(&t.trial_id) && !text.contains(&t.cell_id) && !text.contains(&t.seed.to_string()));
        assert!(text.lines().filter(|l| !l.is_empty()).all(|l| l.starts_with("[BUYER] ") || l.starts_with("[SELLER] ")));
        let label = fs::read_to_string(dir.label_path(&t.trial_id)).unwrap();
        assert!(!label.contains("[BUYER]") && !label.contains("[SELLER]"));
    }
}

#[test]
fn report_writes_tables_and_persona_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = RunDir::new(tmp.path());
    let packs = packs();
    let plan = ExperimentPlan::build_many(&packs, &[Design::Main, Design::Factorial], 3, 8).unwrap();
    let backends = Backends::scripted(packs.clone());
    execute(&dir, &plan, &packs, &backends, &RunConfig::scripted(3, 8)).unwrap();
    let s = run_inference_pass(&dir, &InferenceVariant::ALL, &packs, &backends, &settings(), 4).unwrap();
    // Persona redaction only applies to the profile-driven trials.
    let profiled = plan.trials.iter().filter(|t| t.condition != Condition::Numeric).count();
    assert_eq!(s.written[&InferenceVariant::PersonaRedacted], profiled);
    assert_eq!(s.written[&InferenceVariant::Full], plan.trials.len());
    let boot = BootstrapConfig { resamples: 200, seed: 1 };
    let r = report(&dir, &boot).unwrap();
    let names: Vec<String> = r.files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for expected in [
        "summary.csv",
        "verbal_full_cells.csv",
        "numeric_dollar_redacted_plot.csv",
        "comparison_verbal_vs_numeric.csv",
        "variance_full.csv",
        "counts.csv",
        "metrics.json",
    ] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
    }
    assert_eq!(r.metrics.factorial.len(), 3);
    let verbal = r.metrics.conditions.iter().find(|c| c.condition == "verbal").unwrap();
    assert_eq!(verbal.variant(InferenceVariant::Full).unwrap().n, 18);
}

#[test]
fn report_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = RunDir::new(tmp.path());
    let boot = BootstrapConfig { resamples: 50, seed: 1 };
    assert!(matches!(build_report(&dir, &boot), Err(Error::Data(_))));

    let packs = packs();
    let plan = ExperimentPlan::build(&packs, Design::Main, 2, 4).unwrap();
    let backends = Backends::scripted(packs.clone());
    execute(&dir, &plan, &packs, &backends, &RunConfig::scripted(2, 4)).unwrap();
    run_inference_pass(&dir, &[InferenceVariant::Full], &packs, &backends, &settings(), 2).unwrap();
    for rec in load_records(&dir).unwrap() {
        if !rec.trial_id.starts_with("numeric_np_50_") {
            fs::remove_file(dir.inference_path(&rec.trial_id, rec.variant)).unwrap();
        }
    }
    match build_report(&dir, &boot) {
        Err(Error::DegenerateDesign(msg)) => assert!(msg.contains("numeric"), "{msg}"),
        other => panic!("expected a degenerate design error, got {other:?}"),
    }
}
