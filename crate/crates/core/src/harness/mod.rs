//! Run orchestration and persistence.

mod config;
mod execute;
mod infer;
mod isolation;
mod manifest;
mod report;
pub mod store;

pub use config::{BackendConfig, BackendKind, Backends, BootstrapConfig, RunConfig};
pub use execute::{execute, fault_seeds, label_for, load_plan, lost_requests, top_up_run, CellKey};
pub use infer::{applies, load_records, run_inference_pass, InferencePassSummary, InferenceRecord};
pub use isolation::{check_input, scan_run, IsolationViolation, RecordingBackend};
pub use manifest::{RunManifest, RunStatus, TrialRecord};
pub use report::{build_report, report, CountRow, LabeledEstimate, RunReport};
pub use store::{load_trial, write_trial, RunDir, Sidecar};
