//! On-disk layout of a run directory.
//!
//! ```text
//! plan.json  manifest.json  config.toml
//! trials/<id>.txt                 transcript, bracket-marker text only
//! trials/<id>.label.json          sidecar label
//! trials/<id>.<variant>.txt       redacted transcript
//! trials/<id>.<variant>.redaction.json
//! inference/<id>.<variant>.json   inference record
//! reports/                        metrics.json and CSV tables
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InferenceVariant, Transcript, TrialLabel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn plan_path(&self) -> PathBuf {
        self.root.join("plan.json")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn trials_dir(&self) -> PathBuf {
        self.root.join("trials")
    }

    pub fn inference_dir(&self) -> PathBuf {
        self.root.join("inference")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn transcript_path(&self, trial_id: &str) -> PathBuf {
        self.trials_dir().join(format!("{trial_id}.txt"))
    }

    pub fn label_path(&self, trial_id: &str) -> PathBuf {
        self.trials_dir().join(format!("{trial_id}.label.json"))
    }

    pub fn variant_path(&self, trial_id: &str, variant: InferenceVariant) -> PathBuf {
        match variant {
            InferenceVariant::Full => self.transcript_path(trial_id),
            v => self.trials_dir().join(format!("{trial_id}.{v}.txt")),
        }
    }

    pub fn redaction_report_path(&self, trial_id: &str, variant: InferenceVariant) -> PathBuf {
        self.trials_dir().join(format!("{trial_id}.{variant}.redaction.json"))
    }

    pub fn inference_path(&self, trial_id: &str, variant: InferenceVariant) -> PathBuf {
        self.inference_dir().join(format!("{trial_id}.{variant}.json"))
    }
}

/// Writes via a temporary file and rename so readers never see a partial
/// file. Replaces any existing content.
pub fn replace_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Like [`replace_atomic`], but an existing file must hold the same bytes.
/// Returns false when the write was a no-op.
pub fn write_new(path: &Path, bytes: &[u8]) -> Result<bool> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => Ok(false),
        Ok(_) => Err(Error::Collision {
            path: path.to_path_buf(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            replace_atomic(path, bytes)?;
            Ok(true)
        }
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("record serializes");
    bytes.push(b'\n');
    bytes
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path.display().to_string(), e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Sidecar contents: the trial label plus run outcome flags. Never holds
/// dialogue text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(flatten)]
    pub label: TrialLabel,
    pub turn_limit_hit: bool,
    #[serde(default)]
    pub truncated_turns: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lost_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialPaths {
    pub transcript: PathBuf,
    pub sidecar: PathBuf,
}

/// Writes a transcript and its sidecar. Rewriting identical content is a
/// no-op; different content at the same path is an error.
pub fn write_trial(dir: &RunDir, t: &Transcript, sidecar: &Sidecar) -> Result<TrialPaths> {
    t.validate()?;
    let id = &sidecar.label.trial_id;
    let paths = TrialPaths {
        transcript: dir.transcript_path(id),
        sidecar: dir.label_path(id),
    };
    write_new(&paths.transcript, t.to_marker_text().as_bytes())?;
    write_new(&paths.sidecar, &to_json_bytes(sidecar))?;
    Ok(paths)
}

/// Sidecar for a trial that produced no transcript.
pub fn write_lost(dir: &RunDir, sidecar: &Sidecar) -> Result<PathBuf> {
    let path = dir.label_path(&sidecar.label.trial_id);
    write_new(&path, &to_json_bytes(sidecar))?;
    Ok(path)
}

pub fn load_sidecar(dir: &RunDir, trial_id: &str) -> Result<Sidecar> {
    read_json(&dir.label_path(trial_id))
}

pub fn load_transcript(path: &Path) -> Result<Transcript> {
    Transcript::parse_marker_text(&read_text(path)?)
}

pub fn load_trial(dir: &RunDir, trial_id: &str) -> Result<(Transcript, Sidecar)> {
    let sidecar = load_sidecar(dir, trial_id)?;
    let mut t = load_transcript(&dir.transcript_path(trial_id))?;
    t.turn_limit_hit = sidecar.turn_limit_hit;
    Ok((t, sidecar))
}

/// Removes whatever a crashed attempt left behind for a trial.
pub(crate) fn clear_trial(dir: &RunDir, trial_id: &str) -> Result<()> {
    for path in [dir.transcript_path(trial_id), dir.label_path(trial_id)] {
        match fs::remove_file(&path) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(&path, e)),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Condition, Scaffold, TrialStatus, Turn};
    use crate::money::Cents;

    fn sidecar() -> Sidecar {
        Sidecar {
            label: TrialLabel {
                trial_id: "verbal_vp_50_v1A_t001".into(),
                condition: Condition::Verbal,
                cell_id: "vp_50".into(),
                target_wtp: Cents(5000),
                profile_id: Some("vp_50".into()),
                variant: 1,
                scaffold: Scaffold::A,
                trial_number: 1,
                seed: 12345678901234,
                status: TrialStatus::Complete,
            },
            turn_limit_hit: true,
            truncated_turns: vec![],
            lost_reason: None,
        }
    }

    fn transcript() -> Transcript {
        Transcript::new(
            vec![Turn::buyer("Hello."), Turn::seller("Hi! The SoundCore Pro X is $49.99.")],
            true,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_and_idempotence() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path());
        let paths = write_trial(&dir, &transcript(), &sidecar()).unwrap();
        let (t, s) = load_trial(&dir, "verbal_vp_50_v1A_t001").unwrap();
        assert_eq!(t, transcript());
        assert_eq!(s, sidecar());
        let before = fs::metadata(&paths.transcript).unwrap().modified().unwrap();
        write_trial(&dir, &transcript(), &sidecar()).unwrap();
        assert_eq!(fs::metadata(&paths.transcript).unwrap().modified().unwrap(), before);
    }

    #[test]
    fn collision_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path());
        write_trial(&dir, &transcript(), &sidecar()).unwrap();
        let other = Transcript::new(vec![Turn::buyer("Different.")], true).unwrap();
        assert!(matches!(
            write_trial(&dir, &other, &sidecar()),
            Err(Error::Collision { .. })
        ));
    }

    #[test]
    fn files_are_partitioned() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path());
        let paths = write_trial(&dir, &transcript(), &sidecar()).unwrap();
        let text = fs::read_to_string(paths.transcript).unwrap();
        for value in ["verbal_vp_50_v1A_t001", "vp_50", "12345678901234", "5000"] {
            assert!(!text.contains(value));
        }
        let label = fs::read_to_string(paths.sidecar).unwrap();
        assert!(!label.contains("SoundCore") && !label.contains("[BUYER]"));
    }
}
