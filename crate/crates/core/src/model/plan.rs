use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{builtin_packs, Condition, PackSet, Scaffold};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Verbal and numeric conditions, six cells each, variant 1 / scaffold A.
    Main,
    /// Verbal cells crossed with the five non-baseline (variant, scaffold)
    /// combinations.
    Factorial,
    /// Stripped-vocabulary verbal profiles.
    Stripped,
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::Main => "main",
            Design::Factorial => "factorial",
            Design::Stripped => "stripped",
        })
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(Design::Main),
            "factorial" => Ok(Design::Factorial),
            "stripped" => Ok(Design::Stripped),
            other => Err(Error::Validation(format!("unknown design `{other}`"))),
        }
    }
}

/// (variant, scaffold) pairs the factorial adds on top of the baseline (1, A).
pub const FACTORIAL_COMBOS: [(u8, Scaffold); 5] = [
    (1, Scaffold::B),
    (2, Scaffold::A),
    (2, Scaffold::B),
    (3, Scaffold::A),
    (3, Scaffold::B),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedTrial {
    pub trial_id: String,
    pub condition: Condition,
    pub cell_id: String,
    pub variant: u8,
    pub scaffold: Scaffold,
    pub trial_number: u32,
    pub seed: u64,
}

impl PlannedTrial {
    fn new(
        master_seed: u64,
        condition: Condition,
        cell_id: &str,
        variant: u8,
        scaffold: Scaffold,
        trial_number: u32,
    ) -> Self {
        PlannedTrial {
            trial_id: format!("{condition}_{cell_id}_v{variant}{scaffold}_t{trial_number:03}"),
            condition,
            cell_id: cell_id.to_string(),
            variant,
            scaffold,
            trial_number,
            seed: derive_seed(master_seed, condition, cell_id, variant, scaffold, trial_number),
        }
    }

    fn key(&self) -> (Condition, &str, u8, Scaffold, u32) {
        (
            self.condition,
            &self.cell_id,
            self.variant,
            self.scaffold,
            self.trial_number,
        )
    }
}

/// Trial seed from the master seed and the trial's design tuple.
pub fn derive_seed(
    master_seed: u64,
    condition: Condition,
    cell_id: &str,
    variant: u8,
    scaffold: Scaffold,
    trial_number: u32,
) -> u64 {
    let key = format!("{master_seed}|{condition}|{cell_id}|{variant}|{scaffold}|{trial_number}");
    let digest = Sha256::digest(key.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub master_seed: u64,
    pub designs: Vec<Design>,
    pub trials_per_cell: u32,
    pub trials: Vec<PlannedTrial>,
}

/// Builds a plan from the built-in packs.
pub fn build_plan(design: Design, trials_per_cell: u32, master_seed: u64) -> Result<ExperimentPlan> {
    ExperimentPlan::build(builtin_packs(), design, trials_per_cell, master_seed)
}

impl ExperimentPlan {
    pub fn build(
        packs: &PackSet,
        design: Design,
        trials_per_cell: u32,
        master_seed: u64,
    ) -> Result<Self> {
        if trials_per_cell < 1 {
            return Err(Error::Validation("trials_per_cell must be at least 1".into()));
        }
        let mut trials = Vec::new();
        let mut push_cells = |condition: Condition, combos: &[(u8, Scaffold)]| {
            for cell in packs.cells(condition) {
                for &(variant, scaffold) in combos {
                    for n in 1..=trials_per_cell {
                        trials.push(PlannedTrial::new(
                            master_seed,
                            condition,
                            &cell,
                            variant,
                            scaffold,
                            n,
                        ));
                    }
                }
            }
        };
        match design {
            Design::Main => {
                push_cells(Condition::Numeric, &[(1, Scaffold::A)]);
                push_cells(Condition::Verbal, &[(1, Scaffold::A)]);
            }
            Design::Factorial => push_cells(Condition::Verbal, &FACTORIAL_COMBOS),
            Design::Stripped => push_cells(Condition::Stripped, &[(1, Scaffold::A)]),
        }
        if trials.is_empty() {
            return Err(Error::Validation(format!("design {design} has no cells")));
        }
        let plan = ExperimentPlan {
            name: design.to_string(),
            master_seed,
            designs: vec![design],
            trials_per_cell,
            trials,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Builds and concatenates several designs under one master seed.
    pub fn build_many(
        packs: &PackSet,
        designs: &[Design],
        trials_per_cell: u32,
        master_seed: u64,
    ) -> Result<Self> {
        let (first, rest) = designs
            .split_first()
            .ok_or_else(|| Error::Validation("no designs given".into()))?;
        let mut plan = Self::build(packs, *first, trials_per_cell, master_seed)?;
        for d in rest {
            plan.merge(Self::build(packs, *d, trials_per_cell, master_seed)?)?;
        }
        Ok(plan)
    }

    pub fn merge(&mut self, other: ExperimentPlan) -> Result<()> {
        if other.master_seed != self.master_seed {
            return Err(Error::Validation("cannot merge plans with different seeds".into()));
        }
        self.name = format!("{}+{}", self.name, other.name);
        self.designs.extend(other.designs);
        self.trials.extend(other.trials);
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut ids = HashSet::new();
        for t in &self.trials {
            if !seen.insert(t.key()) || !ids.insert(t.trial_id.as_str()) {
                return Err(Error::Validation(format!("duplicate trial {}", t.trial_id)));
            }
        }
        Ok(())
    }

    /// Appends `count` new trial numbers to each listed design cell.
    /// Existing trials (including lost ones) are left untouched.
    pub fn top_up(
        &mut self,
        requests: &[((Condition, String, u8, Scaffold), u32)],
    ) -> Result<Vec<PlannedTrial>> {
        let mut next: BTreeMap<(Condition, String, u8, Scaffold), u32> = BTreeMap::new();
        for t in &self.trials {
            let key = (t.condition, t.cell_id.clone(), t.variant, t.scaffold);
            let e = next.entry(key).or_insert(0);
            *e = (*e).max(t.trial_number);
        }
        let mut added = Vec::new();
        for (key, count) in requests {
            let last = next.get(key).copied().ok_or_else(|| {
                Error::Validation(format!("top-up cell {key:?} is not part of the plan"))
            })?;
            for k in 1..=*count {
                added.push(PlannedTrial::new(
                    self.master_seed,
                    key.0,
                    &key.1,
                    key.2,
                    key.3,
                    last + k,
                ));
            }
            next.insert(key.clone(), last + count);
        }
        self.trials.extend(added.iter().cloned());
        self.validate()?;
        Ok(added)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn trial(&self, trial_id: &str) -> Option<&PlannedTrial> {
        self.trials.iter().find(|t| t.trial_id == trial_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn main_and_factorial_sizes() {
        assert_eq!(build_plan(Design::Main, 60, 7).unwrap().trials.len(), 720);
        assert_eq!(build_plan(Design::Factorial, 15, 7).unwrap().trials.len(), 450);
        assert_eq!(build_plan(Design::Stripped, 2, 7).unwrap().trials.len(), 12);
    }

    #[test]
    fn zero_trials_rejected() {
        let err = build_plan(Design::Main, 0, 7).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn main_uses_baseline_combo() {
        let plan = build_plan(Design::Main, 3, 1).unwrap();
        assert!(plan
            .trials
            .iter()
            .all(|t| t.variant == 1 && t.scaffold == Scaffold::A));
        let verbal = plan
            .trials
            .iter()
            .filter(|t| t.condition == Condition::Verbal)
            .count();
        assert_eq!(verbal, 18);
    }

    #[test]
    fn factorial_excludes_baseline() {
        let plan = build_plan(Design::Factorial, 1, 1).unwrap();
        assert!(!plan
            .trials
            .iter()
            .any(|t| t.variant == 1 && t.scaffold == Scaffold::A));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = build_plan(Design::Main, 4, 99).unwrap();
        let b = build_plan(Design::Main, 4, 99).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert_eq!(a.digest(), b.digest());
        let c = build_plan(Design::Main, 4, 100).unwrap();
        assert_ne!(a.trials[0].seed, c.trials[0].seed);
        let seeds: HashSet<u64> = a.trials.iter().map(|t| t.seed).collect();
        assert_eq!(seeds.len(), a.trials.len());
    }

    #[test]
    fn merge_rejects_duplicates() {
        let mut a = build_plan(Design::Main, 2, 5).unwrap();
        let err = a.merge(build_plan(Design::Main, 2, 5).unwrap()).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn top_up_appends_numbers() {
        let mut plan = build_plan(Design::Stripped, 60, 5).unwrap();
        let key = (Condition::Stripped, "sv_300".to_string(), 1, Scaffold::A);
        let added = plan.top_up(&[(key, 2)]).unwrap();
        assert_eq!(added.len(), 2);
        assert_eq!(added[0].trial_number, 61);
        assert_eq!(added[1].trial_id, "stripped_sv_300_v1A_t062");
        assert_eq!(plan.trials.len(), 362);
    }
}
