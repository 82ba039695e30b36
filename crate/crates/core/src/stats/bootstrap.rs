//! Percentile bootstrap for the cell-mean slope.
//!
//! Seeding rule: resample `i` of the cell at canonical index `c` (cells
//! ordered by target, then id) draws from a ChaCha8 stream keyed by the
//! master seed with stream id `(i << 32) | c`. The design draw of the
//! design-aware bootstrap uses stream `(i << 32) | 0xFFFF_FFFF`. Results do
//! not depend on the order cells are passed in or on thread scheduling.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regression::ols_slope;
use super::summary::{canonical_order, mean, CellData};
use crate::error::{Error, Result};
use crate::model::Scaffold;

pub const DEFAULT_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    CellStratified,
    DesignAware,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeResult {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_resamples: usize,
    pub seed: u64,
    pub mode: BootstrapMode,
}

impl SlopeResult {
    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn overlaps(&self, other: &SlopeResult) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

fn stream_rng(seed: u64, resample: usize, stream: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((resample as u64) << 32) | u64::from(stream));
    rng
}

const DESIGN_STREAM: u32 = u32::MAX;

fn resample_mean(xs: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let n = xs.len();
    (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn interval(mut draws: Vec<f64>) -> (f64, f64) {
    draws.sort_by(f64::total_cmp);
    (percentile(&draws, 0.025), percentile(&draws, 0.975))
}

fn check_resamples(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Validation("bootstrap needs at least one resample".into()));
    }
    Ok(())
}

/// Cell-stratified bootstrap plus per-cell mean intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDetail {
    pub slope: SlopeResult,
    /// (cell_id, ci_low, ci_high) of each cell mean, in canonical order.
    pub cell_mean_ci: Vec<(String, f64, f64)>,
}

pub fn bootstrap_slope(cells: &[CellData], n_resamples: usize, seed: u64) -> Result<SlopeResult> {
    Ok(bootstrap_detail(cells, n_resamples, seed)?.slope)
}

pub fn bootstrap_detail(cells: &[CellData], n_resamples: usize, seed: u64) -> Result<BootstrapDetail> {
    check_resamples(n_resamples)?;
    let mut cells = cells.to_vec();
    canonical_order(&mut cells);
    if let Some(c) = cells.iter().find(|c| c.estimates.is_empty()) {
        return Err(Error::EmptyCell(c.cell_id.clone()));
    }
    let observed: Vec<(f64, f64)> = cells.iter().map(|c| (c.target, c.mean())).collect();
    let slope = ols_slope(&observed)?;

    let draws: Vec<(f64, Vec<f64>)> = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let means: Vec<f64> = cells
                .iter()
                .enumerate()
                .map(|(c, cell)| resample_mean(&cell.estimates, &mut stream_rng(seed, i, c as u32)))
                .collect();
            let pts: Vec<(f64, f64)> = cells.iter().zip(&means).map(|(c, m)| (c.target, *m)).collect();
            (ols_slope(&pts).expect("targets checked above"), means)
        })
        .collect();

    let (ci_low, ci_high) = interval(draws.iter().map(|d| d.0).collect());
    let cell_mean_ci = cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let (lo, hi) = interval(draws.iter().map(|d| d.1[c]).collect());
            (cell.cell_id.clone(), lo, hi)
        })
        .collect();
    Ok(BootstrapDetail {
        slope: SlopeResult {
            slope,
            ci_low,
            ci_high,
            n_resamples,
            seed,
            mode: BootstrapMode::CellStratified,
        },
        cell_mean_ci,
    })
}

/// Estimates of one (cell, variant, scaffold) design cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialCell {
    pub cell_id: String,
    pub target: f64,
    pub variant: u8,
    pub scaffold: Scaffold,
    pub estimates: Vec<f64>,
}

/// Factorial data indexed as cell -> (variant, scaffold) -> estimates,
/// checked to be a complete design.
pub(crate) struct Design<'a> {
    pub cells: Vec<(&'a str, f64)>,
    pub variants: Vec<u8>,
    pub scaffolds: Vec<Scaffold>,
    pub data: BTreeMap<(&'a str, u8, Scaffold), &'a [f64]>,
}

impl<'a> Design<'a> {
    pub fn new(factorial: &'a [FactorialCell]) -> Result<Self> {
        if factorial.is_empty() {
            return Err(Error::DegenerateDesign("no factorial data".into()));
        }
        let mut targets: BTreeMap<&str, f64> = BTreeMap::new();
        let mut data = BTreeMap::new();
        for f in factorial {
            if let Some(t) = targets.insert(&f.cell_id, f.target) {
                if t != f.target {
                    return Err(Error::Validation(format!(
                        "cell `{}` has two different targets",
                        f.cell_id
                    )));
                }
            }
            if f.estimates.is_empty() {
                return Err(Error::MissingDesignCell(format!(
                    "{} variant {} scaffold {}",
                    f.cell_id, f.variant, f.scaffold
                )));
            }
            if data.insert((f.cell_id.as_str(), f.variant, f.scaffold), f.estimates.as_slice()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate design cell {} variant {} scaffold {}",
                    f.cell_id, f.variant, f.scaffold
                )));
            }
        }
        let variants: Vec<u8> = factorial.iter().map(|f| f.variant).collect::<BTreeSet<_>>().into_iter().collect();
        let scaffolds: Vec<Scaffold> = factorial.iter().map(|f| f.scaffold).collect::<BTreeSet<_>>().into_iter().collect();
        let mut cells: Vec<(&str, f64)> = targets.into_iter().collect();
        cells.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        for &(cell, _) in &cells {
            for &v in &variants {
                for &s in &scaffolds {
                    if !data.contains_key(&(cell, v, s)) {
                        return Err(Error::MissingDesignCell(format!("{cell} variant {v} scaffold {s}")));
                    }
                }
            }
        }
        Ok(Design {
            cells,
            variants,
            scaffolds,
            data,
        })
    }

    pub fn combo_mean(&self, cell: &str, v: u8, s: Scaffold) -> f64 {
        mean(self.data[&(cell, v, s)])
    }

    /// Cell mean with every (variant, scaffold) combination weighted equally.
    pub fn cell_mean(&self, cell: &str) -> f64 {
        let combos: Vec<f64> = self
            .variants
            .iter()
            .flat_map(|&v| self.scaffolds.iter().map(move |&s| (v, s)))
            .map(|(v, s)| self.combo_mean(cell, v, s))
            .collect();
        mean(&combos)
    }
}

/// Bootstrap that also resamples profile variants and prompt scaffolds.
pub fn design_aware_bootstrap(factorial: &[FactorialCell], n_resamples: usize, seed: u64) -> Result<SlopeResult> {
    check_resamples(n_resamples)?;
    let design = Design::new(factorial)?;
    let observed: Vec<(f64, f64)> = design.cells.iter().map(|&(c, t)| (t, design.cell_mean(c))).collect();
    let slope = ols_slope(&observed)?;

    let slopes: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut drng = stream_rng(seed, i, DESIGN_STREAM);
            let vs: Vec<u8> = (0..design.variants.len())
                .map(|_| design.variants[drng.random_range(0..design.variants.len())])
                .collect();
            let ss: Vec<Scaffold> = (0..design.scaffolds.len())
                .map(|_| design.scaffolds[drng.random_range(0..design.scaffolds.len())])
                .collect();
            let pts: Vec<(f64, f64)> = design
                .cells
                .iter()
                .enumerate()
                .map(|(c, &(cell, target))| {
                    let mut rng = stream_rng(seed, i, c as u32);
                    let mut sum = 0.0;
                    for &v in &vs {
                        for &s in &ss {
                            sum += resample_mean(design.data[&(cell, v, s)], &mut rng);
                        }
                    }
                    (target, sum / (vs.len() * ss.len()) as f64)
                })
                .collect();
            ols_slope(&pts).expect("targets checked above")
        })
        .collect();
    let (ci_low, ci_high) = interval(slopes);
    Ok(SlopeResult {
        slope,
        ci_low,
        ci_high,
        n_resamples,
        seed,
        mode: BootstrapMode::DesignAware,
    })
}

/// Pools factorial data per cell, ignoring the design, for the trial-only
/// bootstrap.
pub fn pool_factorial(factorial: &[FactorialCell]) -> Vec<CellData> {
    let mut pooled: BTreeMap<&str, CellData> = BTreeMap::new();
    for f in factorial {
        pooled
            .entry(&f.cell_id)
            .or_insert_with(|| CellData::new(f.cell_id.clone(), f.target, Vec::new()))
            .estimates
            .extend(&f.estimates);
    }
    let mut cells: Vec<CellData> = pooled.into_values().collect();
    canonical_order(&mut cells);
    cells
}
