use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimates for one cell, in dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellData {
    pub cell_id: String,
    pub target: f64,
    pub estimates: Vec<f64>,
}

impl CellData {
    pub fn new(cell_id: impl Into<String>, target: f64, estimates: Vec<f64>) -> Self {
        CellData {
            cell_id: cell_id.into(),
            target,
            estimates,
        }
    }

    pub fn mean(&self) -> f64 {
        mean(&self.estimates)
    }
}

/// Groups (cell, estimate) pairs by cell. Every cell in `targets` must get
/// at least one estimate. Output is in canonical order: by target, then id.
pub fn group_cells(estimates: &[(String, f64)], targets: &BTreeMap<String, f64>) -> Result<Vec<CellData>> {
    let mut by_cell: BTreeMap<&str, Vec<f64>> = targets.keys().map(|k| (k.as_str(), Vec::new())).collect();
    for (cell, est) in estimates {
        by_cell
            .get_mut(cell.as_str())
            .ok_or_else(|| Error::UnknownCell(cell.clone()))?
            .push(*est);
    }
    let mut cells = by_cell
        .into_iter()
        .map(|(cell, est)| {
            if est.is_empty() {
                return Err(Error::EmptyCell(cell.to_string()));
            }
            Ok(CellData::new(cell, targets[cell], est))
        })
        .collect::<Result<Vec<_>>>()?;
    canonical_order(&mut cells);
    Ok(cells)
}

pub(crate) fn canonical_order(cells: &mut [CellData]) {
    cells.sort_by(|a, b| a.target.total_cmp(&b.target).then_with(|| a.cell_id.cmp(&b.cell_id)));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell_id: String,
    pub target: f64,
    pub mean_estimate: f64,
    pub mae: f64,
    pub within_25_count: usize,
    pub n: usize,
}

/// True when `estimate` is within 25% of `target`, bounds included.
pub fn within_25(estimate: f64, target: f64) -> bool {
    4.0 * (estimate - target).abs() <= target
}

pub fn summarize_cells(estimates: &[(String, f64)], targets: &BTreeMap<String, f64>) -> Result<Vec<CellSummary>> {
    Ok(group_cells(estimates, targets)?.iter().map(summarize).collect())
}

pub fn summarize(cell: &CellData) -> CellSummary {
    let n = cell.estimates.len();
    CellSummary {
        cell_id: cell.cell_id.clone(),
        target: cell.target,
        mean_estimate: cell.mean(),
        mae: cell.estimates.iter().map(|e| (e - cell.target).abs()).sum::<f64>() / n as f64,
        within_25_count: cell.estimates.iter().filter(|e| within_25(**e, cell.target)).count(),
        n,
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
