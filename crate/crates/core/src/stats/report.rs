use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_detail, design_aware_bootstrap, pool_factorial, bootstrap_slope, FactorialCell, SlopeResult};
use super::factorial::{factor_slopes, variance_decomposition, FactorSlopes, VarianceRow};
use super::regression::{ols_slope, spearman_rho};
use super::summary::{summarize, within_25, CellData, CellSummary};
use crate::error::{Error, Result};
use crate::model::InferenceVariant;

/// Metrics for one (condition, inference variant) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: InferenceVariant,
    pub cells: Vec<CellSummary>,
    pub slope: SlopeResult,
    pub cell_mean_ci: Vec<(String, f64, f64)>,
    /// None when cell means are all equal and the rank correlation is undefined.
    pub spearman: Option<f64>,
    pub mae: f64,
    /// Fraction of all trials within 25% of their target.
    pub within_25: f64,
    pub n: usize,
    pub mean_min: f64,
    pub mean_max: f64,
    /// Diagnostic: slope fit on individual trials instead of cell means.
    pub trial_level_slope: f64,
}

impl VariantMetrics {
    pub fn compute(variant: InferenceVariant, cells: &[CellData], n_resamples: usize, seed: u64) -> Result<Self> {
        let boot = bootstrap_detail(cells, n_resamples, seed)?;
        let summaries: Vec<CellSummary> = boot
            .cell_mean_ci
            .iter()
            .map(|(id, _, _)| summarize(cells.iter().find(|c| &c.cell_id == id).expect("same cells")))
            .collect();
        let points: Vec<(f64, f64)> = summaries.iter().map(|s| (s.target, s.mean_estimate)).collect();
        let n: usize = summaries.iter().map(|s| s.n).sum();
        let trial_points: Vec<(f64, f64)> = cells
            .iter()
            .flat_map(|c| c.estimates.iter().map(move |e| (c.target, *e)))
            .collect();
        let mae = trial_points.iter().map(|(t, e)| (e - t).abs()).sum::<f64>() / n as f64;
        let within = trial_points.iter().filter(|(t, e)| within_25(*e, *t)).count();
        Ok(VariantMetrics {
            variant,
            spearman: spearman_rho(&points).ok(),
            mean_min: points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
            mean_max: points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
            trial_level_slope: ols_slope(&trial_points)?,
            mae,
            within_25: within as f64 / n as f64,
            n,
            cells: summaries,
            slope: boot.slope,
            cell_mean_ci: boot.cell_mean_ci,
        })
    }

    fn targets(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.target).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    pub condition: String,
    pub variants: Vec<VariantMetrics>,
}

impl ConditionMetrics {
    pub fn variant(&self, v: InferenceVariant) -> Option<&VariantMetrics> {
        self.variants.iter().find(|m| m.variant == v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: InferenceVariant,
    pub mae: (f64, f64),
    pub within_25: (f64, f64),
    pub slope: (f64, f64),
    pub ci_a: (f64, f64),
    pub ci_b: (f64, f64),
    pub mean_range_a: (f64, f64),
    pub mean_range_b: (f64, f64),
    pub spearman: (Option<f64>, Option<f64>),
    pub ci_overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub rows: Vec<ComparisonRow>,
}

/// Side-by-side table for every inference variant both conditions have.
pub fn compare_conditions(a: &ConditionMetrics, b: &ConditionMetrics) -> Result<Comparison> {
    let mut rows = Vec::new();
    for ma in &a.variants {
        let Some(mb) = b.variant(ma.variant) else { continue };
        if ma.targets() != mb.targets() {
            return Err(Error::GridMismatch(format!(
                "{} and {} use different target grids",
                a.condition, b.condition
            )));
        }
        rows.push(ComparisonRow {
            variant: ma.variant,
            mae: (ma.mae, mb.mae),
            within_25: (ma.within_25, mb.within_25),
            slope: (ma.slope.slope, mb.slope.slope),
            ci_a: (ma.slope.ci_low, ma.slope.ci_high),
            ci_b: (mb.slope.ci_low, mb.slope.ci_high),
            mean_range_a: (ma.mean_min, ma.mean_max),
            mean_range_b: (mb.mean_min, mb.mean_max),
            spearman: (ma.spearman, mb.spearman),
            ci_overlap: ma.slope.overlaps(&mb.slope),
        });
    }
    if rows.is_empty() {
        return Err(Error::GridMismatch(format!(
            "{} and {} share no inference variant",
            a.condition, b.condition
        )));
    }
    Ok(Comparison {
        a: a.condition.clone(),
        b: b.condition.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialMetrics {
    pub variant: InferenceVariant,
    pub design_aware: SlopeResult,
    pub trial_only: SlopeResult,
    pub variance: Vec<VarianceRow>,
    pub factor_slopes: FactorSlopes,
}

impl FactorialMetrics {
    pub fn compute(variant: InferenceVariant, data: &[FactorialCell], n_resamples: usize, seed: u64) -> Result<Self> {
        Ok(FactorialMetrics {
            variant,
            design_aware: design_aware_bootstrap(data, n_resamples, seed)?,
            trial_only: bootstrap_slope(&pool_factorial(data), n_resamples, seed)?,
            variance: variance_decomposition(data)?,
            factor_slopes: factor_slopes(data)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub conditions: Vec<ConditionMetrics>,
    pub comparisons: Vec<Comparison>,
    pub factorial: Vec<FactorialMetrics>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_default()
}

/// Cell table: one row per cell.
pub fn write_cell_table<W: Write>(out: W, m: &VariantMetrics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell_id", "target", "mean_estimate", "mae", "within_25_count", "n", "within_25_pct"])?;
    for c in &m.cells {
        w.write_record([
            c.cell_id.clone(),
            format!("{}", c.target),
            format!("{:.2}", c.mean_estimate),
            format!("{:.2}", c.mae),
            c.within_25_count.to_string(),
            c.n.to_string(),
            format!("{:.1}", 100.0 * c.within_25_count as f64 / c.n as f64),
        ])?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// Target, mean and bootstrap interval per cell for plotting.
pub fn write_plot_data<W: Write>(out: W, m: &VariantMetrics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell_id", "target", "mean", "ci_low", "ci_high"])?;
    for (c, (_, lo, hi)) in m.cells.iter().zip(&m.cell_mean_ci) {
        w.write_record([
            c.cell_id.clone(),
            format!("{}", c.target),
            format!("{:.4}", c.mean_estimate),
            format!("{lo:.4}"),
            format!("{hi:.4}"),
        ])?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// One row per (condition, variant) with the headline statistics.
pub fn write_summary_table<W: Write>(out: W, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "condition", "variant", "n", "mae", "within_25_pct", "slope", "ci_low", "ci_high", "spearman",
        "mean_min", "mean_max", "trial_level_slope",
    ])?;
    for c in &report.conditions {
        for m in &c.variants {
            w.write_record([
                c.condition.clone(),
                m.variant.to_string(),
                m.n.to_string(),
                format!("{:.2}", m.mae),
                format!("{:.1}", 100.0 * m.within_25),
                format!("{:.4}", m.slope.slope),
                format!("{:.4}", m.slope.ci_low),
                format!("{:.4}", m.slope.ci_high),
                opt(m.spearman),
                format!("{:.2}", m.mean_min),
                format!("{:.2}", m.mean_max),
                format!("{:.4}", m.trial_level_slope),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

pub fn write_comparison<W: Write>(out: W, cmp: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variant", "metric", cmp.a.as_str(), cmp.b.as_str(),
    ])?;
    for r in &cmp.rows {
        let v = r.variant.to_string();
        let rows = [
            ("mae", format!("{:.2}", r.mae.0), format!("{:.2}", r.mae.1)),
            ("within_25_pct", format!("{:.1}", 100.0 * r.within_25.0), format!("{:.1}", 100.0 * r.within_25.1)),
            ("slope", format!("{:.4}", r.slope.0), format!("{:.4}", r.slope.1)),
            ("slope_ci", format!("[{:.4}, {:.4}]", r.ci_a.0, r.ci_a.1), format!("[{:.4}, {:.4}]", r.ci_b.0, r.ci_b.1)),
            (
                "cell_mean_range",
                format!("{:.0}-{:.0}", r.mean_range_a.0, r.mean_range_a.1),
                format!("{:.0}-{:.0}", r.mean_range_b.0, r.mean_range_b.1),
            ),
            ("spearman", opt(r.spearman.0), opt(r.spearman.1)),
            ("ci_overlap", r.ci_overlap.to_string(), r.ci_overlap.to_string()),
        ];
        for (metric, a, b) in rows {
            w.write_record([v.as_str(), metric, &a, &b])?;
        }
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

pub fn write_variance_table<W: Write>(out: W, rows: &[VarianceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell_id", "target", "sd_6_combos", "sd_3_variants", "sd_2_scaffolds"])?;
    for r in rows {
        w.write_record([
            r.cell_id.clone(),
            format!("{}", r.target),
            format!("{:.4}", r.sd_combos),
            format!("{:.4}", r.sd_variants),
            format!("{:.4}", r.sd_scaffolds),
        ])?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}
