use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::BootstrapConfig;
use super::infer::{load_records, InferenceRecord};
use super::manifest::RunStatus;
use super::store::{load_sidecar, replace_atomic, to_json_bytes, RunDir, Sidecar};
use crate::error::{Error, Result};
use crate::model::{Condition, InferenceVariant, Scaffold};
use crate::stats::{
    compare_conditions, group_cells, write_cell_table, write_comparison, write_plot_data,
    write_summary_table, write_variance_table, ConditionMetrics, FactorialCell, FactorialMetrics,
    MetricsReport, VariantMetrics,
};

/// One usable estimate joined with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEstimate {
    pub condition: Condition,
    pub cell_id: String,
    pub target: f64,
    pub variant: u8,
    pub scaffold: Scaffold,
    pub inference: InferenceVariant,
    pub estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub condition: Condition,
    pub variant: InferenceVariant,
    pub complete: usize,
    pub lost: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metrics: MetricsReport,
    pub counts: Vec<CountRow>,
    pub files: Vec<PathBuf>,
}

fn join(dir: &RunDir, records: &[InferenceRecord]) -> Result<Vec<LabeledEstimate>> {
    let mut sidecars: BTreeMap<String, Sidecar> = BTreeMap::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if !sidecars.contains_key(&r.trial_id) {
            sidecars.insert(r.trial_id.clone(), load_sidecar(dir, &r.trial_id)?);
        }
        let label = &sidecars[&r.trial_id].label;
        let estimate = match (&r.status, &r.report) {
            (RunStatus::Complete, Some(rep)) => Some(rep.estimate as f64),
            _ => None,
        };
        out.push(LabeledEstimate {
            condition: label.condition,
            cell_id: label.cell_id.clone(),
            target: label.target_wtp.dollars(),
            variant: label.variant,
            scaffold: label.scaffold,
            inference: r.variant,
            estimate,
        });
    }
    Ok(out)
}

/// Verbal rows at the baseline combination form the main verbal condition;
/// the other combinations only feed the factorial analysis.
fn in_main_condition(e: &LabeledEstimate) -> bool {
    e.condition != Condition::Verbal || (e.variant == 1 && e.scaffold == Scaffold::A)
}

fn condition_metrics(
    condition: Condition,
    rows: &[&LabeledEstimate],
    boot: &BootstrapConfig,
) -> Result<Option<ConditionMetrics>> {
    let mut variants = Vec::new();
    let present: BTreeSet<InferenceVariant> = rows.iter().map(|e| e.inference).collect();
    for v in present {
        let sel: Vec<&&LabeledEstimate> = rows.iter().filter(|e| e.inference == v).collect();
        let targets: BTreeMap<String, f64> = sel.iter().map(|e| (e.cell_id.clone(), e.target)).collect();
        let estimates: Vec<(String, f64)> = sel
            .iter()
            .filter_map(|e| e.estimate.map(|x| (e.cell_id.clone(), x)))
            .collect();
        let ctx = format!("{condition} / {v}");
        let cells = group_cells(&estimates, &targets).map_err(|e| e.context(ctx.clone()))?;
        let m = VariantMetrics::compute(v, &cells, boot.resamples, boot.seed).map_err(|e| e.context(ctx))?;
        variants.push(m);
    }
    if variants.is_empty() {
        return Ok(None);
    }
    Ok(Some(ConditionMetrics {
        condition: condition.to_string(),
        variants,
    }))
}

fn factorial_metrics(rows: &[LabeledEstimate], boot: &BootstrapConfig) -> Result<Vec<FactorialMetrics>> {
    let verbal: Vec<&LabeledEstimate> = rows.iter().filter(|e| e.condition == Condition::Verbal).collect();
    let combos: BTreeSet<(u8, Scaffold)> = verbal.iter().map(|e| (e.variant, e.scaffold)).collect();
    if combos.len() < 2 {
        return Ok(Vec::new());
    }
    let present: BTreeSet<InferenceVariant> = verbal.iter().map(|e| e.inference).collect();
    let mut out = Vec::new();
    for v in present {
        let mut cells: BTreeMap<(String, u8, Scaffold), FactorialCell> = BTreeMap::new();
        for e in verbal.iter().filter(|e| e.inference == v) {
            let cell = cells
                .entry((e.cell_id.clone(), e.variant, e.scaffold))
                .or_insert_with(|| FactorialCell {
                    cell_id: e.cell_id.clone(),
                    target: e.target,
                    variant: e.variant,
                    scaffold: e.scaffold,
                    estimates: Vec::new(),
                });
            if let Some(x) = e.estimate {
                cell.estimates.push(x);
            }
        }
        let data: Vec<FactorialCell> = cells.into_values().collect();
        if let Some(empty) = data.iter().find(|c| c.estimates.is_empty()) {
            return Err(Error::EmptyCell(format!(
                "{} v{}{}",
                empty.cell_id, empty.variant, empty.scaffold
            ))
            .context(format!("factorial / {v}")));
        }
        out.push(
            FactorialMetrics::compute(v, &data, boot.resamples, boot.seed)
                .map_err(|e| e.context(format!("factorial / {v}")))?,
        );
    }
    Ok(out)
}

fn counts(rows: &[LabeledEstimate]) -> Vec<CountRow> {
    let mut map: BTreeMap<(Condition, InferenceVariant), (usize, usize)> = BTreeMap::new();
    for e in rows {
        let c = map.entry((e.condition, e.inference)).or_default();
        if e.estimate.is_some() {
            c.0 += 1;
        } else {
            c.1 += 1;
        }
    }
    map.into_iter()
        .map(|((condition, variant), (complete, lost))| CountRow {
            condition,
            variant,
            complete,
            lost,
        })
        .collect()
}

/// Computes all metrics for the inference records in a run directory.
pub fn build_report(dir: &RunDir, boot: &BootstrapConfig) -> Result<(MetricsReport, Vec<CountRow>)> {
    let records = load_records(dir)?;
    if records.is_empty() {
        return Err(Error::Data(format!(
            "no inference records under {}",
            dir.inference_dir().display()
        )));
    }
    let rows = join(dir, &records)?;
    let mut metrics = MetricsReport::default();
    for condition in [Condition::Verbal, Condition::Numeric, Condition::Stripped] {
        let sel: Vec<&LabeledEstimate> = rows
            .iter()
            .filter(|e| e.condition == condition && in_main_condition(e))
            .collect();
        if let Some(m) = condition_metrics(condition, &sel, boot)? {
            metrics.conditions.push(m);
        }
    }
    let find = |c: Condition| metrics.conditions.iter().find(|m| m.condition == c.as_str());
    let pairs = [
        (Condition::Verbal, Condition::Numeric),
        (Condition::Stripped, Condition::Verbal),
    ];
    let mut comparisons = Vec::new();
    for (a, b) in pairs {
        if let (Some(ma), Some(mb)) = (find(a), find(b)) {
            comparisons.push(compare_conditions(ma, mb).map_err(|e| e.context(format!("{a} vs {b}")))?);
        }
    }
    metrics.comparisons = comparisons;
    metrics.factorial = factorial_metrics(&rows, boot)?;
    Ok((metrics, counts(&rows)))
}

fn write_csv(
    path: PathBuf,
    files: &mut Vec<PathBuf>,
    f: impl FnOnce(BufWriter<&mut File>) -> Result<()>,
) -> Result<()> {
    let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    f(BufWriter::new(&mut file))?;
    files.push(path);
    Ok(())
}

/// Computes the report and writes metrics.json plus the CSV tables under
/// `reports/`.
pub fn report(dir: &RunDir, boot: &BootstrapConfig) -> Result<RunReport> {
    let (metrics, counts) = build_report(dir, boot)?;
    let out = dir.reports_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut files = Vec::new();

    write_csv(out.join("summary.csv"), &mut files, |w| write_summary_table(w, &metrics))?;
    for c in &metrics.conditions {
        for m in &c.variants {
            let stem = format!("{}_{}", c.condition, m.variant);
            write_csv(out.join(format!("{stem}_cells.csv")), &mut files, |w| write_cell_table(w, m))?;
            write_csv(out.join(format!("{stem}_plot.csv")), &mut files, |w| write_plot_data(w, m))?;
        }
    }
    for cmp in &metrics.comparisons {
        let name = format!("comparison_{}_vs_{}.csv", cmp.a, cmp.b);
        write_csv(out.join(name), &mut files, |w| write_comparison(w, cmp))?;
    }
    for f in &metrics.factorial {
        let name = format!("variance_{}.csv", f.variant);
        write_csv(out.join(name), &mut files, |w| write_variance_table(w, &f.variance))?;
    }
    write_csv(out.join("counts.csv"), &mut files, |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["condition", "variant", "complete", "lost"])?;
        for r in &counts {
            w.write_record([
                r.condition.to_string(),
                r.variant.to_string(),
                r.complete.to_string(),
                r.lost.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir.reports_dir(), e))
    })?;
    let json = out.join("metrics.json");
    replace_atomic(&json, &to_json_bytes(&metrics))?;
    files.push(json);
    Ok(RunReport { metrics, counts, files })
}
