use serde::{Deserialize, Serialize};

use super::bootstrap::{Design, FactorialCell};
use super::regression::ols_slope;
use super::summary::{mean, sample_sd};
use crate::error::Result;
use crate::model::Scaffold;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub cell_id: String,
    pub target: f64,
    /// SD of the (variant, scaffold) combination means.
    pub sd_combos: f64,
    /// SD of the variant marginal means, each averaged over scaffolds.
    pub sd_variants: f64,
    /// SD of the scaffold marginal means, each averaged over variants.
    pub sd_scaffolds: f64,
}

pub fn variance_decomposition(factorial: &[FactorialCell]) -> Result<Vec<VarianceRow>> {
    let d = Design::new(factorial)?;
    Ok(d.cells
        .iter()
        .map(|&(cell, target)| {
            let combos: Vec<f64> = d
                .variants
                .iter()
                .flat_map(|&v| d.scaffolds.iter().map(move |&s| (v, s)))
                .map(|(v, s)| d.combo_mean(cell, v, s))
                .collect();
            let variants: Vec<f64> = d
                .variants
                .iter()
                .map(|&v| mean(&d.scaffolds.iter().map(|&s| d.combo_mean(cell, v, s)).collect::<Vec<_>>()))
                .collect();
            let scaffolds: Vec<f64> = d
                .scaffolds
                .iter()
                .map(|&s| mean(&d.variants.iter().map(|&v| d.combo_mean(cell, v, s)).collect::<Vec<_>>()))
                .collect();
            VarianceRow {
                cell_id: cell.to_string(),
                target,
                sd_combos: sample_sd(&combos),
                sd_variants: sample_sd(&variants),
                sd_scaffolds: sample_sd(&scaffolds),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSlopes {
    pub by_variant: Vec<(u8, f64)>,
    pub by_scaffold: Vec<(Scaffold, f64)>,
}

/// Cell-mean slope within each variant (averaged over scaffolds) and within
/// each scaffold (averaged over variants).
pub fn factor_slopes(factorial: &[FactorialCell]) -> Result<FactorSlopes> {
    let d = Design::new(factorial)?;
    let by_variant = d
        .variants
        .iter()
        .map(|&v| {
            let pts: Vec<(f64, f64)> = d
                .cells
                .iter()
                .map(|&(c, t)| (t, mean(&d.scaffolds.iter().map(|&s| d.combo_mean(c, v, s)).collect::<Vec<_>>())))
                .collect();
            Ok((v, ols_slope(&pts)?))
        })
        .collect::<Result<_>>()?;
    let by_scaffold = d
        .scaffolds
        .iter()
        .map(|&s| {
            let pts: Vec<(f64, f64)> = d
                .cells
                .iter()
                .map(|&(c, t)| (t, mean(&d.variants.iter().map(|&v| d.combo_mean(c, v, s)).collect::<Vec<_>>())))
                .collect();
            Ok((s, ols_slope(&pts)?))
        })
        .collect::<Result<_>>()?;
    Ok(FactorSlopes {
        by_variant,
        by_scaffold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One cell with the given combo means, keyed by (variant, scaffold).
    fn cell(means: &[(u8, Scaffold, f64)]) -> Vec<FactorialCell> {
        means
            .iter()
            .map(|&(v, s, m)| FactorialCell {
                cell_id: "c".into(),
                target: 100.0,
                variant: v,
                scaffold: s,
                estimates: vec![m - 1.0, m + 1.0],
            })
            .collect()
    }

    #[test]
    fn equal_means_have_no_spread() {
        let rows = variance_decomposition(&cell(&[
            (1, Scaffold::A, 50.0),
            (1, Scaffold::B, 50.0),
            (2, Scaffold::A, 50.0),
            (2, Scaffold::B, 50.0),
            (3, Scaffold::A, 50.0),
            (3, Scaffold::B, 50.0),
        ]))
        .unwrap();
        assert_eq!((rows[0].sd_combos, rows[0].sd_variants, rows[0].sd_scaffolds), (0.0, 0.0, 0.0));
    }

    #[test]
    fn scaffold_shift_only() {
        let rows = variance_decomposition(&cell(&[
            (1, Scaffold::A, 100.0),
            (1, Scaffold::B, 110.0),
            (2, Scaffold::A, 100.0),
            (2, Scaffold::B, 110.0),
            (3, Scaffold::A, 100.0),
            (3, Scaffold::B, 110.0),
        ]))
        .unwrap();
        assert!((rows[0].sd_scaffolds - 7.0711).abs() < 1e-4);
        assert_eq!(rows[0].sd_variants, 0.0);
    }

    #[test]
    fn incomplete_design_rejected() {
        assert!(variance_decomposition(&cell(&[(1, Scaffold::A, 1.0), (2, Scaffold::B, 1.0)])).is_err());
    }
}
