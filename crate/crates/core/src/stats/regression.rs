use crate::error::{Error, Result};

/// OLS slope of y on x.
pub fn ols_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::DegenerateDesign("no points to fit".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateDesign(
            "slope needs at least two distinct targets".into(),
        ));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// Ranks starting at 1, ties sharing the average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation with average ranks for ties. Undefined (an
/// error) when either side is constant.
pub fn spearman_rho(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::DegenerateDesign(
            "rank correlation needs at least two points".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    pearson(&average_ranks(&xs), &average_ranks(&ys))
        .ok_or_else(|| Error::DegenerateDesign("rank correlation is undefined for constant values".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TARGETS: [f64; 6] = [50.0, 100.0, 150.0, 200.0, 300.0, 500.0];

    fn pts(means: [f64; 6]) -> Vec<(f64, f64)> {
        TARGETS.iter().copied().zip(means).collect()
    }

    #[test]
    fn identity_line() {
        assert_eq!(ols_slope(&pts(TARGETS)).unwrap(), 1.0);
    }

    #[test]
    fn all_targets_equal() {
        assert!(matches!(
            ols_slope(&[(50.0, 1.0), (50.0, 2.0)]),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn monotone_rank_correlation() {
        assert_eq!(spearman_rho(&pts([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap(), 1.0);
        assert_eq!(spearman_rho(&pts([6.0, 5.0, 4.0, 3.0, 2.0, 1.0])).unwrap(), -1.0);
        assert!(spearman_rho(&[(1.0, 1.0)]).is_err());
        assert!(spearman_rho(&pts([5.0; 6])).is_err());
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), [2.0, 3.5, 3.5, 1.0]);
    }
}
