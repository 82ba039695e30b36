//! Synthetic inputs shared by the benchmarks.

use leakage_core::model::{builtin_packs, Scaffold, Transcript, Turn};
use leakage_core::stats::{CellData, FactorialCell};

const TARGETS: [f64; 6] = [50.0, 100.0, 150.0, 200.0, 300.0, 500.0];

/// Cheap deterministic noise in [-1, 1).
fn noise(i: usize) -> f64 {
    let x = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
    x as f64 / (1u64 << 52) as f64 - 1.0
}

/// Six cells of `per_cell` estimates scattered around the target.
pub fn cells(per_cell: usize) -> Vec<CellData> {
    TARGETS
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let est = (0..per_cell).map(|i| t + 40.0 * noise(c * per_cell + i)).collect();
            CellData::new(format!("vp_{t}"), t, est)
        })
        .collect()
}

/// Six cells by three variants by two scaffolds.
pub fn factorial(per_combo: usize) -> Vec<FactorialCell> {
    let mut out = Vec::new();
    let mut k = 0;
    for &t in &TARGETS {
        for variant in 1..=3u8 {
            for scaffold in Scaffold::ALL {
                let estimates = (0..per_combo)
                    .map(|_| {
                        k += 1;
                        t + 15.0 * f64::from(variant) + 40.0 * noise(k)
                    })
                    .collect();
                out.push(FactorialCell {
                    cell_id: format!("vp_{t}"),
                    target: t,
                    variant,
                    scaffold,
                    estimates,
                });
            }
        }
    }
    out
}

/// A long dialogue with prices, budget phrases and product names.
pub fn priced_transcript(rounds: usize) -> Transcript {
    let products = &builtin_packs().catalog.products;
    let mut turns = Vec::new();
    for i in 0..rounds {
        let p = &products[i % products.len()];
        turns.push(Turn::buyer(format!(
            "My budget is around ${},{:03} but I could stretch to USD {} if the {} is worth it.",
            1 + i % 3,
            (i * 37) % 1000,
            150 + i,
            p.name
        )));
        turns.push(Turn::seller(format!(
            "The {} is ${:.2}, and we have a 300 dollars option with great battery life.",
            p.name,
            p.price.dollars()
        )));
    }
    Transcript::new(turns, false).unwrap()
}
