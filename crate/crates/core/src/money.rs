use std::fmt;

use serde::{Deserialize, Serialize};

/// An amount of money in integer US cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub const fn from_dollars(dollars: i64) -> Self {
        Cents(dollars * 100)
    }

    /// Value in dollars as a float, for statistics.
    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Whole-dollar value, rounding half away from zero.
    pub fn whole_dollars(self) -> i64 {
        let rem = self.0.rem_euclid(100);
        let base = self.0.div_euclid(100);
        if rem >= 50 {
            base + 1
        } else {
            base
        }
    }

    /// Price after a percentage discount, rounded down to the cent.
    pub fn discounted(self, percent: i64) -> Self {
        Cents(self.0 * (100 - percent) / 100)
    }
}

/// Formats as `$49.99`, or `$50` for whole-dollar amounts, with thousands
/// separators.
impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = group_thousands(abs / 100);
        match abs % 100 {
            0 => write!(f, "{sign}${whole}"),
            frac => write!(f, "{sign}${whole}.{frac:02}"),
        }
    }
}

fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
