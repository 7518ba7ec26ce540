use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Contact rate, either constant or a right-continuous piecewise-constant table.
///
/// A table holds `values[i]` on `[times[i], times[i + 1])`; `times[0]` must be 0 and the last
/// value extends to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContactRate {
    Constant(f64),
    Piecewise { times: Vec<f64>, values: Vec<f64> },
}

impl ContactRate {
    pub fn validate(&self) -> Result<()> {
        match self {
            ContactRate::Constant(v) => {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(invalid("lambda", format!("rate must be >= 0, got {v}")));
                }
            }
            ContactRate::Piecewise { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(invalid(
                        "lambda",
                        "piecewise rate needs matching non-empty times and values",
                    ));
                }
                if times[0] != 0.0 {
                    return Err(invalid("lambda", "piecewise rate must start at t = 0"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("lambda", "piecewise times must be increasing"));
                }
                if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(invalid("lambda", format!("negative or non-finite rate {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ContactRate::Constant(_))
    }

    /// Rate in force at `t` (right-continuous).
    pub fn at(&self, t: f64) -> f64 {
        match self {
            ContactRate::Constant(v) => *v,
            ContactRate::Piecewise { times, values } => {
                let idx = times.partition_point(|&s| s <= t);
                values[idx.saturating_sub(1)]
            }
        }
    }

    /// Left limit `lambda(t-)`.
    pub fn left_at(&self, t: f64) -> f64 {
        match self {
            ContactRate::Constant(v) => *v,
            ContactRate::Piecewise { times, values } => {
                let idx = times.partition_point(|&s| s < t);
                values[idx.saturating_sub(1)]
            }
        }
    }

    /// Supremum of the rate over `[from, to]`.
    pub fn max_on(&self, from: f64, to: f64) -> f64 {
        match self {
            ContactRate::Constant(v) => *v,
            ContactRate::Piecewise { times, values } => {
                let first = times.partition_point(|&s| s <= from).saturating_sub(1);
                let last = times.partition_point(|&s| s <= to).max(first + 1);
                values[first..last].iter().copied().fold(0.0, f64::max)
            }
        }
    }

    /// Breakpoints strictly inside `(from, to)`.
    pub fn breakpoints_in(&self, from: f64, to: f64) -> Vec<f64> {
        match self {
            ContactRate::Constant(_) => Vec::new(),
            ContactRate::Piecewise { times, .. } => times
                .iter()
                .copied()
                .filter(|&s| s > from && s < to)
                .collect(),
        }
    }
}
