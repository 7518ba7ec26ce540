use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_k = k * dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

const ALIGN_TOL: f64 = 1e-9;

impl TimeGrid {
    /// Grid covering `[0, horizon]`. The horizon must be a whole number of steps.
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if !(horizon.is_finite() && horizon >= dt) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be at least dt, got horizon {horizon} with dt {dt}"
            )));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > ALIGN_TOL * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} is not a multiple of dt {dt}"
            )));
        }
        Ok(Self {
            dt,
            steps: steps as usize,
        })
    }

    pub fn with_steps(dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) || steps == 0 {
            return Err(Error::InvalidGrid(format!(
                "need dt > 0 and at least one step, got dt {dt}, steps {steps}"
            )));
        }
        Ok(Self { dt, steps })
    }

    /// Accepts an explicit list of times and rejects anything that is not uniform from 0.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid("need at least two grid times".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "grid must start at 0, got {}",
                times[0]
            )));
        }
        let dt = times[1] - times[0];
        let grid = Self::with_steps(dt, times.len() - 1)?;
        for (k, &t) in times.iter().enumerate() {
            if (t - grid.time(k)).abs() > ALIGN_TOL * dt.max(grid.time(k)) {
                return Err(Error::InvalidGrid(format!(
                    "non-uniform grid: node {k} is {t}, expected {}",
                    grid.time(k)
                )));
            }
        }
        Ok(grid)
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps; the grid has `steps + 1` nodes.
    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Node index of `t` if `t` sits on the grid.
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let ratio = t / self.dt;
        let k = ratio.round();
        if k < 0.0 || k as usize > self.steps {
            return None;
        }
        ((ratio - k).abs() <= ALIGN_TOL * ratio.abs().max(1.0)).then_some(k as usize)
    }

    pub fn require_node(&self, t: f64) -> Result<usize> {
        self.node_of(t).ok_or_else(|| {
            Error::InvalidGrid(format!(
                "time {t} is not a node of the grid with dt {} on [0, {}]",
                self.dt,
                self.horizon()
            ))
        })
    }

    /// Whether `t` is a multiple of `dt` (it may lie beyond the horizon).
    pub fn is_aligned(&self, t: f64) -> bool {
        let ratio = t / self.dt;
        (ratio - ratio.round()).abs() <= ALIGN_TOL * ratio.abs().max(1.0)
    }

    /// Grid with the step divided by `factor`, covering the same horizon.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            dt: self.dt / factor as f64,
            steps: self.steps * factor,
        }
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}
