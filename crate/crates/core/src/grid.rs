use serde::{Deserialize, Serialize};

use crate::error::{OiftError, Result};

/// Uniform time grid `t_k = k * dt`, `k = 0..nodes`, covering `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    nodes: usize,
}

impl TimeGrid {
    /// Builds the grid for horizon `horizon` and step `dt`; `dt` must divide the horizon.
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(OiftError::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(OiftError::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(OiftError::InvalidParameter(format!(
                "dt = {dt} does not divide the horizon {horizon}"
            )));
        }
        Ok(Self {
            dt: horizon / steps,
            nodes: steps as usize + 1,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn steps(&self) -> usize {
        self.nodes - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(move |k| self.time(k))
    }

    /// Composite trapezoid rule over node values.
    pub fn trapezoid<I: IntoIterator<Item = f64>>(&self, values: I) -> f64 {
        let last = self.steps();
        values
            .into_iter()
            .enumerate()
            .map(|(k, v)| if k == 0 || k == last { 0.5 * v } else { v })
            .sum::<f64>()
            * self.dt
    }
}
