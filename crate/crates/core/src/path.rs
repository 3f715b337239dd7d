//! Uniform time grids and sampled paths on them.

use std::fmt::Write as _;

use nalgebra::{DVector, DVectorView};

use crate::error::{Error, Result};

/// Uniform grid `t0, t0 + dt, ..., t0 + steps * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    /// Grid on `[t0, horizon]`. `horizon - t0` must be an integer multiple of `dt`
    /// up to rounding.
    pub fn new(t0: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Grid(format!("step must be positive, got {dt}")));
        }
        if !(horizon > t0) || !horizon.is_finite() || !t0.is_finite() {
            return Err(Error::Grid(format!(
                "horizon {horizon} must exceed start {t0}"
            )));
        }
        let exact = (horizon - t0) / dt;
        let steps = exact.round();
        if (exact - steps).abs() > 1e-6 * steps.max(1.0) {
            return Err(Error::Grid(format!(
                "interval [{t0}, {horizon}] is not a multiple of dt = {dt}"
            )));
        }
        Ok(TimeGrid {
            t0,
            dt,
            steps: steps as usize,
        })
    }

    pub fn with_steps(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || steps == 0 {
            return Err(Error::Grid(format!(
                "need dt > 0 and at least one step, got dt = {dt}, steps = {steps}"
            )));
        }
        Ok(TimeGrid { t0, dt, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.time(k))
    }

    /// Same grid with twice the resolution.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            dt: self.dt / 2.0,
            steps: self.steps * 2,
        }
    }
}

/// A `dim`-dimensional process sampled on a [`TimeGrid`].
///
/// `values[0]` is the origin and `values[k + 1] = values[k] + increments[k]`.
/// Storage is flat and row-major (one row per grid point or step).
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    grid: TimeGrid,
    dim: usize,
    seed: u64,
    increments: Vec<f64>,
    values: Vec<f64>,
}

impl PathGrid {
    /// Path starting at zero built from per-step increments.
    pub fn from_increments(grid: TimeGrid, dim: usize, seed: u64, increments: Vec<f64>) -> Self {
        Self::from_origin_and_increments(grid, DVector::zeros(dim), seed, increments)
    }

    pub fn from_origin_and_increments(
        grid: TimeGrid,
        origin: DVector<f64>,
        seed: u64,
        increments: Vec<f64>,
    ) -> Self {
        let dim = origin.len();
        assert_eq!(increments.len(), grid.steps() * dim, "increment count");
        let mut values = Vec::with_capacity(grid.len() * dim);
        values.extend_from_slice(origin.as_slice());
        for k in 0..grid.steps() {
            for i in 0..dim {
                let v = values[k * dim + i] + increments[k * dim + i];
                values.push(v);
            }
        }
        PathGrid {
            grid,
            dim,
            seed,
            increments,
            values,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn increment(&self, k: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(&self.increments[k * self.dim..(k + 1) * self.dim], self.dim)
    }

    pub fn value(&self, k: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(&self.values[k * self.dim..(k + 1) * self.dim], self.dim)
    }

    pub fn terminal(&self) -> DVectorView<'_, f64> {
        self.value(self.grid.steps())
    }

    pub fn increments_flat(&self) -> &[f64] {
        &self.increments
    }

    pub fn values_flat(&self) -> &[f64] {
        &self.values
    }

    /// Values of coordinate `i` at every grid point.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(i)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    /// CSV with header `t,x1,...,xd`, one row per grid point, 17 significant digits.
    pub fn to_csv(&self) -> String {
        self.to_csv_with_prefix("x")
    }

    pub fn to_csv_with_prefix(&self, prefix: &str) -> String {
        let mut out = String::from("t");
        for i in 1..=self.dim {
            let _ = write!(out, ",{prefix}{i}");
        }
        out.push('\n');
        for k in 0..self.grid.len() {
            out.push_str(&fmt_f64(self.grid.time(k)));
            for v in self.value(k).iter() {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Fixed 17-significant-digit rendering used by every CSV export.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
