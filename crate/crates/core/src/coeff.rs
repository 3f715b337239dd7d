//! Time-dependent coefficient matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Left-continuous step table: `values[j]` holds on `(times[j], times[j + 1]]`,
/// `values[0]` at and before `times[0]`, the last value after the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTable<T> {
    times: Vec<f64>,
    values: Vec<T>,
}

impl<T> StepTable<T> {
    pub fn new(times: Vec<f64>, values: Vec<T>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Model(format!(
                "step table needs matching non-empty knots and values ({} vs {})",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Model(
                "step table knots must increase strictly".into(),
            ));
        }
        Ok(StepTable { times, values })
    }

    pub fn eval(&self, t: f64) -> &T {
        let j = self.times.partition_point(|&k| k < t).saturating_sub(1);
        &self.values[j]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFunction {
    Constant(f64),
    /// `exp(-rate * t)`
    ExpDecay {
        rate: f64,
    },
    Table(StepTable<f64>),
}

impl ScalarFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScalarFunction::Constant(c) => *c,
            ScalarFunction::ExpDecay { rate } => (-rate * t).exp(),
            ScalarFunction::Table(table) => *table.eval(t),
        }
    }
}

/// A matrix coefficient `t -> M(t)` of fixed shape.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeMatrixFunction {
    Constant(DMatrix<f64>),
    /// `matrix * f(t)`.
    Scaled {
        matrix: DMatrix<f64>,
        function: ScalarFunction,
    },
    Table(StepTable<DMatrix<f64>>),
}

impl TimeMatrixFunction {
    pub fn constant(m: DMatrix<f64>) -> Self {
        TimeMatrixFunction::Constant(m)
    }

    pub fn scalar(v: f64) -> Self {
        TimeMatrixFunction::Constant(DMatrix::from_element(1, 1, v))
    }

    pub fn scaled(matrix: DMatrix<f64>, function: ScalarFunction) -> Self {
        TimeMatrixFunction::Scaled { matrix, function }
    }

    pub fn table(times: Vec<f64>, values: Vec<DMatrix<f64>>) -> Result<Self> {
        let shape = values.first().map(|m| m.shape());
        if values.iter().any(|m| Some(m.shape()) != shape) {
            return Err(Error::Model("matrix table entries differ in shape".into()));
        }
        Ok(TimeMatrixFunction::Table(StepTable::new(times, values)?))
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            TimeMatrixFunction::Constant(m) => m.shape(),
            TimeMatrixFunction::Scaled { matrix, .. } => matrix.shape(),
            TimeMatrixFunction::Table(t) => t.values()[0].shape(),
        }
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match self {
            TimeMatrixFunction::Constant(m) => m.clone(),
            TimeMatrixFunction::Scaled { matrix, function } => matrix * function.eval(t),
            TimeMatrixFunction::Table(table) => table.eval(t).clone(),
        }
    }

    /// True when `M(t) = M f(t)` for a fixed matrix `M`, so directions never change.
    pub fn has_fixed_direction(&self) -> bool {
        !matches!(self, TimeMatrixFunction::Table(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeMatrixFunction::Constant(m) => m.iter().all(|v| *v == 0.0),
            TimeMatrixFunction::Scaled { matrix, .. } => matrix.iter().all(|v| *v == 0.0),
            TimeMatrixFunction::Table(t) => t.values().iter().all(|m| m.iter().all(|v| *v == 0.0)),
        }
    }
}
