//! TOML run configuration (schema version 1).
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [grid]
//! horizon = 10.0
//! dt = 0.01
//!
//! [model]
//! a = { matrix = [[-1.0]] }
//! b = { matrix = [[1.0]] }
//! c = { matrix = [[1.0]] }
//! d = { matrix = [[1.0]], function = { exp_decay = { rate = 0.5 } } }
//! system_noise = { gaussian_cov = [[1.0]] }
//! observation_noise = { gaussian_cov = [[0.0]], jumps = [
//!     { axis = 0, kind = "symmetric_stable", alpha = 1.5, scale = 1.0 },
//! ] }
//! ```
//!
//! Coefficients are a constant `matrix`, a `matrix` times a scalar `function`
//! (`"constant"`, `{ exp_decay = { rate } }` or `{ table = "f.csv" }` with
//! rows `t,value`), or a full `table = "f.csv"` with rows `t,m11,m12,...`
//! and explicit `rows`/`cols`. Relative table paths are read from the config
//! file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bench::ExperimentConfig;
use crate::coeff::{ScalarFunction, StepTable, TimeMatrixFunction};
use crate::error::{Error, Result};
use crate::levy::{JumpComponentSpec, LevyModel};
use crate::path::TimeGrid;
use crate::riccati::{Convention, RiccatiVariant};
use crate::system::{LinearModel, LinearModelSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub t0: f64,
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionSpec {
    Constant,
    ExpDecay { rate: f64 },
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub gaussian_cov: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    #[serde(default)]
    pub jumps: Vec<JumpComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub a: CoefficientSpec,
    pub b: CoefficientSpec,
    pub c: CoefficientSpec,
    pub d: CoefficientSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_cov: Option<Vec<Vec<f64>>>,
    pub system_noise: NoiseSpec,
    pub observation_noise: NoiseSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Standard,
    Limiting,
    Degenerate,
}

impl From<VariantName> for RiccatiVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Standard => RiccatiVariant::Standard,
            VariantName::Limiting => RiccatiVariant::Limiting,
            VariantName::Degenerate => RiccatiVariant::Degenerate,
        }
    }
}

fn default_phi_cutoffs() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}

fn default_variant() -> VariantName {
    VariantName::Limiting
}

/// Shared by `[riccati]` and `[filter]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    #[serde(default = "default_variant")]
    pub variant: VariantName,
    /// Truncation level for the standard variant; omit for square-integrable noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default = "default_phi_cutoffs")]
    pub phi_cutoffs: Vec<f64>,
    /// Filter only: add gain columns to the CSV.
    #[serde(default)]
    pub export_gains: bool,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection {
            variant: default_variant(),
            cutoff: None,
            convention: Convention::default(),
            phi_cutoffs: default_phi_cutoffs(),
            export_gains: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Extra observation paths truncated at these levels, coupled with the exact one.
    #[serde(default)]
    pub cutoffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// `E|L2(T) - L2_n(T)|` for the observation noise.
    Levy,
    /// `E|Z(T) - Z_n(T)|`.
    Observation,
    /// Inverse truncated covariance ladder.
    Upsilon,
    Riccati,
    Filter,
}

fn all_studies() -> Vec<Study> {
    vec![
        Study::Levy,
        Study::Observation,
        Study::Upsilon,
        Study::Riccati,
        Study::Filter,
    ]
}

fn default_converge_cutoffs() -> Vec<f64> {
    vec![1.0, 10.0, 100.0, 1000.0]
}

fn default_upsilon_cutoffs() -> Vec<f64> {
    vec![1e2, 1e3, 1e4, 1e5, 1e6]
}

fn default_converge_replicates() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    #[serde(default = "all_studies")]
    pub studies: Vec<Study>,
    #[serde(default = "default_converge_cutoffs")]
    pub cutoffs: Vec<f64>,
    #[serde(default = "default_upsilon_cutoffs")]
    pub upsilon_cutoffs: Vec<f64>,
    #[serde(default = "default_converge_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub convention: Convention,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        ConvergeSection {
            studies: all_studies(),
            cutoffs: default_converge_cutoffs(),
            upsilon_cutoffs: default_upsilon_cutoffs(),
            replicates: default_converge_replicates(),
            convention: Convention::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    #[serde(default)]
    pub law: usize,
    #[serde(default)]
    pub replicate: usize,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub riccati: SolveSection,
    #[serde(default)]
    pub filter: SolveSection,
    #[serde(default)]
    pub converge: ConvergeSection,
    #[serde(default)]
    pub bench: ExperimentConfig,
    /// Write one bench replicate as a CSV trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSection>,
}

impl RunConfig {
    /// Parse a config file; relative table paths become absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut cfg = RunConfig::parse(&text, &path.display().to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = fs::canonicalize(if base.as_os_str().is_empty() {
            Path::new(".")
        } else {
            &base
        })?;
        cfg.absolutize(&base);
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(origin, e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    cfg.schema_version
                ),
            ));
        }
        Ok(cfg)
    }

    fn absolutize(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = &mut self.model {
            for c in [&mut m.a, &mut m.b, &mut m.c, &mut m.d] {
                if let Some(t) = &mut c.table {
                    fix(t);
                }
                if let Some(FunctionSpec::Table(t)) = &mut c.function {
                    fix(t);
                }
            }
        }
    }

    /// Fill the optional initial state so the written config is complete.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if let Some(m) = &mut out.model {
            let d1 = m.a.matrix.as_ref().map(Vec::len).or(m.a.rows).unwrap_or(0);
            m.initial_mean.get_or_insert_with(|| vec![0.0; d1]);
            m.initial_cov.get_or_insert_with(|| vec![vec![0.0; d1]; d1]);
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<resolved>", e.to_string()))
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::config("grid", "this subcommand needs a [grid] section"))?;
        TimeGrid::new(g.t0, g.horizon, g.dt)
    }

    pub fn model(&self) -> Result<LinearModel> {
        let m = self
            .model
            .as_ref()
            .ok_or_else(|| Error::config("model", "this subcommand needs a [model] section"))?;
        build_model(m)
    }
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::config(
            field,
            "expected a non-empty rectangular matrix",
        ));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn read_table(path: &Path, width: usize, field: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(field, format!("{}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let cells = match cells {
            Ok(c) => c,
            Err(_) if times.is_empty() && rows.is_empty() => continue,
            Err(e) => {
                return Err(Error::config(
                    field,
                    format!("{} line {}: {e}", path.display(), i + 1),
                ))
            }
        };
        if cells.len() != width + 1 {
            return Err(Error::config(
                field,
                format!(
                    "{} line {}: expected {} columns",
                    path.display(),
                    i + 1,
                    width + 1
                ),
            ));
        }
        times.push(cells[0]);
        rows.push(cells[1..].to_vec());
    }
    Ok((times, rows))
}

fn build_coefficient(spec: &CoefficientSpec, field: &str) -> Result<TimeMatrixFunction> {
    match (&spec.matrix, &spec.table) {
        (Some(rows), None) => {
            let m = matrix(rows, &format!("{field}.matrix"))?;
            match &spec.function {
                None | Some(FunctionSpec::Constant) => Ok(TimeMatrixFunction::constant(m)),
                Some(FunctionSpec::ExpDecay { rate }) => Ok(TimeMatrixFunction::scaled(
                    m,
                    ScalarFunction::ExpDecay { rate: *rate },
                )),
                Some(FunctionSpec::Table(path)) => {
                    let f = format!("{field}.function.table");
                    let (times, values) = read_table(path, 1, &f)?;
                    let values = values.into_iter().map(|v| v[0]).collect();
                    let table = StepTable::new(times, values)
                        .map_err(|e| Error::config(&f, e.to_string()))?;
                    Ok(TimeMatrixFunction::scaled(m, ScalarFunction::Table(table)))
                }
            }
        }
        (None, Some(path)) => {
            let f = format!("{field}.table");
            let (r, c) = match (spec.rows, spec.cols) {
                (Some(r), Some(c)) if r > 0 && c > 0 => (r, c),
                _ => {
                    return Err(Error::config(
                        &f,
                        "a matrix table needs positive `rows` and `cols`",
                    ))
                }
            };
            if spec.function.is_some() {
                return Err(Error::config(
                    field,
                    "`function` applies to `matrix`, not to `table`",
                ));
            }
            let (times, values) = read_table(path, r * c, &f)?;
            let values = values
                .into_iter()
                .map(|v| DMatrix::from_row_slice(r, c, &v))
                .collect();
            TimeMatrixFunction::table(times, values).map_err(|e| Error::config(&f, e.to_string()))
        }
        _ => Err(Error::config(
            field,
            "give exactly one of `matrix` or `table`",
        )),
    }
}

fn build_noise(spec: &NoiseSpec, field: &str) -> Result<LevyModel> {
    let cov = matrix(&spec.gaussian_cov, &format!("{field}.gaussian_cov"))?;
    let wrap = |e: Error| Error::config(field, e.to_string());
    match &spec.drift {
        None => LevyModel::new(cov, spec.jumps.clone()).map_err(wrap),
        Some(b) => LevyModel::with_drift(DVector::from_column_slice(b), cov, spec.jumps.clone())
            .map_err(wrap),
    }
}

pub fn build_model(m: &ModelSection) -> Result<LinearModel> {
    let a = build_coefficient(&m.a, "model.a")?;
    let d1 = a.shape().0;
    let spec = LinearModelSpec {
        a,
        b: build_coefficient(&m.b, "model.b")?,
        c: build_coefficient(&m.c, "model.c")?,
        d: build_coefficient(&m.d, "model.d")?,
        system_noise: build_noise(&m.system_noise, "model.system_noise")?,
        observation_noise: build_noise(&m.observation_noise, "model.observation_noise")?,
        initial_mean: m
            .initial_mean
            .as_ref()
            .map_or_else(|| DVector::zeros(d1), |v| DVector::from_column_slice(v)),
        initial_cov: match &m.initial_cov {
            Some(rows) => matrix(rows, "model.initial_cov")?,
            None => DMatrix::zeros(d1, d1),
        },
    };
    LinearModel::new(spec).map_err(|e| Error::config("model", e.to_string()))
}
