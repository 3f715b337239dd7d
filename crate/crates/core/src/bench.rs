//! Monte-Carlo comparison of filters on a mean-reverting Brownian motion
//! observed through symmetric alpha-stable (or Gaussian) noise.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{run_with_gains, FilterGains, FilterVariant};
use crate::levy::{Cutoff, JumpComponentSpec, LevyModel};
use crate::path::{fmt_f64, PathGrid, TimeGrid};
use crate::riccati::{phi_limit, Convention, NoiseNormalization};
use crate::rng::replicate_seed;
use crate::stats::{mean_estimate, median_estimate, Estimate};
use crate::system::{
    simulate_observation, simulate_observations_coupled, simulate_system, LinearModel,
    LinearModelSpec,
};

pub const MIN_BENCH_REPLICATES: usize = 100;

/// Law of the observation noise `L2` for one table row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationLaw {
    /// Symmetric alpha-stable with dispersion 1: `E exp(iu L(t)) = exp(-t |u|^alpha)`.
    Stable { alpha: f64 },
    /// Standard Brownian motion.
    Gaussian,
}

impl ObservationLaw {
    pub fn levy_model(self) -> Result<LevyModel> {
        match self {
            ObservationLaw::Stable { alpha } => LevyModel::new(
                DMatrix::zeros(1, 1),
                vec![JumpComponentSpec::stable(0, alpha, 1.0)],
            ),
            ObservationLaw::Gaussian => LevyModel::brownian(DMatrix::identity(1, 1)),
        }
    }
}

impl fmt::Display for ObservationLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservationLaw::Stable { alpha } => write!(f, "alpha={alpha}"),
            ObservationLaw::Gaussian => f.write_str("gaussian"),
        }
    }
}

/// Built-in filter columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchVariant {
    /// The filter that ignores observations ("no filter").
    Degenerate,
    Limiting,
    /// Standard filter; with a cutoff it is fed the observations truncated there.
    Standard {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
}

impl BenchVariant {
    pub fn name(self) -> String {
        match self {
            BenchVariant::Degenerate => "degenerate".into(),
            BenchVariant::Limiting => "limiting".into(),
            BenchVariant::Standard { cutoff: None } => "standard".into(),
            BenchVariant::Standard { cutoff: Some(n) } => format!("standard(n={n})"),
        }
    }

    fn cutoff(self) -> Cutoff {
        match self {
            BenchVariant::Standard { cutoff: Some(n) } => Cutoff::Finite(n),
            _ => Cutoff::Infinite,
        }
    }
}

/// Aggregate of the per-replicate error over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Median over replicates of the time-averaged squared error.
    #[default]
    MedianPathMse,
    /// Mean over replicates of the time-averaged squared error.
    MeanPathMse,
    /// Median over replicates of the root of the time-averaged squared error.
    MedianPathRmse,
    /// Mean over replicates of the squared error at the horizon.
    MeanTerminalSe,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::MedianPathMse,
        Statistic::MeanPathMse,
        Statistic::MedianPathRmse,
        Statistic::MeanTerminalSe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::MedianPathMse => "median_path_mse",
            Statistic::MeanPathMse => "mean_path_mse",
            Statistic::MedianPathRmse => "median_path_rmse",
            Statistic::MeanTerminalSe => "mean_terminal_se",
        }
    }
}

fn default_observations() -> Vec<ObservationLaw> {
    [1.1, 1.5, 1.9]
        .into_iter()
        .map(|alpha| ObservationLaw::Stable { alpha })
        .collect()
}

fn default_variants() -> Vec<BenchVariant> {
    vec![BenchVariant::Degenerate]
}

fn default_phi_cutoffs() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}

/// Experiment on `dY = -Y dt + dB`, `Y0 = 0`, `dZ = Y dt + loading dL2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_observations")]
    pub observations: Vec<ObservationLaw>,
    #[serde(default = "ExperimentConfig::default_dt")]
    pub dt: f64,
    #[serde(default = "ExperimentConfig::default_horizon")]
    pub horizon: f64,
    #[serde(default = "ExperimentConfig::default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default = "default_variants")]
    pub variants: Vec<BenchVariant>,
    #[serde(default)]
    pub statistic: Statistic,
    /// Scalar `D` multiplying the observation noise.
    #[serde(default = "ExperimentConfig::default_loading")]
    pub loading: f64,
    #[serde(default)]
    pub convention: Convention,
    /// Ladder used for the diagnostics of the limiting filter's weight.
    #[serde(default = "default_phi_cutoffs")]
    pub phi_cutoffs: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            observations: default_observations(),
            dt: Self::default_dt(),
            horizon: Self::default_horizon(),
            replicates: Self::default_replicates(),
            root_seed: 0,
            variants: default_variants(),
            statistic: Statistic::default(),
            loading: Self::default_loading(),
            convention: Convention::default(),
            phi_cutoffs: default_phi_cutoffs(),
        }
    }
}

impl ExperimentConfig {
    fn default_dt() -> f64 {
        0.01
    }

    fn default_horizon() -> f64 {
        10.0
    }

    fn default_replicates() -> usize {
        10_000
    }

    fn default_loading() -> f64 {
        1.0
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.horizon, self.dt)
    }

    /// The linear model for one observation law.
    pub fn model(&self, law: ObservationLaw) -> Result<LinearModel> {
        LinearModel::new(LinearModelSpec::scalar(
            -1.0,
            1.0,
            1.0,
            self.loading,
            LevyModel::brownian(DMatrix::identity(1, 1))?,
            law.levy_model()?,
        ))
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < MIN_BENCH_REPLICATES {
            return Err(Error::Domain(format!(
                "need at least {MIN_BENCH_REPLICATES} replicates, got {}",
                self.replicates
            )));
        }
        if self.observations.is_empty() {
            return Err(Error::Domain("no observation laws configured".into()));
        }
        for law in &self.observations {
            law.levy_model()?;
        }
        self.grid()?;
        Ok(())
    }
}

/// What a competitor sees for one replicate.
pub struct CompetitorInput<'a> {
    pub model: &'a LinearModel,
    pub observations: &'a PathGrid,
    pub config: &'a ExperimentConfig,
}

/// Maps observations to an estimate path on the same grid.
pub type CompetitorFn = dyn Fn(&CompetitorInput<'_>) -> Result<PathGrid> + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchCell {
    pub median_path_mse: Estimate,
    pub mean_path_mse: Estimate,
    pub median_path_rmse: Estimate,
    pub mean_terminal_se: Estimate,
}

impl BenchCell {
    fn from_samples(path_mse: &[f64], terminal_se: &[f64]) -> Self {
        let rmse: Vec<f64> = path_mse.iter().map(|v| v.sqrt()).collect();
        BenchCell {
            median_path_mse: median_estimate(path_mse),
            mean_path_mse: mean_estimate(path_mse),
            median_path_rmse: median_estimate(&rmse),
            mean_terminal_se: mean_estimate(terminal_se),
        }
    }

    pub fn get(&self, statistic: Statistic) -> Estimate {
        match statistic {
            Statistic::MedianPathMse => self.median_path_mse,
            Statistic::MeanPathMse => self.mean_path_mse,
            Statistic::MedianPathRmse => self.median_path_rmse,
            Statistic::MeanTerminalSe => self.mean_terminal_se,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub law: ObservationLaw,
    pub cells: Vec<BenchCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn cell(&self, row: usize, column: &str) -> Option<&BenchCell> {
        let j = self.columns.iter().position(|c| c == column)?;
        self.rows.get(row)?.cells.get(j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// One row per observation law, one column per filter, each cell
/// `value (std error)` to four decimals. CSV puts the error in its own column.
pub fn emit_table(report: &BenchReport, format: TableFormat, statistic: Statistic) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str("noise");
            for c in &report.columns {
                out.push_str(&format!(",{c},{c}_se"));
            }
            out.push('\n');
            if report.columns.is_empty() {
                return out;
            }
            for row in &report.rows {
                out.push_str(&row.law.to_string());
                for cell in &row.cells {
                    let e = cell.get(statistic);
                    out.push_str(&format!(",{:.4},{:.4}", e.value, e.std_error));
                }
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            out.push_str(&format!("statistic: {}\n\n| noise |", statistic.name()));
            for c in &report.columns {
                out.push_str(&format!(" {c} |"));
            }
            out.push_str("\n|---|");
            for _ in &report.columns {
                out.push_str("---|");
            }
            out.push('\n');
            if report.columns.is_empty() {
                return out;
            }
            for row in &report.rows {
                out.push_str(&format!("| {} |", row.law));
                for cell in &row.cells {
                    let e = cell.get(statistic);
                    out.push_str(&format!(" {:.4} ({:.4}) |", e.value, e.std_error));
                }
                out.push('\n');
            }
        }
    }
    out
}

enum Column {
    Builtin(BenchVariant),
    Competitor(Arc<CompetitorFn>),
}

/// An experiment plus any registered competitors.
pub struct Bench {
    config: ExperimentConfig,
    columns: Vec<(String, Column)>,
}

struct Prepared {
    law: ObservationLaw,
    model: LinearModel,
    gains: Vec<Option<FilterGains>>,
    cutoffs: Vec<Cutoff>,
}

impl Bench {
    /// Fails on duplicate built-in variants.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let mut bench = Bench {
            config: config.clone(),
            columns: Vec::new(),
        };
        for v in config.variants {
            bench.push(v.name(), Column::Builtin(v))?;
        }
        Ok(bench)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|(n, _)| n.clone()).collect()
    }

    fn push(&mut self, name: String, column: Column) -> Result<()> {
        if self.columns.iter().any(|(n, _)| *n == name) {
            return Err(Error::Registration(format!(
                "column `{name}` is already registered"
            )));
        }
        self.columns.push((name, column));
        Ok(())
    }

    /// Add a competitor column.
    pub fn register_competitor<F>(&mut self, name: &str, hook: F) -> Result<()>
    where
        F: Fn(&CompetitorInput<'_>) -> Result<PathGrid> + Send + Sync + 'static,
    {
        self.push(name.to_string(), Column::Competitor(Arc::new(hook)))
    }

    fn prepare(&self, law: ObservationLaw, grid: &TimeGrid) -> Result<Prepared> {
        let model = self.config.model(law)?;
        let conv = self.config.convention;
        let mut gains = Vec::with_capacity(self.columns.len());
        let mut cutoffs = BTreeSet::new();
        for (_, column) in &self.columns {
            let g = match column {
                Column::Builtin(BenchVariant::Degenerate) => {
                    Some(FilterGains::degenerate(&model, grid))
                }
                Column::Builtin(BenchVariant::Limiting) => {
                    let phi = phi_limit(&model, &self.config.phi_cutoffs, conv, grid)?;
                    Some(FilterGains::solve(&model, &phi, FilterVariant::Limiting)?.0)
                }
                Column::Builtin(v @ BenchVariant::Standard { .. }) => {
                    let cutoff = v.cutoff();
                    if let Cutoff::Finite(n) = cutoff {
                        cutoffs.insert(n.to_bits());
                    }
                    let norm = NoiseNormalization::standard(&model, cutoff, conv, grid)?;
                    Some(FilterGains::solve(&model, &norm, FilterVariant::Standard { cutoff })?.0)
                }
                Column::Competitor(_) => None,
            };
            gains.push(g);
        }
        let cutoffs = cutoffs
            .into_iter()
            .map(|b| Cutoff::Finite(f64::from_bits(b)))
            .collect();
        Ok(Prepared {
            law,
            model,
            gains,
            cutoffs,
        })
    }

    /// Observations for one replicate: the exact path, then one per finite cutoff.
    fn observations(
        &self,
        p: &Prepared,
        y: &PathGrid,
        seed: u64,
    ) -> Result<Vec<(Cutoff, PathGrid)>> {
        if p.cutoffs.is_empty() {
            let z = simulate_observation(&p.model, y, Cutoff::Infinite, seed)?;
            return Ok(vec![(Cutoff::Infinite, z)]);
        }
        let mut all = vec![Cutoff::Infinite];
        all.extend(p.cutoffs.iter().copied());
        let zs = simulate_observations_coupled(&p.model, y, &all, seed)?;
        Ok(all.into_iter().zip(zs).collect())
    }

    /// Estimates of every column for one replicate and law.
    fn estimates(&self, p: &Prepared, zs: &[(Cutoff, PathGrid)]) -> Result<Vec<PathGrid>> {
        let pick = |c: Cutoff| &zs.iter().find(|(k, _)| *k == c).unwrap().1;
        self.columns
            .iter()
            .zip(&p.gains)
            .map(|((_, column), gains)| match column {
                Column::Builtin(v) => {
                    let run = run_with_gains(&p.model, pick(v.cutoff()), gains.as_ref().unwrap())?;
                    Ok(run.estimates().clone())
                }
                Column::Competitor(hook) => {
                    let input = CompetitorInput {
                        model: &p.model,
                        observations: pick(Cutoff::Infinite),
                        config: &self.config,
                    };
                    let est = hook(&input)?;
                    if est.grid() != zs[0].1.grid() || est.dim() != 1 {
                        return Err(Error::Alignment(
                            "competitor estimate is not a scalar path on the observation grid"
                                .into(),
                        ));
                    }
                    Ok(est)
                }
            })
            .collect()
    }

    fn prepared(&self) -> Result<(TimeGrid, Vec<Prepared>)> {
        self.config.validate()?;
        let grid = self.config.grid()?;
        let prepared = self
            .config
            .observations
            .iter()
            .map(|&law| self.prepare(law, &grid))
            .collect::<Result<_>>()?;
        Ok((grid, prepared))
    }

    /// Run every replicate for every law. Each replicate uses the same system
    /// path for all laws; results are reduced in replicate order.
    pub fn run_benchmark(&self) -> Result<BenchReport> {
        let (grid, prepared) = self.prepared()?;
        let ncol = self.columns.len();
        // errors[r][law][col] = (path mse, terminal squared error)
        let errors: Vec<Vec<Vec<(f64, f64)>>> = (0..self.config.replicates)
            .into_par_iter()
            .map(|r| -> Result<_> {
                let seed = replicate_seed(self.config.root_seed, r as u64);
                let y = simulate_system(&prepared[0].model, &grid, seed)?;
                prepared
                    .iter()
                    .map(|p| {
                        let zs = self.observations(p, &y, seed)?;
                        let est = self.estimates(p, &zs)?;
                        Ok(est.iter().map(|e| path_errors(&y, e)).collect())
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let rows = prepared
            .iter()
            .enumerate()
            .map(|(li, p)| {
                let cells = (0..ncol)
                    .map(|c| {
                        let mse: Vec<f64> = errors.iter().map(|e| e[li][c].0).collect();
                        let term: Vec<f64> = errors.iter().map(|e| e[li][c].1).collect();
                        BenchCell::from_samples(&mse, &term)
                    })
                    .collect();
                BenchRow { law: p.law, cells }
            })
            .collect();
        Ok(BenchReport {
            config: self.config.clone(),
            columns: self.column_names(),
            rows,
        })
    }

    /// `t,y,z,<column>...` for one replicate and law.
    pub fn trace(&self, law_index: usize, replicate: usize) -> Result<String> {
        let (grid, prepared) = self.prepared()?;
        let p = prepared
            .get(law_index)
            .ok_or_else(|| Error::Domain(format!("no observation law at index {law_index}")))?;
        let seed = replicate_seed(self.config.root_seed, replicate as u64);
        let y = simulate_system(&p.model, &grid, seed)?;
        let zs = self.observations(p, &y, seed)?;
        let est = self.estimates(p, &zs)?;
        let mut out = String::from("t,y,z");
        for (name, _) in &self.columns {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        let z = &zs[0].1;
        for k in 0..grid.len() {
            out.push_str(&format!(
                "{},{},{}",
                fmt_f64(grid.time(k)),
                fmt_f64(y.value(k)[0]),
                fmt_f64(z.value(k)[0])
            ));
            for e in &est {
                out.push(',');
                out.push_str(&fmt_f64(e.value(k)[0]));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// `(mean_k |Y_k - Y_hat_k|^2, |Y_T - Y_hat_T|^2)` over all grid points including the origin.
fn path_errors(truth: &PathGrid, estimate: &PathGrid) -> (f64, f64) {
    let n = truth.grid().len();
    let mut sum = 0.0;
    let mut last = 0.0;
    for k in 0..n {
        last = (truth.value(k) - estimate.value(k)).norm_squared();
        sum += last;
    }
    (sum / n as f64, last)
}

/// Run a benchmark with only the built-in variants.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchReport> {
    Bench::new(config.clone())?.run_benchmark()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variants: Vec<BenchVariant>) -> ExperimentConfig {
        ExperimentConfig {
            observations: vec![ObservationLaw::Stable { alpha: 1.5 }],
            horizon: 2.0,
            replicates: 200,
            root_seed: 5,
            variants,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn deterministic_report() {
        let c = small(vec![
            BenchVariant::Degenerate,
            BenchVariant::Standard { cutoff: Some(10.0) },
        ]);
        assert_eq!(run_benchmark(&c).unwrap(), run_benchmark(&c).unwrap());
    }

    #[test]
    fn alpha_out_of_range_is_regime_error() {
        let mut c = small(vec![BenchVariant::Degenerate]);
        c.observations = vec![ObservationLaw::Stable { alpha: 2.0 }];
        assert!(matches!(run_benchmark(&c), Err(Error::Regime(_))));
    }

    #[test]
    fn too_few_replicates() {
        let mut c = small(vec![BenchVariant::Degenerate]);
        c.replicates = 10;
        assert!(matches!(run_benchmark(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn duplicate_registration_fails() {
        let mut b = Bench::new(small(vec![BenchVariant::Degenerate])).unwrap();
        let zero = |i: &CompetitorInput<'_>| {
            let g = *i.observations.grid();
            Ok(PathGrid::from_increments(g, 1, 0, vec![0.0; g.steps()]))
        };
        b.register_competitor("zero", zero).unwrap();
        assert!(matches!(
            b.register_competitor("zero", zero),
            Err(Error::Registration(_))
        ));
        assert!(matches!(
            b.register_competitor("degenerate", zero),
            Err(Error::Registration(_))
        ));
    }

    #[test]
    fn zero_estimator_matches_degenerate_from_zero() {
        let mut b = Bench::new(small(vec![BenchVariant::Degenerate])).unwrap();
        b.register_competitor("zero", |i: &CompetitorInput<'_>| {
            let g = *i.observations.grid();
            Ok(PathGrid::from_increments(g, 1, 0, vec![0.0; g.steps()]))
        })
        .unwrap();
        let r = b.run_benchmark().unwrap();
        assert_eq!(r.rows[0].cells[0], r.rows[0].cells[1]);
    }

    #[test]
    fn competitor_on_wrong_grid_is_rejected() {
        let mut b = Bench::new(small(vec![])).unwrap();
        b.register_competitor("short", |_: &CompetitorInput<'_>| {
            let g = TimeGrid::with_steps(0.0, 0.01, 3).unwrap();
            Ok(PathGrid::from_increments(g, 1, 0, vec![0.0; 3]))
        })
        .unwrap();
        assert!(matches!(b.run_benchmark(), Err(Error::Alignment(_))));
    }

    #[test]
    fn tables() {
        let c = small(vec![BenchVariant::Degenerate]);
        let r = run_benchmark(&c).unwrap();
        let md = emit_table(&r, TableFormat::Markdown, Statistic::MedianPathMse);
        assert_eq!(
            md.lines()
                .filter(|l| l.starts_with("| alpha=1.5 |"))
                .count(),
            1
        );
        let csv = emit_table(&r, TableFormat::Csv, Statistic::MeanPathMse);
        assert!(csv.starts_with("noise,degenerate,degenerate_se\nalpha=1.5,"));

        let empty = run_benchmark(&small(vec![])).unwrap();
        assert_eq!(
            emit_table(&empty, TableFormat::Csv, Statistic::MedianPathMse),
            "noise\n"
        );
        let md = emit_table(&empty, TableFormat::Markdown, Statistic::MedianPathMse);
        assert!(md.ends_with("| noise |\n|---|\n"));
    }

    #[test]
    fn trace_has_all_columns() {
        let c = small(vec![BenchVariant::Degenerate, BenchVariant::Limiting]);
        let t = Bench::new(c).unwrap().trace(0, 3).unwrap();
        assert!(t.starts_with("t,y,z,degenerate,limiting\n"));
        assert_eq!(t.lines().count(), 202);
    }

    #[test]
    fn config_defaults_round_trip() {
        let c: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<ExperimentConfig>(&text).unwrap(), c);
    }
}
