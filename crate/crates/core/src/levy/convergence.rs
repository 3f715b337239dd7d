use rayon::prelude::*;

use super::jump::Cutoff;
use super::model::LevyModel;
use super::sample::LayeredNoise;
use crate::error::{Error, Result};
use crate::path::{fmt_f64, TimeGrid};
use crate::rng::replicate_seed;
use crate::stats::{mean_estimate, Estimate};

pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct L1ConvergenceRow {
    pub cutoff: f64,
    /// Monte-Carlo estimate of the mean absolute terminal gap.
    pub empirical: Estimate,
    pub bound: f64,
}

/// `(n, E|X(T) - X_n(T)|, bound)` rows for a coupled truncation ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct L1ConvergenceTable {
    pub replicates: usize,
    pub rows: Vec<L1ConvergenceRow>,
}

impl L1ConvergenceTable {
    pub fn empirical(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.empirical.value).collect()
    }

    pub fn cutoffs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cutoff).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cutoff,empirical,std_error,bound\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(r.cutoff),
                fmt_f64(r.empirical.value),
                fmt_f64(r.empirical.std_error),
                fmt_f64(r.bound)
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "replicates: {}\n\n| cutoff | E abs gap (se) | bound |\n|---|---|---|\n",
            self.replicates
        );
        for r in &self.rows {
            out.push_str(&format!(
                "| {:e} | {:.6e} ({:.2e}) | {:.6e} |\n",
                r.cutoff, r.empirical.value, r.empirical.std_error, r.bound
            ));
        }
        out
    }
}

pub(crate) fn check_ladder(cutoffs: &[f64], replicates: usize) -> Result<()> {
    if replicates < MIN_REPLICATES {
        return Err(Error::Domain(format!(
            "need at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    if cutoffs.is_empty() {
        return Err(Error::Domain("empty cutoff ladder".into()));
    }
    for &n in cutoffs {
        Cutoff::Finite(n).validate()?;
    }
    Ok(())
}

/// Collect `gaps[r][i]` over replicates in index order and summarize per cutoff.
pub(crate) fn summarize(
    cutoffs: &[f64],
    gaps: Vec<Vec<f64>>,
    bound: impl Fn(f64) -> Result<f64>,
) -> Result<L1ConvergenceTable> {
    let replicates = gaps.len();
    let rows = cutoffs
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let column: Vec<f64> = gaps.iter().map(|g| g[i]).collect();
            Ok(L1ConvergenceRow {
                cutoff: n,
                empirical: mean_estimate(&column),
                bound: bound(n)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(L1ConvergenceTable { replicates, rows })
}

/// Empirical `E|L(T) - L_n(T)|` along `cutoffs` with `L` and `L_n` drawn from
/// one shared jump stream per replicate. The bound column is
/// `2 T int_{|y| > n} |y| nu(dy)`.
pub fn empirical_l1_convergence(
    model: &LevyModel,
    cutoffs: &[f64],
    grid: &TimeGrid,
    replicates: usize,
    root_seed: u64,
) -> Result<L1ConvergenceTable> {
    check_ladder(cutoffs, replicates)?;
    let gaps: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let noise = LayeredNoise::sample(model, grid, replicate_seed(root_seed, r as u64))?;
            let full = noise.increments(Cutoff::Infinite)?;
            cutoffs
                .iter()
                .map(|&n| {
                    let cut = noise.increments(Cutoff::Finite(n))?;
                    Ok((full.terminal() - cut.terminal()).norm())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let horizon = grid.horizon() - grid.t0();
    summarize(cutoffs, gaps, |n| {
        Ok(2.0 * horizon * model.tail_first_moment(n)?)
    })
}
