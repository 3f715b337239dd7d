//! The linear system `dY = A Y dt + B dL1` and its observation
//! `dZ = C Y dt + D dL2`, simulated with Euler-Maruyama on a shared grid.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::coeff::TimeMatrixFunction;
use crate::error::{Error, Result};
use crate::levy::{sample_increments, Cutoff, LayeredNoise, LevyModel};
use crate::linalg;
use crate::path::{PathGrid, TimeGrid};
use crate::rng::{replicate_seed, rng_from_seed, stream_seed, Stream};

pub use crate::levy::{L1ConvergenceRow, L1ConvergenceTable};

/// Everything needed to build a [`LinearModel`].
#[derive(Debug, Clone)]
pub struct LinearModelSpec {
    pub a: TimeMatrixFunction,
    pub b: TimeMatrixFunction,
    pub c: TimeMatrixFunction,
    pub d: TimeMatrixFunction,
    pub system_noise: LevyModel,
    pub observation_noise: LevyModel,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
}

impl LinearModelSpec {
    /// Scalar constant-coefficient model started deterministically at zero.
    pub fn scalar(
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        system_noise: LevyModel,
        observation_noise: LevyModel,
    ) -> Self {
        LinearModelSpec {
            a: TimeMatrixFunction::scalar(a),
            b: TimeMatrixFunction::scalar(b),
            c: TimeMatrixFunction::scalar(c),
            d: TimeMatrixFunction::scalar(d),
            system_noise,
            observation_noise,
            initial_mean: DVector::zeros(1),
            initial_cov: DMatrix::zeros(1, 1),
        }
    }
}

/// Validated linear filtering model.
#[derive(Debug, Clone)]
pub struct LinearModel {
    spec: LinearModelSpec,
    state_dim: usize,
    obs_dim: usize,
}

fn eval(f: &TimeMatrixFunction, t: f64) -> Cow<'_, DMatrix<f64>> {
    match f {
        TimeMatrixFunction::Constant(m) => Cow::Borrowed(m),
        other => Cow::Owned(other.eval(t)),
    }
}

impl LinearModel {
    pub fn new(spec: LinearModelSpec) -> Result<Self> {
        let (d1, d1b) = spec.a.shape();
        if d1 == 0 || d1 != d1b {
            return Err(Error::Model(format!("A must be square, got {d1}x{d1b}")));
        }
        let l = spec.system_noise.dim();
        let p = spec.observation_noise.dim();
        if spec.b.shape() != (d1, l) {
            return Err(Error::Model(format!(
                "B has shape {:?}, expected ({d1}, {l})",
                spec.b.shape()
            )));
        }
        let (d2, c_cols) = spec.c.shape();
        if c_cols != d1 || d2 == 0 {
            return Err(Error::Model(format!(
                "C has shape {:?}, expected (d2, {d1})",
                spec.c.shape()
            )));
        }
        if d2 > d1 {
            return Err(Error::Model(format!(
                "observation dimension {d2} exceeds state dimension {d1}"
            )));
        }
        if spec.d.shape() != (d2, p) {
            return Err(Error::Model(format!(
                "D has shape {:?}, expected ({d2}, {p})",
                spec.d.shape()
            )));
        }
        if spec.initial_mean.len() != d1 || spec.initial_cov.shape() != (d1, d1) {
            return Err(Error::Model(
                "initial mean/covariance dimension mismatch".into(),
            ));
        }
        if !linalg::is_symmetric(&spec.initial_cov, 1e-12)
            || !linalg::is_nonnegative_definite(&spec.initial_cov, 1e-10)
        {
            return Err(Error::Model(
                "initial covariance must be symmetric nonnegative-definite".into(),
            ));
        }
        if !spec.system_noise.is_square_integrable() {
            return Err(Error::InfiniteVariance(
                "system noise must be square-integrable".into(),
            ));
        }
        if !spec.system_noise.is_centred() || !spec.observation_noise.is_centred() {
            return Err(Error::Model(
                "noise processes must be centred (zero drift)".into(),
            ));
        }
        Ok(LinearModel {
            spec,
            state_dim: d1,
            obs_dim: d2,
        })
    }

    pub fn spec(&self) -> &LinearModelSpec {
        &self.spec
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn system_noise(&self) -> &LevyModel {
        &self.spec.system_noise
    }

    pub fn observation_noise(&self) -> &LevyModel {
        &self.spec.observation_noise
    }

    pub fn initial_mean(&self) -> &DVector<f64> {
        &self.spec.initial_mean
    }

    pub fn initial_cov(&self) -> &DMatrix<f64> {
        &self.spec.initial_cov
    }

    pub fn a(&self, t: f64) -> Cow<'_, DMatrix<f64>> {
        eval(&self.spec.a, t)
    }

    pub fn b(&self, t: f64) -> Cow<'_, DMatrix<f64>> {
        eval(&self.spec.b, t)
    }

    pub fn c(&self, t: f64) -> Cow<'_, DMatrix<f64>> {
        eval(&self.spec.c, t)
    }

    pub fn d(&self, t: f64) -> Cow<'_, DMatrix<f64>> {
        eval(&self.spec.d, t)
    }

    /// `M(t) = G(t) D(t)`, the normalized observation-noise loading.
    pub fn normalized_loading(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(gain_normalizer(self, t)? * self.d(t).as_ref())
    }

    /// True when `G(t) D(t)` does not depend on `t`.
    pub fn has_fixed_noise_direction(&self) -> bool {
        self.spec.d.has_fixed_direction()
    }

    /// Check that `D D^T` stays invertible at every grid point.
    pub fn validate_on_grid(&self, grid: &TimeGrid) -> Result<()> {
        for t in grid.times() {
            gain_normalizer(self, t)?;
        }
        Ok(())
    }

    /// Replace the initial mean, keeping everything else.
    pub fn with_initial_mean(&self, mean: DVector<f64>) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.initial_mean = mean;
        LinearModel::new(spec)
    }

    /// Replace the observation noise, keeping everything else.
    pub fn with_observation_noise(&self, noise: LevyModel) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.observation_noise = noise;
        LinearModel::new(spec)
    }
}

/// `G(t) = (D(t) D(t)^T)^{-1/2}`.
pub fn gain_normalizer(model: &LinearModel, t: f64) -> Result<DMatrix<f64>> {
    let d = model.d(t);
    linalg::inv_sqrt_spd(&(d.as_ref() * d.transpose()), t)
}

/// Euler-Maruyama path of the system process with `Y0 ~ N(mu0, P0)`.
pub fn simulate_system(model: &LinearModel, grid: &TimeGrid, seed: u64) -> Result<PathGrid> {
    let d1 = model.state_dim();
    let mut rng = rng_from_seed(stream_seed(seed, Stream::InitialState));
    let z = DVector::from_fn(d1, |_, _| StandardNormal.sample(&mut rng));
    let y0 = model.initial_mean() + linalg::psd_sqrt(model.initial_cov()) * z;
    let noise = sample_increments(
        model.system_noise(),
        grid,
        stream_seed(seed, Stream::SystemNoise),
        Cutoff::Infinite,
    )?;
    let dt = grid.dt();
    let mut y = y0.clone();
    let mut incs = Vec::with_capacity(grid.steps() * d1);
    for k in 0..grid.steps() {
        let t = grid.time(k);
        let inc = model.a(t).as_ref() * &y * dt + model.b(t).as_ref() * noise.increment(k);
        y += &inc;
        incs.extend_from_slice(inc.as_slice());
    }
    Ok(PathGrid::from_origin_and_increments(*grid, y0, seed, incs))
}

fn check_system_path(model: &LinearModel, system: &PathGrid) -> Result<()> {
    if system.dim() != model.state_dim() {
        return Err(Error::Alignment(format!(
            "system path has dimension {}, model state dimension is {}",
            system.dim(),
            model.state_dim()
        )));
    }
    Ok(())
}

/// `Z0 = 0`, `Z_{k+1} = Z_k + C(t_k) Y_k dt + D(t_k) dL2_k`.
pub fn observation_from_noise(
    model: &LinearModel,
    system: &PathGrid,
    noise: &PathGrid,
) -> Result<PathGrid> {
    check_system_path(model, system)?;
    if system.grid() != noise.grid() {
        return Err(Error::Alignment("noise and system grids differ".into()));
    }
    if noise.dim() != model.observation_noise().dim() {
        return Err(Error::Alignment("noise dimension does not match D".into()));
    }
    let grid = system.grid();
    let dt = grid.dt();
    let d2 = model.obs_dim();
    let mut incs = Vec::with_capacity(grid.steps() * d2);
    for k in 0..grid.steps() {
        let t = grid.time(k);
        let inc =
            model.c(t).as_ref() * system.value(k) * dt + model.d(t).as_ref() * noise.increment(k);
        incs.extend_from_slice(inc.as_slice());
    }
    Ok(PathGrid::from_increments(*grid, d2, noise.seed(), incs))
}

/// Observation path driven by the noise truncated at `cutoff`
/// (`Cutoff::Infinite` samples the exact noise law).
pub fn simulate_observation(
    model: &LinearModel,
    system: &PathGrid,
    cutoff: Cutoff,
    seed: u64,
) -> Result<PathGrid> {
    check_system_path(model, system)?;
    let noise = sample_increments(
        model.observation_noise(),
        system.grid(),
        stream_seed(seed, Stream::ObservationNoise),
        cutoff,
    )?;
    observation_from_noise(model, system, &noise)
}

/// Observation paths for several cutoffs sharing one jump stream, so that any
/// two of them differ exactly by `D` applied to the jumps between their cutoffs.
/// For a finite cutoff the result equals `simulate_observation` with the same seed.
pub fn simulate_observations_coupled(
    model: &LinearModel,
    system: &PathGrid,
    cutoffs: &[Cutoff],
    seed: u64,
) -> Result<Vec<PathGrid>> {
    check_system_path(model, system)?;
    let layered = LayeredNoise::sample(
        model.observation_noise(),
        system.grid(),
        stream_seed(seed, Stream::ObservationNoise),
    )?;
    cutoffs
        .iter()
        .map(|&c| observation_from_noise(model, system, &layered.increments(c)?))
        .collect()
}

/// `sup_t ||D(t)||` over the grid.
pub fn max_loading_norm(model: &LinearModel, grid: &TimeGrid) -> f64 {
    grid.times()
        .map(|t| linalg::op_norm(&model.d(t)))
        .fold(0.0, f64::max)
}

/// Empirical `E|Z(T) - Z_n(T)|` for coupled observation paths, with the bound
/// column `sup ||D|| * 2T * int_{|y| > n} |y| nu(dy)`.
pub fn observation_l1_convergence(
    model: &LinearModel,
    cutoffs: &[f64],
    grid: &TimeGrid,
    replicates: usize,
    root_seed: u64,
) -> Result<L1ConvergenceTable> {
    crate::levy::convergence::check_ladder(cutoffs, replicates)?;
    let mut all = vec![Cutoff::Infinite];
    all.extend(cutoffs.iter().map(|&n| Cutoff::Finite(n)));
    let gaps: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let seed = replicate_seed(root_seed, r as u64);
            let y = simulate_system(model, grid, seed)?;
            let zs = simulate_observations_coupled(model, &y, &all, seed)?;
            Ok(zs[1..]
                .iter()
                .map(|zn| (zs[0].terminal() - zn.terminal()).norm())
                .collect())
        })
        .collect::<Result<_>>()?;
    let horizon = grid.horizon() - grid.t0();
    let loading = max_loading_norm(model, grid);
    crate::levy::convergence::summarize(cutoffs, gaps, |n| {
        Ok(loading * 2.0 * horizon * model.observation_noise().tail_first_moment(n)?)
    })
}

/// `E|Y(t_k)|^2` on the grid from the moment equations
/// `m' = A m`, `P' = A P + P A^T + B Theta1 B^T`, integrated with RK4.
pub fn state_second_moment(model: &LinearModel, grid: &TimeGrid) -> Result<Vec<f64>> {
    let theta = model.system_noise().covariance_matrix(Cutoff::Infinite)?;
    let rhs = |t: f64, m: &DVector<f64>, p: &DMatrix<f64>| {
        let a = model.a(t);
        let b = model.b(t);
        let dm = a.as_ref() * m;
        let dp = a.as_ref() * p + p * a.transpose() + b.as_ref() * &theta * b.transpose();
        (dm, dp)
    };
    let dt = grid.dt();
    let mut m = model.initial_mean().clone();
    let mut p = model.initial_cov().clone();
    let mut out = Vec::with_capacity(grid.len());
    out.push(p.trace() + m.norm_squared());
    for k in 0..grid.steps() {
        let t = grid.time(k);
        let (m1, p1) = rhs(t, &m, &p);
        let (m2, p2) = rhs(
            t + dt / 2.0,
            &(&m + &m1 * (dt / 2.0)),
            &(&p + &p1 * (dt / 2.0)),
        );
        let (m3, p3) = rhs(
            t + dt / 2.0,
            &(&m + &m2 * (dt / 2.0)),
            &(&p + &p2 * (dt / 2.0)),
        );
        let (m4, p4) = rhs(t + dt, &(&m + &m3 * dt), &(&p + &p3 * dt));
        m += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (dt / 6.0);
        p += (p1 + p2 * 2.0 + p3 * 2.0 + p4) * (dt / 6.0);
        linalg::symmetrize(&mut p);
        out.push(p.trace() + m.norm_squared());
    }
    Ok(out)
}
