//! Riccati equations for the filter error matrix: the finite-variance form,
//! its limit along truncated observation noise, and the linear degenerate form.
//!
//! The observation weight `Xi(t)` enters as `S C^T G^T Xi G C S`. It is
//! tabulated once on the half-step grid so that RK4 stages and filter gains
//! reuse the same values.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{structural_upsilon, Cutoff};
use crate::linalg;
use crate::path::{fmt_f64, TimeGrid};
use crate::system::{gain_normalizer, state_second_moment, LinearModel};

/// Norm above which a Riccati solution is declared unstable.
pub const BLOWUP_LIMIT: f64 = 1e12;
/// Largest successive difference accepted when `Phi` is read off a cutoff ladder.
pub const PHI_LADDER_TOLERANCE: f64 = 1e-4;

/// How the observation weight is normalized in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `Xi(t) = (G D Lambda2 D^T G^T)(t)^{-1}`: the instantaneous noise
    /// intensity, which reproduces the classical Kalman-Bucy filter.
    #[default]
    Rate,
    /// `Xi(t) = Sigma2(t)^{-1}` with `Sigma2(t) = int_0^t G D Lambda2 D^T G^T dr`,
    /// the accumulated covariance of the normalized innovations.
    Cumulative,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Rate => "rate",
            Convention::Cumulative => "cumulative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiccatiVariant {
    /// Finite-variance observation noise, `Xi` from `Sigma2`.
    Standard,
    /// Limit along truncations, `Xi = Phi`.
    Limiting,
    /// `Xi = 0`: `dS/dt = A S + S A^T + B Lambda1 B^T`.
    Degenerate,
}

impl fmt::Display for RiccatiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiccatiVariant::Standard => "standard",
            RiccatiVariant::Limiting => "limiting",
            RiccatiVariant::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiMethod {
    /// Closed form from the exact limit of the inverse truncated covariance.
    Structural,
    /// Last iterate of a cutoff ladder that passed the convergence check.
    Ladder,
}

/// How well `Xi_n` approaches `Phi` along a cutoff ladder, measured as the
/// max-norm distance sup over grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiDiagnostics {
    pub method: PhiMethod,
    pub cutoffs: Vec<f64>,
    pub sup_gaps: Vec<f64>,
}

impl PhiDiagnostics {
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "method: {:?}\n\n| cutoff | sup_t max-norm gap to limit |\n|---|---|\n",
            self.method
        );
        for (n, g) in self.cutoffs.iter().zip(&self.sup_gaps) {
            out.push_str(&format!("| {n:e} | {g:.6e} |\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormalizationKind {
    /// Built from a finite observation-noise covariance.
    Sigma2 {
        covariance: DMatrix<f64>,
    },
    /// Limit of the truncated weights; `upsilon` is set for the structural method.
    Phi {
        upsilon: Option<DMatrix<f64>>,
    },
    Zero,
}

/// The weight `Xi(t)` and `W(t) = G^T Xi G` tabulated on the half-step grid.
#[derive(Debug, Clone)]
pub struct NoiseNormalization {
    kind: NormalizationKind,
    convention: Convention,
    grid: TimeGrid,
    xi: Vec<DMatrix<f64>>,
    weight: Vec<DMatrix<f64>>,
    singular_at_origin: bool,
    diagnostics: Option<PhiDiagnostics>,
}

fn integrand(model: &LinearModel, cov: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let m = model.normalized_loading(t)?;
    Ok(&m * cov * m.transpose())
}

/// `Sigma2(t) = int_{t0}^t G D Lambda2 D^T G^T dr` by the composite midpoint
/// rule on half-steps of `grid`, exact (`(t - t0) M Lambda2 M^T`) when the
/// direction of `D` is fixed.
pub fn sigma2(
    model: &LinearModel,
    cov: &DMatrix<f64>,
    grid: &TimeGrid,
    t: f64,
) -> Result<DMatrix<f64>> {
    let tau = t - grid.t0();
    if tau < 0.0 {
        return Err(Error::Domain(format!(
            "Sigma2 needs t >= {}, got {t}",
            grid.t0()
        )));
    }
    if model.has_fixed_noise_direction() {
        return Ok(integrand(model, cov, grid.t0())? * tau);
    }
    let h = grid.dt() / 2.0;
    let d2 = model.obs_dim();
    let mut acc = DMatrix::zeros(d2, d2);
    let mut a = grid.t0();
    while a < t {
        let b = (a + h).min(t);
        acc += integrand(model, cov, (a + b) / 2.0)? * (b - a);
        a = b;
    }
    Ok(acc)
}

/// `Xi` on the half-step grid for a finite covariance. Under the cumulative
/// convention the entry at the origin is a copy of the one at `t0 + dt`.
fn finite_xi(
    model: &LinearModel,
    cov: &DMatrix<f64>,
    grid: &TimeGrid,
    convention: Convention,
) -> Result<Vec<DMatrix<f64>>> {
    let half = grid.refined();
    let mut xi = Vec::with_capacity(half.len());
    match convention {
        Convention::Rate => {
            for t in half.times() {
                xi.push(linalg::inverse_spd(&integrand(model, cov, t)?, t)?);
            }
        }
        Convention::Cumulative if model.has_fixed_noise_direction() => {
            let base = integrand(model, cov, grid.t0())?;
            let inv = linalg::inverse_spd(&base, grid.t0())?;
            xi.push(DMatrix::zeros(0, 0));
            for j in 1..half.len() {
                xi.push(&inv / (half.time(j) - grid.t0()));
            }
        }
        Convention::Cumulative => {
            let h = half.dt();
            let mut acc = DMatrix::zeros(model.obs_dim(), model.obs_dim());
            xi.push(DMatrix::zeros(0, 0));
            for j in 1..half.len() {
                let mid = half.time(j) - h / 2.0;
                acc += integrand(model, cov, mid)? * h;
                xi.push(linalg::inverse_spd(&acc, half.time(j))?);
            }
        }
    }
    if convention == Convention::Cumulative {
        xi[0] = xi[2].clone();
    }
    Ok(xi)
}

/// `Phi` on the half-step grid from the exact limit `upsilon` of the inverse
/// truncated covariance, available when `G D` is square.
fn structural_phi(
    model: &LinearModel,
    upsilon: &DMatrix<f64>,
    grid: &TimeGrid,
    convention: Convention,
) -> Result<Vec<DMatrix<f64>>> {
    let congruence = |t: f64| -> Result<DMatrix<f64>> {
        let m_inv = model
            .normalized_loading(t)?
            .try_inverse()
            .ok_or_else(|| Error::Model(format!("G D is not invertible at t = {t}")))?;
        Ok(m_inv.transpose() * upsilon * m_inv)
    };
    let half = grid.refined();
    let mut phi = Vec::with_capacity(half.len());
    match convention {
        Convention::Rate => {
            for t in half.times() {
                phi.push(congruence(t)?);
            }
        }
        Convention::Cumulative => {
            let base = congruence(grid.t0())?;
            phi.push(DMatrix::zeros(0, 0));
            for j in 1..half.len() {
                phi.push(&base / (half.time(j) - grid.t0()));
            }
            phi[0] = phi[2].clone();
        }
    }
    Ok(phi)
}

fn sup_gap(a: &[DMatrix<f64>], b: &[DMatrix<f64>], first: usize) -> f64 {
    a.iter()
        .zip(b)
        .skip(first)
        .step_by(2)
        .map(|(x, y)| linalg::max_abs(&(x - y)))
        .fold(0.0, f64::max)
}

impl NoiseNormalization {
    fn assemble(
        model: &LinearModel,
        grid: &TimeGrid,
        kind: NormalizationKind,
        convention: Convention,
        xi: Vec<DMatrix<f64>>,
        diagnostics: Option<PhiDiagnostics>,
    ) -> Result<Self> {
        let half = grid.refined();
        let weight = xi
            .iter()
            .zip(half.times())
            .map(|(x, t)| {
                let g = gain_normalizer(model, t)?;
                Ok(g.transpose() * x * g)
            })
            .collect::<Result<Vec<_>>>()?;
        let singular_at_origin =
            convention == Convention::Cumulative && xi.iter().any(|m| m.iter().any(|v| *v != 0.0));
        Ok(NoiseNormalization {
            kind,
            convention,
            grid: *grid,
            xi,
            weight,
            singular_at_origin,
            diagnostics,
        })
    }

    /// Standard normalization from the observation noise truncated at `cutoff`
    /// (`Cutoff::Infinite` requires square-integrable noise).
    pub fn standard(
        model: &LinearModel,
        cutoff: Cutoff,
        convention: Convention,
        grid: &TimeGrid,
    ) -> Result<Self> {
        let cov = model.observation_noise().covariance_matrix(cutoff)?;
        NoiseNormalization::from_covariance(model, cov, convention, grid)
    }

    /// Standard normalization from an explicit observation-noise covariance.
    pub fn from_covariance(
        model: &LinearModel,
        covariance: DMatrix<f64>,
        convention: Convention,
        grid: &TimeGrid,
    ) -> Result<Self> {
        let p = model.observation_noise().dim();
        if covariance.shape() != (p, p) {
            return Err(Error::Model(format!(
                "noise covariance has shape {:?}, expected ({p}, {p})",
                covariance.shape()
            )));
        }
        let xi = finite_xi(model, &covariance, grid, convention)?;
        NoiseNormalization::assemble(
            model,
            grid,
            NormalizationKind::Sigma2 { covariance },
            convention,
            xi,
            None,
        )
    }

    /// `Xi = 0`. Needs no invertibility of `D D^T`.
    pub fn zero(model: &LinearModel, grid: &TimeGrid) -> Self {
        let d2 = model.obs_dim();
        let len = grid.refined().len();
        NoiseNormalization {
            kind: NormalizationKind::Zero,
            convention: Convention::Rate,
            grid: *grid,
            xi: vec![DMatrix::zeros(d2, d2); len],
            weight: vec![DMatrix::zeros(d2, d2); len],
            singular_at_origin: false,
            diagnostics: None,
        }
    }

    pub fn kind(&self) -> &NormalizationKind {
        &self.kind
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn diagnostics(&self) -> Option<&PhiDiagnostics> {
        self.diagnostics.as_ref()
    }

    /// True when `Xi` blows up at the origin, so integration starts at `t0 + dt`.
    pub fn singular_at_origin(&self) -> bool {
        self.singular_at_origin
    }

    pub fn is_zero(&self) -> bool {
        self.xi.iter().all(|m| m.iter().all(|v| *v == 0.0))
    }

    /// `Xi` at grid point `k`.
    pub fn xi_at(&self, k: usize) -> &DMatrix<f64> {
        &self.xi[2 * k]
    }

    /// `G^T Xi G` at grid point `k`.
    pub fn weight_at(&self, k: usize) -> &DMatrix<f64> {
        &self.weight[2 * k]
    }

    pub(crate) fn half_weight(&self, j: usize) -> &DMatrix<f64> {
        &self.weight[j]
    }

    fn half_index(&self, t: f64) -> Result<usize> {
        let half = self.grid.refined();
        let x = (t - half.t0()) / half.dt();
        let j = x.round();
        if j < 0.0 || j as usize >= half.len() || (x - j).abs() > 1e-9 {
            return Err(Error::Alignment(format!(
                "t = {t} is not a grid or half-step point"
            )));
        }
        Ok(j as usize)
    }

    /// `Xi(t)` at a grid or half-step point.
    pub fn xi(&self, t: f64) -> Result<&DMatrix<f64>> {
        Ok(&self.xi[self.half_index(t)?])
    }

    /// `G(t)^T Xi(t) G(t)` at a grid or half-step point.
    pub fn weight(&self, t: f64) -> Result<&DMatrix<f64>> {
        Ok(&self.weight[self.half_index(t)?])
    }
}

/// `Phi = lim Xi_n` along truncations of the observation noise.
///
/// When `G D` is square the limit is exact: `Phi = M^{-T} Upsilon M^{-1}`
/// (divided by `t - t0` under the cumulative convention when the direction of
/// `D` is fixed), with `Upsilon` the exact limit of the inverse truncated
/// covariance. `cutoffs` then only feed the diagnostics. Otherwise `Phi` is
/// the last iterate of the ladder, which must have settled to within
/// [`PHI_LADDER_TOLERANCE`].
pub fn phi_limit(
    model: &LinearModel,
    cutoffs: &[f64],
    convention: Convention,
    grid: &TimeGrid,
) -> Result<NoiseNormalization> {
    if cutoffs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(
            "cutoff ladder must be strictly increasing".into(),
        ));
    }
    for &n in cutoffs {
        Cutoff::Finite(n).validate()?;
    }
    let noise = model.observation_noise();
    let square = noise.dim() == model.obs_dim();
    let structural =
        square && (convention == Convention::Rate || model.has_fixed_noise_direction());
    let first = usize::from(convention == Convention::Cumulative);
    let ladder: Vec<Vec<DMatrix<f64>>> = cutoffs
        .par_iter()
        .map(|&n| {
            finite_xi(
                model,
                &noise.covariance_matrix(Cutoff::Finite(n))?,
                grid,
                convention,
            )
        })
        .collect::<Result<_>>()?;
    let (phi, upsilon, method) = if structural {
        let upsilon = structural_upsilon(noise)?;
        let phi = structural_phi(model, &upsilon, grid, convention)?;
        (phi, Some(upsilon), PhiMethod::Structural)
    } else {
        if ladder.len() < 2 {
            return Err(Error::Domain(
                "a ladder-based limit needs at least two cutoffs".into(),
            ));
        }
        let last = &ladder[ladder.len() - 1];
        let prev = &ladder[ladder.len() - 2];
        let diff = sup_gap(last, prev, 0).max(sup_gap(last, prev, 1));
        if diff > PHI_LADDER_TOLERANCE {
            return Err(Error::Convergence(format!(
                "observation weight ladder has not settled: last two iterates differ by {diff:e} \
                 (tolerance {PHI_LADDER_TOLERANCE:e}) at cutoffs {:e}, {:e}",
                cutoffs[cutoffs.len() - 2],
                cutoffs[cutoffs.len() - 1]
            )));
        }
        (last.clone(), None, PhiMethod::Ladder)
    };
    let sup_gaps = ladder
        .iter()
        .map(|xi_n| sup_gap(xi_n, &phi, 2 * first))
        .collect();
    let diagnostics = PhiDiagnostics {
        method,
        cutoffs: cutoffs.to_vec(),
        sup_gaps,
    };
    NoiseNormalization::assemble(
        model,
        grid,
        NormalizationKind::Phi { upsilon },
        convention,
        phi,
        Some(diagnostics),
    )
}

/// `S` on the grid for one variant of the Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    grid: TimeGrid,
    variant: RiccatiVariant,
    convention: Convention,
    values: Vec<DMatrix<f64>>,
    /// Largest relative asymmetry seen before symmetrizing a step.
    max_asymmetry: f64,
    /// First grid index where the full equation is used; 1 when a degenerate
    /// step bridged a singular origin.
    full_start: usize,
}

impl RiccatiSolution {
    pub const METHOD: &'static str = "rk4";

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn variant(&self) -> RiccatiVariant {
        self.variant
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &DMatrix<f64> {
        &self.values[k]
    }

    pub fn terminal(&self) -> &DMatrix<f64> {
        self.values.last().unwrap()
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.max_asymmetry
    }

    pub fn full_start(&self) -> usize {
        self.full_start
    }

    /// `sup_k max|S(t_k) - other(t_k)|`.
    pub fn sup_distance(&self, other: &RiccatiSolution) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Alignment(
                "Riccati solutions live on different grids".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| linalg::max_abs(&(a - b)))
            .fold(0.0, f64::max))
    }

    /// `t,s11,s12,...,sdd`, row-major.
    pub fn to_csv(&self) -> String {
        let d = self.values[0].nrows();
        let mut out = String::from("t");
        for i in 1..=d {
            for j in 1..=d {
                out.push_str(&format!(",s{i}{j}"));
            }
        }
        out.push('\n');
        for (k, s) in self.values.iter().enumerate() {
            out.push_str(&fmt_f64(self.grid.time(k)));
            for i in 0..d {
                for j in 0..d {
                    out.push(',');
                    out.push_str(&fmt_f64(s[(i, j)]));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Integrate `dS/dt = A S + S A^T + B Lambda1 B^T - S C^T G^T Xi G C S` with
/// classical RK4 on `grid`, starting from the initial covariance.
///
/// `Standard` needs a `Sigma2` normalization, `Limiting` a `Phi` one and
/// `Degenerate` the zero one. When `Xi` is singular at the origin the first
/// step solves the degenerate equation and the full equation takes over at
/// `t0 + dt`. Standard
/// solutions are checked against `||S(t)||_max <= d1 E|Y(t)|^2`.
pub fn solve_riccati(
    model: &LinearModel,
    normalization: &NoiseNormalization,
    variant: RiccatiVariant,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    if normalization.grid() != grid {
        return Err(Error::Alignment(
            "normalization was tabulated on another grid".into(),
        ));
    }
    let matches = matches!(
        (variant, normalization.kind()),
        (RiccatiVariant::Standard, NormalizationKind::Sigma2 { .. })
            | (RiccatiVariant::Limiting, NormalizationKind::Phi { .. })
            | (RiccatiVariant::Degenerate, NormalizationKind::Zero)
    );
    if !matches {
        return Err(Error::Model(format!(
            "{variant} Riccati variant cannot use a {:?} normalization",
            normalization.kind()
        )));
    }
    let theta1 = model.system_noise().covariance_matrix(Cutoff::Infinite)?;
    let half = grid.refined();
    let h_at = |j: usize| -> DMatrix<f64> {
        let c = model.c(half.time(j));
        c.transpose() * normalization.half_weight(j) * c.as_ref()
    };
    let drift = |t: f64, s: &DMatrix<f64>| -> DMatrix<f64> {
        let a = model.a(t);
        let b = model.b(t);
        a.as_ref() * s + s * a.transpose() + b.as_ref() * &theta1 * b.transpose()
    };
    let rhs = |j: usize, s: &DMatrix<f64>, h: &DMatrix<f64>| -> DMatrix<f64> {
        drift(half.time(j), s) - s * h * s
    };

    let dt = grid.dt();
    let mut values = Vec::with_capacity(grid.len());
    values.push(model.initial_cov().clone());
    let mut max_asymmetry = 0.0_f64;
    let mut accept = |mut s: DMatrix<f64>, t: f64, values: &mut Vec<DMatrix<f64>>| -> Result<()> {
        let norm = linalg::max_abs(&s);
        if !norm.is_finite() || norm > BLOWUP_LIMIT {
            return Err(Error::Instability {
                t,
                norm,
                limit: BLOWUP_LIMIT,
            });
        }
        if norm > 0.0 {
            max_asymmetry = max_asymmetry.max(linalg::asymmetry(&s) / norm);
        }
        linalg::symmetrize(&mut s);
        values.push(s);
        Ok(())
    };

    let full_start = usize::from(normalization.singular_at_origin());
    if full_start == 1 {
        let s = &values[0];
        let k1 = drift(half.time(0), s);
        let k2 = drift(half.time(1), &(s + &k1 * (dt / 2.0)));
        let k3 = drift(half.time(1), &(s + &k2 * (dt / 2.0)));
        let k4 = drift(half.time(2), &(s + &k3 * dt));
        let s1 = s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        accept(s1, grid.time(1), &mut values)?;
    }
    let mut h_left = h_at(2 * full_start);
    for k in full_start..grid.steps() {
        let h_mid = h_at(2 * k + 1);
        let h_right = h_at(2 * k + 2);
        let s = &values[k];
        let k1 = rhs(2 * k, s, &h_left);
        let k2 = rhs(2 * k + 1, &(s + &k1 * (dt / 2.0)), &h_mid);
        let k3 = rhs(2 * k + 1, &(s + &k2 * (dt / 2.0)), &h_mid);
        let k4 = rhs(2 * k + 2, &(s + &k3 * dt), &h_right);
        let next = s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        accept(next, grid.time(k + 1), &mut values)?;
        h_left = h_right;
    }
    let solution = RiccatiSolution {
        grid: *grid,
        variant,
        convention: normalization.convention(),
        values,
        max_asymmetry,
        full_start,
    };
    if variant == RiccatiVariant::Standard {
        check_moment_bound(model, &solution)?;
    }
    Ok(solution)
}

/// Relative slack allowed in the second-moment bound.
const MOMENT_BOUND_SLACK: f64 = 1e-9;

/// Check `||S(t)||_max <= d1 E|Y(t)|^2` at every grid point and return the
/// largest ratio of the two sides.
pub fn check_moment_bound(model: &LinearModel, solution: &RiccatiSolution) -> Result<f64> {
    let second = state_second_moment(model, solution.grid())?;
    let d1 = model.state_dim() as f64;
    let mut worst = 0.0_f64;
    for (k, (s, m2)) in solution.values().iter().zip(&second).enumerate() {
        let norm = linalg::max_abs(s);
        let bound = d1 * m2;
        if norm > bound + MOMENT_BOUND_SLACK * bound.max(1.0) {
            return Err(Error::MomentBound {
                t: solution.grid().time(k),
                norm,
                bound,
            });
        }
        if bound > 0.0 {
            worst = worst.max(norm / bound);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiConvergenceRow {
    pub cutoff: f64,
    /// `sup_t max|S_n(t) - S_inf(t)|`.
    pub sup_gap: f64,
    /// Largest `||S_n(t)||_max / (d1 E|Y(t)|^2)` on the grid.
    pub moment_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiConvergenceTable {
    pub convention: Convention,
    pub rows: Vec<RiccatiConvergenceRow>,
}

impl RiccatiConvergenceTable {
    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sup_gap).collect()
    }

    pub fn cutoffs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cutoff).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cutoff,sup_gap,moment_ratio\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(r.cutoff),
                fmt_f64(r.sup_gap),
                fmt_f64(r.moment_ratio)
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "convention: {}\n\n| cutoff | sup gap to limit | max S / (d1 E abs(Y)^2) |\n|---|---|---|\n",
            self.convention
        );
        for r in &self.rows {
            out.push_str(&format!(
                "| {:e} | {:.6e} | {:.6} |\n",
                r.cutoff, r.sup_gap, r.moment_ratio
            ));
        }
        out
    }
}

/// Solve the standard equation for every cutoff and compare with the limiting
/// solution built from [`phi_limit`] on the same ladder.
pub fn riccati_convergence_study(
    model: &LinearModel,
    cutoffs: &[f64],
    convention: Convention,
    grid: &TimeGrid,
) -> Result<(RiccatiConvergenceTable, RiccatiSolution)> {
    if cutoffs.is_empty() {
        return Err(Error::Domain("empty cutoff ladder".into()));
    }
    let phi = phi_limit(model, cutoffs, convention, grid)?;
    let limit = solve_riccati(model, &phi, RiccatiVariant::Limiting, grid)?;
    let rows = cutoffs
        .par_iter()
        .map(|&n| {
            let norm = NoiseNormalization::standard(model, Cutoff::Finite(n), convention, grid)?;
            let s_n = solve_riccati(model, &norm, RiccatiVariant::Standard, grid)?;
            Ok(RiccatiConvergenceRow {
                cutoff: n,
                sup_gap: s_n.sup_distance(&limit)?,
                moment_ratio: check_moment_bound(model, &s_n)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((RiccatiConvergenceTable { convention, rows }, limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{ScalarFunction, TimeMatrixFunction};
    use crate::levy::{JumpComponentSpec, LevyModel};
    use crate::system::LinearModelSpec;
    use nalgebra::DVector;

    fn bm(v: f64) -> LevyModel {
        LevyModel::brownian(DMatrix::from_element(1, 1, v)).unwrap()
    }

    fn stable(alpha: f64) -> LevyModel {
        LevyModel::new(
            DMatrix::zeros(1, 1),
            vec![JumpComponentSpec::stable(0, alpha, 1.0)],
        )
        .unwrap()
    }

    fn ou(obs: LevyModel) -> LinearModel {
        LinearModel::new(LinearModelSpec::scalar(-1.0, 1.0, 1.0, 1.0, bm(1.0), obs)).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::new(0.0, 10.0, 0.01).unwrap()
    }

    #[test]
    fn degenerate_matches_closed_form() {
        let m = ou(stable(1.5));
        let g = grid();
        let s = solve_riccati(
            &m,
            &NoiseNormalization::zero(&m, &g),
            RiccatiVariant::Degenerate,
            &g,
        )
        .unwrap();
        for (k, v) in s.values().iter().enumerate() {
            let t = g.time(k);
            assert!((v[(0, 0)] - (1.0 - (-2.0 * t).exp()) / 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn frozen_equation_keeps_initial_value() {
        let mut spec = LinearModelSpec::scalar(0.0, 0.0, 1.0, 1.0, bm(1.0), stable(1.5));
        spec.initial_cov = DMatrix::from_element(1, 1, 2.5);
        let m = LinearModel::new(spec).unwrap();
        let g = grid();
        let phi = phi_limit(&m, &[10.0, 100.0], Convention::Rate, &g).unwrap();
        let s = solve_riccati(&m, &phi, RiccatiVariant::Limiting, &g).unwrap();
        assert!(s.values().iter().all(|v| v[(0, 0)] == 2.5));
    }

    #[test]
    fn zero_limit_equals_degenerate_bitwise() {
        let m = ou(stable(1.5));
        let g = grid();
        for conv in [Convention::Rate, Convention::Cumulative] {
            let phi = phi_limit(&m, &[10.0, 100.0, 1000.0], conv, &g).unwrap();
            assert!(phi.is_zero());
            assert!(!phi.singular_at_origin());
            let lim = solve_riccati(&m, &phi, RiccatiVariant::Limiting, &g).unwrap();
            let deg = solve_riccati(
                &m,
                &NoiseNormalization::zero(&m, &g),
                RiccatiVariant::Degenerate,
                &g,
            )
            .unwrap();
            assert_eq!(lim.values(), deg.values());
        }
    }

    #[test]
    fn sigma2_scalar_truncated_stable() {
        let noise = stable(1.5);
        let mut spec = LinearModelSpec::scalar(-1.0, 1.0, 1.0, 2.0, bm(1.0), noise.clone());
        spec.d = TimeMatrixFunction::scaled(
            DMatrix::from_element(1, 1, 2.0),
            ScalarFunction::ExpDecay { rate: 0.5 },
        );
        let m = LinearModel::new(spec).unwrap();
        let g = grid();
        let beta = noise.covariance_matrix(Cutoff::Finite(7.0)).unwrap();
        let direct = crate::levy::jump_second_moment(&noise.components()[0], 7.0).unwrap();
        assert!((beta[(0, 0)] - direct).abs() < 1e-12 * direct);
        let s = sigma2(&m, &beta, &g, 3.0).unwrap();
        // G D = 1 for any positive scalar D.
        assert!((s[(0, 0)] - 3.0 * direct).abs() < 1e-12 * direct);
        assert!(matches!(sigma2(&m, &beta, &g, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sigma2_table_uses_midpoint_rule() {
        let d = TimeMatrixFunction::table(
            vec![0.0, 1.0],
            vec![
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 3.0),
            ],
        )
        .unwrap();
        let mut spec = LinearModelSpec::scalar(-1.0, 1.0, 1.0, 1.0, bm(1.0), bm(4.0));
        spec.d = d;
        let m = LinearModel::new(spec).unwrap();
        let g = TimeGrid::new(0.0, 2.0, 0.25).unwrap();
        // G D is 1 for scalar positive D, so the integrand is the covariance 4.
        let s = sigma2(&m, &DMatrix::from_element(1, 1, 4.0), &g, 1.3).unwrap();
        assert!((s[(0, 0)] - 5.2).abs() < 1e-12);
    }

    #[test]
    fn mixed_phi_is_projection_over_t() {
        let noise = LevyModel::new(
            DMatrix::identity(2, 2),
            vec![JumpComponentSpec::stable(0, 1.5, 1.0)],
        )
        .unwrap();
        let mut spec = LinearModelSpec::scalar(0.0, 0.0, 0.0, 0.0, bm(1.0), noise);
        spec.a = TimeMatrixFunction::constant(-DMatrix::identity(2, 2));
        spec.b = TimeMatrixFunction::constant(DMatrix::from_column_slice(2, 1, &[1.0, 1.0]));
        spec.c = TimeMatrixFunction::constant(DMatrix::identity(2, 2));
        spec.d = TimeMatrixFunction::constant(DMatrix::identity(2, 2));
        spec.initial_mean = DVector::zeros(2);
        spec.initial_cov = DMatrix::zeros(2, 2);
        let m = LinearModel::new(spec).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let phi = phi_limit(&m, &[1e2, 1e4, 1e6], Convention::Cumulative, &g).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        for k in 1..g.len() {
            let t = g.time(k);
            assert!((phi.xi_at(k) - &expected / t).abs().max() < 1e-12);
        }
        assert_eq!(phi.xi_at(0), phi.xi_at(1));
        let rate = phi_limit(&m, &[1e2, 1e4, 1e6], Convention::Rate, &g).unwrap();
        assert!((rate.xi_at(3) - &expected).abs().max() < 1e-15);
        let gaps = &rate.diagnostics().unwrap().sup_gaps;
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn finite_variance_phi_is_plain_inverse() {
        let m = ou(bm(2.0));
        let g = grid();
        let phi = phi_limit(&m, &[1.0, 10.0], Convention::Rate, &g).unwrap();
        assert!((phi.xi_at(5)[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(phi
            .diagnostics()
            .unwrap()
            .sup_gaps
            .iter()
            .all(|v| *v < 1e-15));
    }

    #[test]
    fn variant_mismatch_rejected() {
        let m = ou(bm(1.0));
        let g = grid();
        let z = NoiseNormalization::zero(&m, &g);
        assert!(matches!(
            solve_riccati(&m, &z, RiccatiVariant::Standard, &g),
            Err(Error::Model(_))
        ));
        let other = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        assert!(matches!(
            solve_riccati(&m, &z, RiccatiVariant::Degenerate, &other),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn better_observations_give_smaller_error() {
        let g = grid();
        let solve = |v: f64| {
            let m = ou(bm(v));
            let n =
                NoiseNormalization::standard(&m, Cutoff::Infinite, Convention::Rate, &g).unwrap();
            solve_riccati(&m, &n, RiccatiVariant::Standard, &g).unwrap()
        };
        let (noisy, clean) = (solve(4.0), solve(0.25));
        for k in 1..g.len() {
            assert!(clean.value(k)[(0, 0)] < noisy.value(k)[(0, 0)]);
        }
    }

    #[test]
    fn gaussian_rate_riccati_reaches_algebraic_root() {
        // s' = -2 s + 1 - s^2 settles at sqrt(2) - 1.
        let m = ou(bm(1.0));
        let g = grid();
        let n = NoiseNormalization::standard(&m, Cutoff::Infinite, Convention::Rate, &g).unwrap();
        let s = solve_riccati(&m, &n, RiccatiVariant::Standard, &g).unwrap();
        assert!((s.terminal()[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-8);
        assert_eq!(s.full_start(), 0);
    }

    #[test]
    fn cumulative_standard_bridges_origin_with_degenerate_step() {
        let m = ou(bm(1.0));
        let g = grid();
        let n =
            NoiseNormalization::standard(&m, Cutoff::Infinite, Convention::Cumulative, &g).unwrap();
        assert!(n.singular_at_origin());
        let s = solve_riccati(&m, &n, RiccatiVariant::Standard, &g).unwrap();
        assert_eq!(s.full_start(), 1);
        assert!((s.value(1)[(0, 0)] - (1.0 - (-0.02f64).exp()) / 2.0).abs() < 1e-10);
        assert!(s.value(2)[(0, 0)] < (1.0 - (-0.04f64).exp()) / 2.0);
    }

    #[test]
    fn infinite_variance_standard_needs_cutoff() {
        let m = ou(stable(1.5));
        let g = grid();
        assert!(matches!(
            NoiseNormalization::standard(&m, Cutoff::Infinite, Convention::Rate, &g),
            Err(Error::InfiniteVariance(_))
        ));
    }

    #[test]
    fn blowup_is_reported() {
        let m = LinearModel::new(LinearModelSpec::scalar(
            20.0,
            1.0,
            1.0,
            1.0,
            bm(1.0),
            bm(1.0),
        ))
        .unwrap();
        let g = grid();
        let z = NoiseNormalization::zero(&m, &g);
        assert!(matches!(
            solve_riccati(&m, &z, RiccatiVariant::Degenerate, &g),
            Err(Error::Instability { .. })
        ));
    }

    #[test]
    fn convergence_gap_shrinks() {
        let m = ou(stable(1.5));
        let g = grid();
        let (table, _) =
            riccati_convergence_study(&m, &[10.0, 100.0, 1000.0], Convention::Rate, &g).unwrap();
        let gaps = table.gaps();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
        assert!(table.rows.iter().all(|r| r.moment_ratio <= 1.0 + 1e-9));
        assert!(table.to_csv().starts_with("cutoff,sup_gap,moment_ratio\n"));
    }

    #[test]
    fn csv_layout() {
        let m = ou(bm(1.0));
        let g = TimeGrid::new(0.0, 0.02, 0.01).unwrap();
        let s = solve_riccati(
            &m,
            &NoiseNormalization::zero(&m, &g),
            RiccatiVariant::Degenerate,
            &g,
        )
        .unwrap();
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,s11");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0.0000000000000000e0,"));
    }
}
