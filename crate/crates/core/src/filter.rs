//! The Kalman-Bucy filter recursion driven by observation increments, in its
//! standard, limiting and degenerate forms.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy::convergence::check_ladder;
use crate::levy::Cutoff;
use crate::path::{fmt_f64, PathGrid, TimeGrid};
use crate::riccati::{
    phi_limit, solve_riccati, Convention, NoiseNormalization, RiccatiSolution, RiccatiVariant,
};
use crate::rng::replicate_seed;
use crate::stats::{mean_estimate, Estimate};
use crate::system::{gain_normalizer, simulate_observations_coupled, simulate_system, LinearModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterVariant {
    /// Finite-variance filter; `cutoff` labels the truncation of the data it is fed.
    Standard {
        cutoff: Cutoff,
    },
    Limiting,
    /// Ignores the observations: `dY/dt = A Y`.
    Degenerate,
}

impl FilterVariant {
    pub fn riccati_variant(self) -> RiccatiVariant {
        match self {
            FilterVariant::Standard { .. } => RiccatiVariant::Standard,
            FilterVariant::Limiting => RiccatiVariant::Limiting,
            FilterVariant::Degenerate => RiccatiVariant::Degenerate,
        }
    }
}

impl fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterVariant::Standard {
                cutoff: Cutoff::Finite(n),
            } => write!(f, "standard(n={n})"),
            FilterVariant::Standard {
                cutoff: Cutoff::Infinite,
            } => f.write_str("standard"),
            FilterVariant::Limiting => f.write_str("limiting"),
            FilterVariant::Degenerate => f.write_str("degenerate"),
        }
    }
}

/// `K(t_k) = S(t_k) C(t_k)^T G(t_k)^T Xi(t_k) G(t_k)`.
pub fn gain_at(
    model: &LinearModel,
    riccati: &RiccatiSolution,
    normalization: &NoiseNormalization,
    k: usize,
) -> DMatrix<f64> {
    let t = riccati.grid().time(k);
    riccati.value(k) * model.c(t).transpose() * normalization.weight_at(k)
}

/// Gains on the grid, shared cheaply between filter runs.
#[derive(Debug, Clone)]
pub struct FilterGains {
    variant: FilterVariant,
    grid: TimeGrid,
    gains: Arc<[DMatrix<f64>]>,
}

impl FilterGains {
    pub fn new(
        model: &LinearModel,
        riccati: &RiccatiSolution,
        normalization: &NoiseNormalization,
        variant: FilterVariant,
    ) -> Result<Self> {
        if riccati.variant() != variant.riccati_variant() {
            return Err(Error::Model(format!(
                "{variant} filter cannot use a {} Riccati solution",
                riccati.variant()
            )));
        }
        if riccati.grid() != normalization.grid() {
            return Err(Error::Alignment(
                "Riccati solution and normalization live on different grids".into(),
            ));
        }
        let gains = (0..riccati.grid().len())
            .map(|k| gain_at(model, riccati, normalization, k))
            .collect();
        Ok(FilterGains {
            variant,
            grid: *riccati.grid(),
            gains,
        })
    }

    /// Solve the Riccati equation for `variant` and collect the gains.
    pub fn solve(
        model: &LinearModel,
        normalization: &NoiseNormalization,
        variant: FilterVariant,
    ) -> Result<(Self, RiccatiSolution)> {
        let grid = *normalization.grid();
        let riccati = solve_riccati(model, normalization, variant.riccati_variant(), &grid)?;
        Ok((
            FilterGains::new(model, &riccati, normalization, variant)?,
            riccati,
        ))
    }

    /// Degenerate gains without a Riccati solve.
    pub fn degenerate(model: &LinearModel, grid: &TimeGrid) -> Self {
        let zero = DMatrix::zeros(model.state_dim(), model.obs_dim());
        FilterGains {
            variant: FilterVariant::Degenerate,
            grid: *grid,
            gains: vec![zero; grid.len()].into(),
        }
    }

    pub fn variant(&self) -> FilterVariant {
        self.variant
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn gains(&self) -> &[DMatrix<f64>] {
        &self.gains
    }
}

/// Output of one filter pass.
#[derive(Debug, Clone)]
pub struct FilterRun {
    variant: FilterVariant,
    estimates: PathGrid,
    innovations: PathGrid,
    gains: FilterGains,
}

impl FilterRun {
    pub fn variant(&self) -> FilterVariant {
        self.variant
    }

    pub fn estimates(&self) -> &PathGrid {
        &self.estimates
    }

    /// `N(t) = Z(t) - int_0^t C Y_hat ds`, left-point sums.
    pub fn innovations(&self) -> &PathGrid {
        &self.innovations
    }

    pub fn gains(&self) -> &[DMatrix<f64>] {
        self.gains.gains()
    }

    /// `|Y(t_k) - Y_hat(t_k)|^2` at every grid point.
    pub fn squared_errors(&self, truth: &PathGrid) -> Result<Vec<f64>> {
        if truth.grid() != self.estimates.grid() || truth.dim() != self.estimates.dim() {
            return Err(Error::Alignment(
                "true path does not match the estimate grid".into(),
            ));
        }
        Ok((0..truth.grid().len())
            .map(|k| (truth.value(k) - self.estimates.value(k)).norm_squared())
            .collect())
    }

    /// `t,yhat_1..,n_1..` and, with `include_gains`, `k_11..` row-major.
    pub fn to_csv(&self, include_gains: bool) -> String {
        let grid = self.estimates.grid();
        let d1 = self.estimates.dim();
        let d2 = self.innovations.dim();
        let mut out = String::from("t");
        for i in 1..=d1 {
            out.push_str(&format!(",yhat_{i}"));
        }
        for i in 1..=d2 {
            out.push_str(&format!(",n_{i}"));
        }
        if include_gains {
            for i in 1..=d1 {
                for j in 1..=d2 {
                    out.push_str(&format!(",k_{i}{j}"));
                }
            }
        }
        out.push('\n');
        for k in 0..grid.len() {
            out.push_str(&fmt_f64(grid.time(k)));
            let (yhat, n) = (self.estimates.value(k), self.innovations.value(k));
            for v in yhat.iter().chain(n.iter()) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            if include_gains {
                let g = &self.gains.gains()[k];
                for i in 0..d1 {
                    for j in 0..d2 {
                        out.push(',');
                        out.push_str(&fmt_f64(g[(i, j)]));
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

fn check_observations(model: &LinearModel, observations: &PathGrid, grid: &TimeGrid) -> Result<()> {
    if observations.dim() != model.obs_dim() {
        return Err(Error::Model(format!(
            "observations have dimension {}, model expects {}",
            observations.dim(),
            model.obs_dim()
        )));
    }
    if observations.grid() != grid {
        return Err(Error::Alignment(
            "observation grid differs from the gain grid".into(),
        ));
    }
    Ok(())
}

/// `Y_hat(t_{k+1}) = Y_hat + A Y_hat dt + K_k (dZ_k - C Y_hat dt)` from `mu0`.
/// The degenerate variant never reads the observations.
pub fn run_with_gains(
    model: &LinearModel,
    observations: &PathGrid,
    gains: &FilterGains,
) -> Result<FilterRun> {
    let grid = gains.grid();
    check_observations(model, observations, grid)?;
    let dt = grid.dt();
    let d1 = model.state_dim();
    let degenerate = gains.variant() == FilterVariant::Degenerate;
    let origin = model.initial_mean().clone();
    let mut y = origin.clone();
    let mut incs = Vec::with_capacity(grid.steps() * d1);
    for k in 0..grid.steps() {
        let t = grid.time(k);
        let mut inc = model.a(t).as_ref() * &y * dt;
        if !degenerate {
            let innovation = observations.increment(k) - model.c(t).as_ref() * &y * dt;
            inc += &gains.gains()[k] * innovation;
        }
        y += &inc;
        incs.extend_from_slice(inc.as_slice());
    }
    let estimates = PathGrid::from_origin_and_increments(*grid, origin, observations.seed(), incs);
    let innovations = innovations(model, &estimates, observations)?;
    Ok(FilterRun {
        variant: gains.variant(),
        estimates,
        innovations,
        gains: gains.clone(),
    })
}

/// Run one filter pass; the Riccati variant must match `variant`.
pub fn run_filter(
    model: &LinearModel,
    observations: &PathGrid,
    riccati: &RiccatiSolution,
    normalization: &NoiseNormalization,
    variant: FilterVariant,
) -> Result<FilterRun> {
    let gains = FilterGains::new(model, riccati, normalization, variant)?;
    run_with_gains(model, observations, &gains)
}

/// `N(t_{k+1}) = N(t_k) + dZ_k - C(t_k) Y_hat(t_k) dt`, `N(0) = 0`.
pub fn innovations(
    model: &LinearModel,
    estimates: &PathGrid,
    observations: &PathGrid,
) -> Result<PathGrid> {
    let grid = observations.grid();
    if estimates.grid() != grid || estimates.dim() != model.state_dim() {
        return Err(Error::Alignment(
            "estimates do not match the observations".into(),
        ));
    }
    let dt = grid.dt();
    let mut incs = Vec::with_capacity(grid.steps() * model.obs_dim());
    for k in 0..grid.steps() {
        let dn =
            observations.increment(k) - model.c(grid.time(k)).as_ref() * estimates.value(k) * dt;
        incs.extend_from_slice(dn.as_slice());
    }
    Ok(PathGrid::from_increments(
        *grid,
        model.obs_dim(),
        observations.seed(),
        incs,
    ))
}

/// `R` with `dR = G dN`.
pub fn normalized_innovations(model: &LinearModel, innovations: &PathGrid) -> Result<PathGrid> {
    let grid = innovations.grid();
    let mut incs = Vec::with_capacity(grid.steps() * model.obs_dim());
    for k in 0..grid.steps() {
        let g = gain_normalizer(model, grid.time(k))?;
        let dr: DVector<f64> = g * innovations.increment(k);
        incs.extend_from_slice(dr.as_slice());
    }
    Ok(PathGrid::from_increments(
        *grid,
        model.obs_dim(),
        innovations.seed(),
        incs,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConvergenceRow {
    pub cutoff: f64,
    /// `E|Y_hat_n(T) - Y_hat(T)|`.
    pub mean_abs_gap: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConvergenceTable {
    pub replicates: usize,
    pub convention: Convention,
    pub rows: Vec<FilterConvergenceRow>,
}

impl FilterConvergenceTable {
    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_abs_gap.value).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cutoff,mean_abs_gap,std_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(r.cutoff),
                fmt_f64(r.mean_abs_gap.value),
                fmt_f64(r.mean_abs_gap.std_error)
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "replicates: {}, convention: {}\n\n| cutoff | mean terminal gap (se) |\n|---|---|\n",
            self.replicates, self.convention
        );
        for r in &self.rows {
            out.push_str(&format!(
                "| {:e} | {:.6e} ({:.2e}) |\n",
                r.cutoff, r.mean_abs_gap.value, r.mean_abs_gap.std_error
            ));
        }
        out
    }
}

/// Per replicate, run the standard filter on `Z_n` for every cutoff and the
/// limiting filter on `Z`, all observations sharing one jump stream, and
/// average `|Y_hat_n(T) - Y_hat(T)|`.
pub fn filter_convergence_study(
    model: &LinearModel,
    cutoffs: &[f64],
    grid: &TimeGrid,
    replicates: usize,
    root_seed: u64,
    convention: Convention,
) -> Result<FilterConvergenceTable> {
    check_ladder(cutoffs, replicates)?;
    let phi = phi_limit(model, cutoffs, convention, grid)?;
    let (limit_gains, _) = FilterGains::solve(model, &phi, FilterVariant::Limiting)?;
    let standard: Vec<FilterGains> = cutoffs
        .par_iter()
        .map(|&n| {
            let cutoff = Cutoff::Finite(n);
            let norm = NoiseNormalization::standard(model, cutoff, convention, grid)?;
            Ok(FilterGains::solve(model, &norm, FilterVariant::Standard { cutoff })?.0)
        })
        .collect::<Result<_>>()?;
    let mut all = vec![Cutoff::Infinite];
    all.extend(cutoffs.iter().map(|&n| Cutoff::Finite(n)));
    let gaps: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let seed = replicate_seed(root_seed, r as u64);
            let y = simulate_system(model, grid, seed)?;
            let zs = simulate_observations_coupled(model, &y, &all, seed)?;
            let limit = run_with_gains(model, &zs[0], &limit_gains)?;
            standard
                .iter()
                .zip(&zs[1..])
                .map(|(gains, z)| {
                    let run = run_with_gains(model, z, gains)?;
                    Ok((run.estimates().terminal() - limit.estimates().terminal()).norm())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows = cutoffs
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let column: Vec<f64> = gaps.iter().map(|g| g[i]).collect();
            FilterConvergenceRow {
                cutoff: n,
                mean_abs_gap: mean_estimate(&column),
            }
        })
        .collect();
    Ok(FilterConvergenceTable {
        replicates,
        convention,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{JumpComponentSpec, JumpLaw, LevyModel};
    use crate::system::{simulate_observation, LinearModelSpec};
    use proptest::prelude::*;

    fn bm(v: f64) -> LevyModel {
        LevyModel::brownian(DMatrix::from_element(1, 1, v)).unwrap()
    }

    fn stable() -> LevyModel {
        LevyModel::new(
            DMatrix::zeros(1, 1),
            vec![JumpComponentSpec::stable(0, 1.5, 1.0)],
        )
        .unwrap()
    }

    fn ou(obs: LevyModel, mu0: f64) -> LinearModel {
        let mut spec = LinearModelSpec::scalar(-1.0, 1.0, 1.0, 1.0, bm(1.0), obs);
        spec.initial_mean = DVector::from_element(1, mu0);
        LinearModel::new(spec).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::new(0.0, 5.0, 0.01).unwrap()
    }

    #[test]
    fn degenerate_from_zero_stays_zero() {
        let m = ou(stable(), 0.0);
        let g = grid();
        let y = simulate_system(&m, &g, 1).unwrap();
        let z = simulate_observation(&m, &y, Cutoff::Infinite, 1).unwrap();
        let run = run_with_gains(&m, &z, &FilterGains::degenerate(&m, &g)).unwrap();
        assert!(run.estimates().values_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn degenerate_decays_exponentially() {
        let err = |dt: f64| {
            let m = ou(stable(), 1.0);
            let g = TimeGrid::new(0.0, 1.0, dt).unwrap();
            let z = PathGrid::from_increments(g, 1, 0, vec![0.0; g.steps()]);
            let run = run_with_gains(&m, &z, &FilterGains::degenerate(&m, &g)).unwrap();
            (0..g.len())
                .map(|k| (run.estimates().value(k)[0] - (-g.time(k)).exp()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.01) / err(0.005);
        assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn degenerate_ignores_observations() {
        let m = ou(stable(), 0.7);
        let g = grid();
        let gains = FilterGains::degenerate(&m, &g);
        let y = simulate_system(&m, &g, 3).unwrap();
        let a = run_with_gains(
            &m,
            &simulate_observation(&m, &y, Cutoff::Infinite, 3).unwrap(),
            &gains,
        )
        .unwrap();
        let b = run_with_gains(
            &m,
            &simulate_observation(&m, &y, Cutoff::Infinite, 4).unwrap(),
            &gains,
        )
        .unwrap();
        assert_eq!(a.estimates().values_flat(), b.estimates().values_flat());
    }

    #[test]
    fn limiting_with_zero_phi_equals_degenerate() {
        let m = ou(stable(), 0.7);
        let g = grid();
        let phi = phi_limit(&m, &[10.0, 100.0], Convention::Rate, &g).unwrap();
        let (gains, _) = FilterGains::solve(&m, &phi, FilterVariant::Limiting).unwrap();
        let y = simulate_system(&m, &g, 5).unwrap();
        let z = simulate_observation(&m, &y, Cutoff::Infinite, 5).unwrap();
        let lim = run_with_gains(&m, &z, &gains).unwrap();
        let deg = run_with_gains(&m, &z, &FilterGains::degenerate(&m, &g)).unwrap();
        assert_eq!(lim.estimates().values_flat(), deg.estimates().values_flat());
    }

    #[test]
    fn no_observation_coupling_gives_raw_innovations() {
        let mut spec = LinearModelSpec::scalar(-1.0, 1.0, 0.0, 1.0, bm(1.0), bm(1.0));
        spec.initial_mean = DVector::from_element(1, 2.0);
        let m = LinearModel::new(spec).unwrap();
        let g = grid();
        let y = simulate_system(&m, &g, 6).unwrap();
        let z = simulate_observation(&m, &y, Cutoff::Infinite, 6).unwrap();
        let norm =
            NoiseNormalization::standard(&m, Cutoff::Infinite, Convention::Rate, &g).unwrap();
        let (gains, _) = FilterGains::solve(
            &m,
            &norm,
            FilterVariant::Standard {
                cutoff: Cutoff::Infinite,
            },
        )
        .unwrap();
        let run = run_with_gains(&m, &z, &gains).unwrap();
        assert_eq!(run.innovations().values_flat(), z.values_flat());
    }

    #[test]
    fn true_state_without_noise_has_zero_innovations() {
        let m = LinearModel::new(LinearModelSpec::scalar(
            -1.0,
            1.0,
            1.0,
            0.0,
            bm(1.0),
            bm(1.0),
        ))
        .unwrap();
        let g = grid();
        let y = simulate_system(&m, &g, 7).unwrap();
        let z = simulate_observation(&m, &y, Cutoff::Infinite, 7).unwrap();
        let n = innovations(&m, &y, &z).unwrap();
        assert!(n.values_flat().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gains_recompute_from_solution() {
        let m = ou(bm(1.0), 0.0);
        let g = grid();
        let norm =
            NoiseNormalization::standard(&m, Cutoff::Infinite, Convention::Cumulative, &g).unwrap();
        let (gains, s) = FilterGains::solve(
            &m,
            &norm,
            FilterVariant::Standard {
                cutoff: Cutoff::Infinite,
            },
        )
        .unwrap();
        for k in [0, 1, 7, g.steps()] {
            let t = g.time(k);
            let gk = gain_normalizer(&m, t).unwrap();
            let expect = s.value(k) * m.c(t).transpose() * gk.transpose() * norm.xi_at(k) * &gk;
            assert_eq!(gains.gains()[k], expect);
        }
    }

    #[test]
    fn variant_must_match_riccati() {
        let m = ou(bm(1.0), 0.0);
        let g = grid();
        let z = NoiseNormalization::zero(&m, &g);
        let s = solve_riccati(&m, &z, RiccatiVariant::Degenerate, &g).unwrap();
        assert!(matches!(
            FilterGains::new(&m, &s, &z, FilterVariant::Limiting),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn bounded_jumps_above_support_have_zero_gap() {
        let noise = LevyModel::new(
            DMatrix::from_element(1, 1, 0.5),
            vec![JumpComponentSpec::compound_poisson(
                0,
                3.0,
                JumpLaw::Uniform { half_width: 1.0 },
            )],
        )
        .unwrap();
        let m = ou(noise, 0.0);
        let g = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
        let t = filter_convergence_study(&m, &[2.0, 4.0], &g, 100, 11, Convention::Rate).unwrap();
        assert!(t.rows.iter().all(|r| r.mean_abs_gap.value == 0.0));
    }

    #[test]
    fn stable_study_gap_decreases() {
        let m = ou(stable(), 0.0);
        let g = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
        let t = filter_convergence_study(&m, &[1.0, 10.0, 100.0], &g, 200, 12, Convention::Rate)
            .unwrap();
        let gaps = t.gaps();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn filter_is_affine_in_data(seed_a in 0u64..1000, seed_b in 0u64..1000, mu_a in -2.0..2.0f64, mu_b in -2.0..2.0f64) {
            let base = ou(bm(1.0), 0.0);
            let g = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
            let norm = NoiseNormalization::standard(&base, Cutoff::Infinite, Convention::Rate, &g).unwrap();
            let (gains, _) = FilterGains::solve(&base, &norm, FilterVariant::Standard { cutoff: Cutoff::Infinite }).unwrap();
            let y = simulate_system(&base, &g, seed_a).unwrap();
            let za = simulate_observation(&base, &y, Cutoff::Infinite, seed_a).unwrap();
            let zb = simulate_observation(&base, &y, Cutoff::Infinite, seed_b).unwrap();
            let sum: Vec<f64> = za.increments_flat().iter().zip(zb.increments_flat()).map(|(a, b)| a + b).collect();
            let zs = PathGrid::from_increments(g, 1, 0, sum);
            let with = |mu: f64| base.with_initial_mean(DVector::from_element(1, mu)).unwrap();
            let ra = run_with_gains(&with(mu_a), &za, &gains).unwrap();
            let rb = run_with_gains(&with(mu_b), &zb, &gains).unwrap();
            let rs = run_with_gains(&with(mu_a + mu_b), &zs, &gains).unwrap();
            for k in 0..g.len() {
                let lhs = rs.estimates().value(k)[0];
                let rhs = ra.estimates().value(k)[0] + rb.estimates().value(k)[0];
                prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn csv_headers() {
        let m = ou(bm(1.0), 0.0);
        let g = TimeGrid::new(0.0, 0.02, 0.01).unwrap();
        let z = PathGrid::from_increments(g, 1, 0, vec![0.0; 2]);
        let run = run_with_gains(&m, &z, &FilterGains::degenerate(&m, &g)).unwrap();
        assert!(run.to_csv(false).starts_with("t,yhat_1,n_1\n"));
        assert!(run.to_csv(true).starts_with("t,yhat_1,n_1,k_11\n"));
        assert_eq!(run.to_csv(true).lines().count(), 4);
    }
}
