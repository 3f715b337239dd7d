use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::jump::{Cutoff, JumpComponentSpec};
use crate::error::{Error, Result};
use crate::linalg;

/// A d-dimensional Levy process given by drift, Gaussian covariance and
/// independent one-dimensional jump measures on the coordinate axes.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    dim: usize,
    drift: DVector<f64>,
    gaussian_cov: DMatrix<f64>,
    components: Vec<JumpComponentSpec>,
}

impl LevyModel {
    pub fn new(gaussian_cov: DMatrix<f64>, components: Vec<JumpComponentSpec>) -> Result<Self> {
        let dim = gaussian_cov.nrows();
        Self::with_drift(DVector::zeros(dim), gaussian_cov, components)
    }

    pub fn with_drift(
        drift: DVector<f64>,
        gaussian_cov: DMatrix<f64>,
        components: Vec<JumpComponentSpec>,
    ) -> Result<Self> {
        let dim = gaussian_cov.nrows();
        if dim == 0 || !gaussian_cov.is_square() {
            return Err(Error::Model(format!(
                "gaussian covariance must be a non-empty square matrix, got {}x{}",
                gaussian_cov.nrows(),
                gaussian_cov.ncols()
            )));
        }
        if drift.len() != dim {
            return Err(Error::Model(format!(
                "drift has length {}, expected {dim}",
                drift.len()
            )));
        }
        if !linalg::is_symmetric(&gaussian_cov, 1e-12) {
            return Err(Error::Model("gaussian covariance is not symmetric".into()));
        }
        if !linalg::is_nonnegative_definite(&gaussian_cov, 1e-10) {
            return Err(Error::Model(
                "gaussian covariance is not nonnegative-definite".into(),
            ));
        }
        for c in &components {
            if c.axis >= dim {
                return Err(Error::Model(format!(
                    "jump component on axis {} but dimension is {dim}",
                    c.axis
                )));
            }
            c.validate()?;
        }
        Ok(LevyModel {
            dim,
            drift,
            gaussian_cov,
            components,
        })
    }

    /// Standard Brownian motion scaled by `cov`.
    pub fn brownian(cov: DMatrix<f64>) -> Result<Self> {
        Self::new(cov, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }

    pub fn gaussian_cov(&self) -> &DMatrix<f64> {
        &self.gaussian_cov
    }

    pub fn components(&self) -> &[JumpComponentSpec] {
        &self.components
    }

    pub fn is_centred(&self) -> bool {
        self.drift.iter().all(|b| *b == 0.0)
    }

    /// Axes carrying a jump component with infinite second moment.
    pub fn infinite_variance_set(&self) -> BTreeSet<usize> {
        self.components
            .iter()
            .filter(|c| c.has_infinite_variance())
            .map(|c| c.axis)
            .collect()
    }

    pub fn is_square_integrable(&self) -> bool {
        self.infinite_variance_set().is_empty()
    }

    /// Every axis has infinite variance.
    pub fn is_fully_infinite_variance(&self) -> bool {
        self.infinite_variance_set().len() == self.dim
    }

    /// Per-axis `int_{|y| <= cutoff} y_i^2 nu(dy)`.
    pub fn jump_second_moments(&self, cutoff: Cutoff) -> Result<DVector<f64>> {
        let mut psi = DVector::zeros(self.dim);
        for c in &self.components {
            psi[c.axis] += c.second_moment(cutoff)?;
        }
        Ok(psi)
    }

    /// Jump covariance `psi` (diagonal by the axis-aligned construction).
    pub fn jump_covariance(&self, cutoff: Cutoff) -> Result<DMatrix<f64>> {
        let psi = self.jump_second_moments(cutoff)?;
        if psi.iter().any(|v| v.is_infinite()) {
            return Err(Error::InfiniteVariance(format!(
                "axes {:?} have infinite second moment; truncate the jumps first",
                self.infinite_variance_set()
            )));
        }
        Ok(DMatrix::from_diagonal(&psi))
    }

    /// `Theta = a + psi`, the covariance per unit time. With a finite cutoff this
    /// is the covariance of the truncated process.
    pub fn covariance_matrix(&self, cutoff: Cutoff) -> Result<DMatrix<f64>> {
        Ok(&self.gaussian_cov + self.jump_covariance(cutoff)?)
    }

    /// `lambda = tr(Theta)`.
    pub fn total_variance(&self, cutoff: Cutoff) -> Result<f64> {
        Ok(self.covariance_matrix(cutoff)?.trace())
    }

    /// `int_{|y| > cutoff} |y| nu(dy)` summed over components.
    pub fn tail_first_moment(&self, cutoff: f64) -> Result<f64> {
        self.components
            .iter()
            .map(|c| c.tail_first_moment(cutoff))
            .sum()
    }

    pub fn truncated(&self, cutoff: f64) -> Result<TruncatedLevyModel> {
        TruncatedLevyModel::new(self.clone(), cutoff)
    }
}

/// A Levy model with every jump larger than `cutoff` removed.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedLevyModel {
    base: LevyModel,
    cutoff: f64,
}

impl TruncatedLevyModel {
    pub fn new(base: LevyModel, cutoff: f64) -> Result<Self> {
        Cutoff::Finite(cutoff).validate()?;
        if cutoff.is_infinite() {
            return Err(Error::Domain("truncation level must be finite".into()));
        }
        Ok(TruncatedLevyModel { base, cutoff })
    }

    pub fn base(&self) -> &LevyModel {
        &self.base
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// `Lambda^(n)`: the covariance of the truncated process.
    pub fn covariance_matrix(&self) -> Result<DMatrix<f64>> {
        self.base.covariance_matrix(Cutoff::Finite(self.cutoff))
    }

    /// Largest truncated second moment among the infinite-variance axes, or
    /// `None` when the base model is square-integrable.
    pub fn beta(&self) -> Result<Option<f64>> {
        let q = self.base.infinite_variance_set();
        if q.is_empty() {
            return Ok(None);
        }
        let psi = self.base.jump_second_moments(Cutoff::Finite(self.cutoff))?;
        Ok(q.iter().map(|&i| psi[i]).reduce(f64::max))
    }
}

/// Covariance of a square-integrable model or of a truncated one.
pub fn covariance_matrix(model: &LevyModel, cutoff: Cutoff) -> Result<DMatrix<f64>> {
    model.covariance_matrix(cutoff)
}

/// Successive-difference threshold for declaring the inverse-covariance ladder converged.
pub const UPSILON_TOLERANCE: f64 = 1e-6;

/// Evidence for `lim (Lambda^(n))^{-1}` along a cutoff ladder.
#[derive(Debug, Clone)]
pub struct UpsilonReport {
    pub cutoffs: Vec<f64>,
    pub iterates: Vec<DMatrix<f64>>,
    /// Max-norm distance between consecutive iterates; one shorter than `iterates`.
    pub successive_diffs: Vec<f64>,
    /// Plain last iterate.
    pub limit: DMatrix<f64>,
    pub converged: bool,
}

impl UpsilonReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| cutoff | inverse covariance (diagonal) | diff to previous |\n|---|---|---|\n",
        );
        for (i, (n, m)) in self.cutoffs.iter().zip(&self.iterates).enumerate() {
            let diag: Vec<String> = m.diagonal().iter().map(|v| format!("{v:.6e}")).collect();
            let diff = if i == 0 {
                "-".to_string()
            } else {
                format!("{:.3e}", self.successive_diffs[i - 1])
            };
            out.push_str(&format!("| {n:e} | {} | {diff} |\n", diag.join(", ")));
        }
        out.push_str(&format!(
            "\nconverged (last difference < {UPSILON_TOLERANCE:e}): {}\n",
            self.converged
        ));
        out
    }
}

/// Invert `Lambda^(n)` along `cutoffs` and report the last iterate as the limit.
pub fn upsilon_infinity(model: &LevyModel, cutoffs: &[f64]) -> Result<UpsilonReport> {
    if cutoffs.len() < 3 {
        return Err(Error::Domain(
            "cutoff ladder needs at least three entries".into(),
        ));
    }
    if cutoffs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(
            "cutoff ladder must be strictly increasing".into(),
        ));
    }
    let mut iterates = Vec::with_capacity(cutoffs.len());
    for &n in cutoffs {
        let lambda = model.covariance_matrix(Cutoff::Finite(n))?;
        let inv = linalg::inverse_spd(&lambda, 0.0).map_err(|_| Error::Singular { cutoff: n })?;
        iterates.push(inv);
    }
    let successive_diffs: Vec<f64> = iterates
        .windows(2)
        .map(|w| linalg::max_abs(&(&w[1] - &w[0])))
        .collect();
    let converged = *successive_diffs.last().unwrap() < UPSILON_TOLERANCE;
    Ok(UpsilonReport {
        cutoffs: cutoffs.to_vec(),
        limit: iterates.last().unwrap().clone(),
        iterates,
        successive_diffs,
        converged,
    })
}

/// The exact limit of `(Lambda^(n))^{-1}`. With axis-aligned jump measures the
/// infinite-variance block of `Lambda^(n)` diverges on its diagonal, so the
/// limit has zero rows and columns there and equals the inverse of the
/// finite-variance block elsewhere.
pub fn structural_upsilon(model: &LevyModel) -> Result<DMatrix<f64>> {
    let q = model.infinite_variance_set();
    let finite: Vec<usize> = (0..model.dim()).filter(|i| !q.contains(i)).collect();
    let mut out = DMatrix::zeros(model.dim(), model.dim());
    if finite.is_empty() {
        return Ok(out);
    }
    let psi = model.jump_second_moments(Cutoff::Infinite)?;
    let block = DMatrix::from_fn(finite.len(), finite.len(), |r, c| {
        let (i, j) = (finite[r], finite[c]);
        model.gaussian_cov()[(i, j)] + if i == j { psi[i] } else { 0.0 }
    });
    let inv = linalg::inverse_spd(&block, 0.0).map_err(|_| Error::Singular {
        cutoff: f64::INFINITY,
    })?;
    for (r, &i) in finite.iter().enumerate() {
        for (c, &j) in finite.iter().enumerate() {
            out[(i, j)] = inv[(r, c)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::jump::JumpLaw;

    fn mixed(q: usize, d: usize, alpha: f64) -> LevyModel {
        let mut a = DMatrix::zeros(d, d);
        for i in q..d {
            a[(i, i)] = 1.0;
        }
        let comps = (0..q)
            .map(|i| JumpComponentSpec::stable(i, alpha, 1.0))
            .collect();
        LevyModel::new(a, comps).unwrap()
    }

    #[test]
    fn brownian_covariance_is_identity() {
        let m = LevyModel::brownian(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(
            m.covariance_matrix(Cutoff::Infinite).unwrap(),
            DMatrix::identity(3, 3)
        );
        assert_eq!(m.total_variance(Cutoff::Infinite).unwrap(), 3.0);
    }

    #[test]
    fn compound_poisson_covariance() {
        let m = LevyModel::new(
            DMatrix::zeros(1, 1),
            vec![JumpComponentSpec::compound_poisson(
                0,
                2.0,
                JumpLaw::TwoPoint { size: 1.0 },
            )],
        )
        .unwrap();
        assert_eq!(m.covariance_matrix(Cutoff::Infinite).unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn untruncated_stable_covariance_fails() {
        let m = mixed(1, 2, 1.5);
        assert!(matches!(
            m.covariance_matrix(Cutoff::Infinite),
            Err(Error::InfiniteVariance(_))
        ));
        assert_eq!(m.infinite_variance_set(), BTreeSet::from([0]));
    }

    #[test]
    fn mixed_example_lambda_is_diagonal() {
        let m = mixed(2, 4, 1.5);
        let t = m.truncated(50.0).unwrap();
        let lam = t.covariance_matrix().unwrap();
        let b = jump_second(&m.components()[0], 50.0);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![b, b, 1.0, 1.0]));
        assert!((lam - expected).abs().max() < 1e-12);
        assert_eq!(t.beta().unwrap(), Some(b));
    }

    fn jump_second(c: &JumpComponentSpec, n: f64) -> f64 {
        c.second_moment(Cutoff::Finite(n)).unwrap()
    }

    #[test]
    fn rejects_axis_out_of_range() {
        let r = LevyModel::new(
            DMatrix::zeros(1, 1),
            vec![JumpComponentSpec::stable(1, 1.5, 1.0)],
        );
        assert!(matches!(r, Err(Error::Model(_))));
    }

    #[test]
    fn rejects_indefinite_gaussian_part() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(LevyModel::brownian(a).is_err());
    }

    #[test]
    fn upsilon_scalar_stable_goes_to_zero() {
        let m = mixed(1, 1, 1.5);
        let r = upsilon_infinity(&m, &[1e2, 1e4, 1e6]).unwrap();
        assert!(r.limit[(0, 0)] < 1e-3);
        assert!(r.successive_diffs.iter().all(|d| *d > 0.0));
        assert_eq!(structural_upsilon(&m).unwrap(), DMatrix::zeros(1, 1));
    }

    #[test]
    fn upsilon_finite_variance_is_constant() {
        let m = LevyModel::new(
            DMatrix::zeros(2, 2),
            vec![
                JumpComponentSpec::compound_poisson(0, 2.0, JumpLaw::TwoPoint { size: 1.0 }),
                JumpComponentSpec::compound_poisson(1, 1.0, JumpLaw::Uniform { half_width: 3.0 }),
            ],
        )
        .unwrap();
        let r = upsilon_infinity(&m, &[5.0, 10.0, 20.0]).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0 / 3.0]));
        for it in &r.iterates {
            assert!((it - &expected).abs().max() < 1e-14);
        }
        assert!(r.converged);
        assert!((structural_upsilon(&m).unwrap() - expected).abs().max() < 1e-14);
    }

    #[test]
    fn singular_ladder_names_cutoff() {
        // No gaussian part and jumps only beyond the first cutoff.
        let m = LevyModel::new(
            DMatrix::zeros(1, 1),
            vec![JumpComponentSpec::compound_poisson(
                0,
                1.0,
                JumpLaw::TwoPoint { size: 3.0 },
            )],
        )
        .unwrap();
        match upsilon_infinity(&m, &[1.0, 5.0, 10.0]) {
            Err(Error::Singular { cutoff }) => assert_eq!(cutoff, 1.0),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn ladder_validation() {
        let m = mixed(1, 1, 1.5);
        assert!(upsilon_infinity(&m, &[1.0, 2.0]).is_err());
        assert!(upsilon_infinity(&m, &[1.0, 3.0, 2.0]).is_err());
    }
}
