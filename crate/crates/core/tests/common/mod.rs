#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use levy_kalman::coeff::{ScalarFunction, TimeMatrixFunction};
use levy_kalman::levy::{JumpComponentSpec, LevyModel};
use levy_kalman::path::{PathGrid, TimeGrid};
use levy_kalman::system::{LinearModel, LinearModelSpec};

pub fn brownian(var: f64) -> LevyModel {
    LevyModel::brownian(DMatrix::from_element(1, 1, var)).unwrap()
}

pub fn stable(alpha: f64) -> LevyModel {
    LevyModel::new(
        DMatrix::zeros(1, 1),
        vec![JumpComponentSpec::stable(0, alpha, 1.0)],
    )
    .unwrap()
}

/// `dY = -Y dt + dV`, `dZ = Y dt + loading dL`, `Y(0) = 0`.
pub fn ou(observation: LevyModel, loading: f64) -> LinearModel {
    LinearModel::new(LinearModelSpec::scalar(
        -1.0,
        1.0,
        1.0,
        loading,
        brownian(1.0),
        observation,
    ))
    .unwrap()
}

pub fn ou_second_moment(t: f64) -> f64 {
    (1.0 - (-2.0 * t).exp()) / 2.0
}

/// Time-averaged `E|Y - 0|^2` over a grid of `steps` intervals on `[0, horizon]`,
/// left-endpoint rule including `t = 0`, i.e. the mean of the per-point values.
pub fn ou_mean_path_mse(dt: f64, steps: usize) -> f64 {
    // Exact for the Euler chain: Var Y_{k+1} = (1 - dt)^2 Var Y_k + dt.
    let mut v = 0.0;
    let mut total = 0.0;
    for _ in 0..=steps {
        total += v;
        v = (1.0 - dt) * (1.0 - dt) * v + dt;
    }
    total / (steps + 1) as f64
}

/// Two-dimensional model with smooth time-varying coefficients and Gaussian noise.
pub fn smooth_2d() -> LinearModel {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.3, -0.8]);
    let spec = LinearModelSpec {
        a: TimeMatrixFunction::scaled(a, ScalarFunction::ExpDecay { rate: 0.2 }),
        b: TimeMatrixFunction::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.7])),
        c: TimeMatrixFunction::scaled(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.4]),
            ScalarFunction::ExpDecay { rate: -0.1 },
        ),
        d: TimeMatrixFunction::constant(DMatrix::from_element(1, 1, 0.8)),
        system_noise: LevyModel::brownian(DMatrix::identity(2, 2)).unwrap(),
        observation_noise: brownian(1.0),
        initial_mean: DVector::from_vec(vec![0.5, -0.2]),
        initial_cov: DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]),
    };
    LinearModel::new(spec).unwrap()
}

/// `e^{At} P0 e^{A't} + int_0^t e^{As} Q e^{A's} ds` by Van Loan's block exponential.
pub fn lyapunov_oracle(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    p0: &DMatrix<f64>,
    t: f64,
) -> DMatrix<f64> {
    let n = a.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a));
    block.view_mut((0, n), (n, n)).copy_from(q);
    block.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = (block * t).exp();
    let f12 = e.view((0, n), (n, n)).into_owned();
    let f22 = e.view((n, n), (n, n)).into_owned();
    let phi = f22.transpose();
    &phi * p0 * phi.transpose() + &phi * f12
}

/// Scalar discrete Kalman filter for `Y_{k+1} = F Y_k + w`, `dZ_k = c dt Y_k + v`,
/// returning the one-step predictions `E[Y_k | dZ_0..dZ_{k-1}]`.
pub fn discrete_kalman(a: f64, b: f64, c: f64, d: f64, dt: f64, increments: &[f64]) -> Vec<f64> {
    let f = (a * dt).exp();
    let q = b * b * ((2.0 * a * dt).exp() - 1.0) / (2.0 * a);
    let h = c * dt;
    let r = d * d * dt;
    let mut x = 0.0;
    let mut p = 0.0;
    let mut out = vec![x];
    for &dz in increments {
        let k = f * p * h / (h * p * h + r);
        x = f * x + k * (dz - h * x);
        p = f * p * f + q - k * h * p * f;
        out.push(x);
    }
    out
}

/// Coarsen a path to every second grid point, summing increments pairwise.
pub fn coarsen(path: &PathGrid) -> PathGrid {
    let g = path.grid();
    let coarse = TimeGrid::with_steps(g.t0(), 2.0 * g.dt(), g.steps() / 2).unwrap();
    let dim = path.dim();
    let mut inc = Vec::with_capacity(coarse.steps() * dim);
    for k in 0..coarse.steps() {
        let a = path.increment(2 * k);
        let b = path.increment(2 * k + 1);
        for i in 0..dim {
            inc.push(a[i] + b[i]);
        }
    }
    PathGrid::from_origin_and_increments(coarse, path.value(0).into_owned(), path.seed(), inc)
}

/// `int_R (1 - cos y) |y|^{-1-alpha} dy` by a series near zero, repeated
/// integration by parts on the oscillatory tail and Simpson's rule.
pub fn stable_exponent_integral(alpha: f64) -> f64 {
    let mut head = 0.0;
    let mut fact = 1.0;
    for k in 1..30 {
        fact *= (2 * k - 1) as f64 * (2 * k) as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        head += sign / fact / (2.0 * k as f64 - alpha);
    }
    let tail = 1.0 / alpha - oscillatory_tail(true, 1.0 + alpha, 6);
    2.0 * (head + tail)
}

fn oscillatory_tail(cosine: bool, s: f64, depth: usize) -> f64 {
    let (s1, c1) = 1f64.sin_cos();
    if depth == 0 {
        let trig = if cosine { f64::cos } else { f64::sin };
        return simpson(|y| trig(y) * y.powf(-s), 1.0, 120.0, 240_000);
    }
    if cosine {
        -s1 + s * oscillatory_tail(false, s + 1.0, depth - 1)
    } else {
        c1 - s * oscillatory_tail(true, s + 1.0, depth - 1)
    }
}

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn max_abs_gap(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
