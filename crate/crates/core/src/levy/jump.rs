//! One-dimensional jump measures living on a coordinate axis, and the
//! truncated moment integrals the filter construction needs.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Jump-size truncation level. `Infinite` keeps every jump.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Cutoff {
    Finite(f64),
    Infinite,
}

impl Cutoff {
    pub fn finite(self) -> Option<f64> {
        match self {
            Cutoff::Finite(n) => Some(n),
            Cutoff::Infinite => None,
        }
    }

    pub fn keeps(self, jump: f64) -> bool {
        match self {
            Cutoff::Finite(n) => jump.abs() <= n,
            Cutoff::Infinite => true,
        }
    }

    pub(crate) fn validate(self) -> Result<()> {
        match self {
            Cutoff::Finite(n) if !(n > 0.0) || n.is_nan() => {
                Err(Error::Domain(format!("cutoff must be positive, got {n}")))
            }
            _ => Ok(()),
        }
    }
}

impl From<f64> for Cutoff {
    fn from(n: f64) -> Self {
        if n.is_infinite() {
            Cutoff::Infinite
        } else {
            Cutoff::Finite(n)
        }
    }
}

/// Density constant `c` of the symmetric stable Levy measure `c |y|^{-1-alpha} dy`
/// normalized so that `int (1 - cos(u y)) nu(dy) = |u|^alpha`, i.e. the process
/// has characteristic function `exp(-t |u|^alpha)`.
pub fn stable_density_constant(alpha: f64) -> f64 {
    gamma(1.0 + alpha) * (PI * alpha / 2.0).sin() / PI
}

/// Symmetric jump-size law of a compound Poisson component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpLaw {
    /// `+size` or `-size` with equal probability.
    TwoPoint {
        size: f64,
    },
    Uniform {
        half_width: f64,
    },
    Gaussian {
        std_dev: f64,
    },
    Laplace {
        scale: f64,
    },
    /// `|J|` Pareto with density `tail_index * min^tail_index / r^(tail_index + 1)` on
    /// `r >= min`, random sign. Finite mean needs `tail_index > 1`; the variance is
    /// infinite for `tail_index <= 2`.
    Pareto {
        tail_index: f64,
        min_size: f64,
    },
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl JumpLaw {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            JumpLaw::TwoPoint { size } => size > 0.0 && size.is_finite(),
            JumpLaw::Uniform { half_width } => half_width > 0.0 && half_width.is_finite(),
            JumpLaw::Gaussian { std_dev } => std_dev > 0.0 && std_dev.is_finite(),
            JumpLaw::Laplace { scale } => scale > 0.0 && scale.is_finite(),
            JumpLaw::Pareto {
                tail_index,
                min_size,
            } => {
                if tail_index <= 1.0 {
                    return Err(Error::Regime(format!(
                        "Pareto jump law with tail index {tail_index} has no finite mean"
                    )));
                }
                min_size > 0.0 && min_size.is_finite() && tail_index.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Model(format!(
                "invalid jump law parameters: {self:?}"
            )))
        }
    }

    pub fn has_finite_variance(&self) -> bool {
        !matches!(*self, JumpLaw::Pareto { tail_index, .. } if tail_index <= 2.0)
    }

    /// `E[J^2 ; |J| <= n]`, `n` possibly infinite.
    pub fn truncated_second_moment(&self, n: f64) -> f64 {
        match *self {
            JumpLaw::TwoPoint { size } => {
                if size <= n {
                    size * size
                } else {
                    0.0
                }
            }
            JumpLaw::Uniform { half_width: h } => {
                let m = n.min(h);
                m * m * m / (3.0 * h)
            }
            JumpLaw::Gaussian { std_dev: s } => {
                if n.is_infinite() {
                    return s * s;
                }
                let x = n / s;
                s * s * (erf(x * FRAC_1_SQRT_2) - 2.0 * x * std_normal_pdf(x))
            }
            JumpLaw::Laplace { scale: b } => {
                if n.is_infinite() {
                    return 2.0 * b * b;
                }
                2.0 * b * b - (-n / b).exp() * (n * n + 2.0 * b * n + 2.0 * b * b)
            }
            JumpLaw::Pareto {
                tail_index: g,
                min_size: m,
            } => {
                if n < m {
                    return 0.0;
                }
                if (g - 2.0).abs() < 1e-12 {
                    2.0 * m * m * (n / m).ln()
                } else if n.is_infinite() {
                    if g > 2.0 {
                        g * m * m / (g - 2.0)
                    } else {
                        f64::INFINITY
                    }
                } else {
                    g * m.powf(g) * (n.powf(2.0 - g) - m.powf(2.0 - g)) / (2.0 - g)
                }
            }
        }
    }

    /// `E[|J| ; |J| > n]`.
    pub fn tail_first_moment(&self, n: f64) -> f64 {
        match *self {
            JumpLaw::TwoPoint { size } => {
                if size > n {
                    size
                } else {
                    0.0
                }
            }
            JumpLaw::Uniform { half_width: h } => {
                if n >= h {
                    0.0
                } else {
                    (h * h - n * n) / (2.0 * h)
                }
            }
            JumpLaw::Gaussian { std_dev: s } => 2.0 * s * std_normal_pdf(n / s),
            JumpLaw::Laplace { scale: b } => (-n / b).exp() * (n + b),
            JumpLaw::Pareto {
                tail_index: g,
                min_size: m,
            } => {
                let r = n.max(m);
                g * m.powf(g) * r.powf(1.0 - g) / (g - 1.0)
            }
        }
    }

    pub(crate) fn sample_magnitude<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use rand_distr::{Distribution, Exp1, StandardNormal};
        match *self {
            JumpLaw::TwoPoint { size } => size,
            JumpLaw::Uniform { half_width } => half_width * rng.random::<f64>(),
            JumpLaw::Gaussian { std_dev } => {
                let z: f64 = StandardNormal.sample(rng);
                std_dev * z.abs()
            }
            JumpLaw::Laplace { scale } => {
                let e: f64 = Exp1.sample(rng);
                scale * e
            }
            JumpLaw::Pareto {
                tail_index,
                min_size,
            } => {
                // 1 - U lies in (0, 1].
                let u = 1.0 - rng.random::<f64>();
                min_size * u.powf(-1.0 / tail_index)
            }
        }
    }
}

/// Kind of one-dimensional jump measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpKind {
    None,
    /// Symmetric alpha-stable jumps with characteristic exponent `|scale * u|^alpha`.
    SymmetricStable {
        alpha: f64,
        scale: f64,
    },
    CompoundPoisson {
        rate: f64,
        law: JumpLaw,
    },
    /// Symmetric measure `f(|y|) dy` with `f` piecewise linear through
    /// `(radii[i], density[i])` and zero outside `[radii[0], radii[last]]`.
    Tabulated {
        radii: Vec<f64>,
        density: Vec<f64>,
    },
}

/// A jump measure concentrated on the span of basis vector `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpComponentSpec {
    pub axis: usize,
    #[serde(flatten)]
    pub kind: JumpKind,
}

impl JumpComponentSpec {
    pub fn new(axis: usize, kind: JumpKind) -> Self {
        JumpComponentSpec { axis, kind }
    }

    pub fn stable(axis: usize, alpha: f64, scale: f64) -> Self {
        Self::new(axis, JumpKind::SymmetricStable { alpha, scale })
    }

    pub fn compound_poisson(axis: usize, rate: f64, law: JumpLaw) -> Self {
        Self::new(axis, JumpKind::CompoundPoisson { rate, law })
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            JumpKind::None => Ok(()),
            JumpKind::SymmetricStable { alpha, scale } => {
                if !(*alpha > 1.0 && *alpha < 2.0) {
                    return Err(Error::Regime(format!(
                        "stable index must lie in (1, 2), got {alpha}"
                    )));
                }
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::Model(format!(
                        "stable scale must be positive, got {scale}"
                    )));
                }
                Ok(())
            }
            JumpKind::CompoundPoisson { rate, law } => {
                if !(*rate > 0.0) || !rate.is_finite() {
                    return Err(Error::Model(format!(
                        "jump rate must be positive, got {rate}"
                    )));
                }
                law.validate()
            }
            JumpKind::Tabulated { radii, density } => {
                if radii.len() != density.len() {
                    return Err(Error::Model(
                        "tabulated radii and density differ in length".into(),
                    ));
                }
                if radii.len() < 2 {
                    return Err(Error::Resolution(
                        "tabulated measure needs at least two radial knots".into(),
                    ));
                }
                if radii[0] < 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Model(
                        "tabulated radii must be nonnegative and strictly increasing".into(),
                    ));
                }
                if density.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
                    return Err(Error::Model(
                        "tabulated density must be finite and nonnegative".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn has_infinite_variance(&self) -> bool {
        match &self.kind {
            JumpKind::SymmetricStable { .. } => true,
            JumpKind::CompoundPoisson { law, .. } => !law.has_finite_variance(),
            JumpKind::None | JumpKind::Tabulated { .. } => false,
        }
    }

    /// `int_{|y| <= cutoff} y^2 nu(dy)`; `+inf` for an untruncated
    /// infinite-variance component.
    pub fn second_moment(&self, cutoff: Cutoff) -> Result<f64> {
        cutoff.validate()?;
        self.validate()?;
        let n = cutoff.finite().unwrap_or(f64::INFINITY);
        Ok(match &self.kind {
            JumpKind::None => 0.0,
            JumpKind::SymmetricStable { alpha, scale } => {
                if n.is_infinite() {
                    f64::INFINITY
                } else {
                    let k = stable_density_constant(*alpha) * scale.powf(*alpha);
                    2.0 * k * n.powf(2.0 - alpha) / (2.0 - alpha)
                }
            }
            JumpKind::CompoundPoisson { rate, law } => rate * law.truncated_second_moment(n),
            JumpKind::Tabulated { radii, density } => {
                2.0 * tabulated_integral(radii, density, 0.0, n, |r| r * r)?
            }
        })
    }

    /// `int_{|y| > cutoff} |y| nu(dy)`.
    pub fn tail_first_moment(&self, cutoff: f64) -> Result<f64> {
        Cutoff::Finite(cutoff).validate()?;
        self.validate()?;
        Ok(match &self.kind {
            JumpKind::None => 0.0,
            JumpKind::SymmetricStable { alpha, scale } => {
                let k = stable_density_constant(*alpha) * scale.powf(*alpha);
                2.0 * k * cutoff.powf(1.0 - alpha) / (alpha - 1.0)
            }
            JumpKind::CompoundPoisson { rate, law } => rate * law.tail_first_moment(cutoff),
            JumpKind::Tabulated { radii, density } => {
                let hi = *radii.last().unwrap();
                if cutoff >= hi {
                    0.0
                } else {
                    2.0 * tabulated_integral(radii, density, cutoff, hi, |r| r)?
                }
            }
        })
    }
}

/// Trapezoidal `int_lo^hi w(r) f(r) dr` over the table knots, with `lo`/`hi`
/// inserted as extra knots (density interpolated linearly).
fn tabulated_integral(
    radii: &[f64],
    density: &[f64],
    lo: f64,
    hi: f64,
    weight: impl Fn(f64) -> f64,
) -> Result<f64> {
    let first = radii[0];
    let last = *radii.last().unwrap();
    let lo = lo.max(first);
    let hi = hi.min(last);
    if hi <= lo {
        return Ok(0.0);
    }
    // An interior cutoff needs at least one full cell below it.
    if hi < last && hi < radii[1] && hi > first {
        return Err(Error::Resolution(format!(
            "cutoff {hi} falls inside the first tabulated cell [{first}, {}]",
            radii[1]
        )));
    }
    let interp = |r: f64| -> f64 {
        let j = radii.partition_point(|&x| x <= r).clamp(1, radii.len() - 1);
        let (r0, r1) = (radii[j - 1], radii[j]);
        let (f0, f1) = (density[j - 1], density[j]);
        f0 + (f1 - f0) * (r - r0) / (r1 - r0)
    };
    let mut knots = vec![lo];
    knots.extend(radii.iter().copied().filter(|&r| r > lo && r < hi));
    knots.push(hi);
    let g = |r: f64| weight(r) * interp(r);
    Ok(knots
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (g(w[0]) + g(w[1])))
        .sum())
}

/// Spec-level entry point: truncated second moment of one component.
pub fn jump_second_moment(spec: &JumpComponentSpec, cutoff: f64) -> Result<f64> {
    spec.second_moment(Cutoff::from(cutoff))
}

/// Spec-level entry point: first absolute moment of the jumps above `cutoff`.
pub fn jump_tail_first_moment(spec: &JumpComponentSpec, cutoff: f64) -> Result<f64> {
    spec.tail_first_moment(cutoff)
}
