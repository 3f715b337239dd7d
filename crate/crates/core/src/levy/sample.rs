//! Path samplers.
//!
//! Untruncated stable components are sampled exactly with the
//! Chambers-Mallows-Stuck transform. Truncated models use a layered scheme:
//! jumps above `eps = scale * dt^(1/alpha)` form a compound Poisson stream with
//! Pareto magnitudes, jumps below `eps` are replaced by a Gaussian of matching
//! variance. The jump stream is drawn once, so any number of cutoffs can be
//! applied to the same draw and the resulting paths differ only by the jumps
//! that were removed.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use super::jump::{stable_density_constant, Cutoff, JumpKind, JumpLaw};
use super::model::LevyModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::path::{PathGrid, TimeGrid};
use crate::rng::{rng_from_seed, StreamRng};

/// One standard symmetric alpha-stable draw, characteristic function `exp(-|u|^alpha)`.
pub fn standard_symmetric_stable<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    // V uniform on (-pi/2, pi/2), W standard exponential.
    let v = FRAC_PI_2 * (2.0 * rng.random::<f64>() - 1.0);
    let w: f64 = Exp1.sample(rng);
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn poisson_count<R: Rng + ?Sized>(rng: &mut R, dist: &Option<Poisson<f64>>) -> u64 {
    match dist {
        Some(p) => p.sample(rng) as u64,
        None => 0,
    }
}

/// Piecewise-linear radial density prepared for inverse-CDF sampling.
#[derive(Debug, Clone)]
struct TabulatedSampler {
    radii: Vec<f64>,
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TabulatedSampler {
    fn new(radii: &[f64], density: &[f64]) -> Self {
        let mut cumulative = vec![0.0];
        for i in 0..radii.len() - 1 {
            let mass = 0.5 * (radii[i + 1] - radii[i]) * (density[i] + density[i + 1]);
            cumulative.push(cumulative[i] + mass);
        }
        TabulatedSampler {
            radii: radii.to_vec(),
            density: density.to_vec(),
            cumulative,
        }
    }

    /// Mass of the radial density on one side of the origin.
    fn half_mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let target = rng.random::<f64>() * self.half_mass();
        let cell =
            (self.cumulative.partition_point(|&c| c <= target)).clamp(1, self.radii.len() - 1) - 1;
        let h = self.radii[cell + 1] - self.radii[cell];
        let f0 = self.density[cell];
        let slope = (self.density[cell + 1] - f0) / h;
        let m = target - self.cumulative[cell];
        let x = if slope.abs() < 1e-14 * f0.max(1e-300) {
            m / f0
        } else {
            (-f0 + (f0 * f0 + 2.0 * slope * m).max(0.0).sqrt()) / slope
        };
        self.radii[cell] + x.clamp(0.0, h)
    }
}

#[derive(Debug, Clone)]
enum ComponentSampler {
    Nothing,
    Stable {
        axis: usize,
        alpha: f64,
        scale: f64,
    },
    Poisson {
        axis: usize,
        count: Option<Poisson<f64>>,
        law: JumpLaw,
    },
    Tabulated {
        axis: usize,
        count: Option<Poisson<f64>>,
        table: TabulatedSampler,
    },
}

fn poisson(mean: f64) -> Result<Option<Poisson<f64>>> {
    if mean <= 0.0 {
        return Ok(None);
    }
    Poisson::new(mean)
        .map(Some)
        .map_err(|e| Error::Model(format!("jump intensity {mean}: {e}")))
}

fn component_samplers(model: &LevyModel, dt: f64) -> Result<Vec<ComponentSampler>> {
    model
        .components()
        .iter()
        .map(|c| {
            Ok(match &c.kind {
                JumpKind::None => ComponentSampler::Nothing,
                JumpKind::SymmetricStable { alpha, scale } => ComponentSampler::Stable {
                    axis: c.axis,
                    alpha: *alpha,
                    scale: *scale,
                },
                JumpKind::CompoundPoisson { rate, law } => ComponentSampler::Poisson {
                    axis: c.axis,
                    count: poisson(rate * dt)?,
                    law: law.clone(),
                },
                JumpKind::Tabulated { radii, density } => {
                    let table = TabulatedSampler::new(radii, density);
                    ComponentSampler::Tabulated {
                        axis: c.axis,
                        count: poisson(2.0 * table.half_mass() * dt)?,
                        table,
                    }
                }
            })
        })
        .collect()
}

struct GaussianPart {
    sqrt_cov_dt: DMatrix<f64>,
    drift_dt: DVector<f64>,
}

impl GaussianPart {
    fn new(model: &LevyModel, dt: f64) -> Self {
        GaussianPart {
            sqrt_cov_dt: linalg::psd_sqrt(model.gaussian_cov()) * dt.sqrt(),
            drift_dt: model.drift() * dt,
        }
    }

    /// Always consumes `dim` normals so the stream layout does not depend on `a`.
    fn sample(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let d = out.len();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let w = &self.sqrt_cov_dt * z;
        for i in 0..d {
            out[i] = self.drift_dt[i] + w[i];
        }
    }
}

/// Exact increments of the untruncated model.
fn sample_exact(model: &LevyModel, grid: &TimeGrid, seed: u64) -> Result<PathGrid> {
    let dt = grid.dt();
    let d = model.dim();
    let samplers = component_samplers(model, dt)?;
    let gauss = GaussianPart::new(model, dt);
    let mut rng = rng_from_seed(seed);
    let mut incs = vec![0.0; grid.steps() * d];
    for k in 0..grid.steps() {
        let row = &mut incs[k * d..(k + 1) * d];
        gauss.sample(&mut rng, row);
        for s in &samplers {
            match s {
                ComponentSampler::Nothing => {}
                ComponentSampler::Stable { axis, alpha, scale } => {
                    row[*axis] +=
                        scale * dt.powf(1.0 / alpha) * standard_symmetric_stable(&mut rng, *alpha);
                }
                ComponentSampler::Poisson { axis, count, law } => {
                    for _ in 0..poisson_count(&mut rng, count) {
                        let m = law.sample_magnitude(&mut rng);
                        row[*axis] += random_sign(&mut rng) * m;
                    }
                }
                ComponentSampler::Tabulated { axis, count, table } => {
                    for _ in 0..poisson_count(&mut rng, count) {
                        let m = table.sample(&mut rng);
                        row[*axis] += random_sign(&mut rng) * m;
                    }
                }
            }
        }
    }
    Ok(PathGrid::from_increments(*grid, d, seed, incs))
}

/// A single jump from the layered stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub step: usize,
    pub axis: usize,
    pub size: f64,
}

#[derive(Debug, Clone)]
struct SmallJumpLayer {
    axis: usize,
    alpha: f64,
    density_constant: f64,
    threshold: f64,
    /// One standard normal per step.
    normals: Vec<f64>,
}

impl SmallJumpLayer {
    /// Variance per unit time of the jumps below `min(threshold, cutoff)`.
    fn variance_rate(&self, cutoff: Cutoff) -> f64 {
        let level = cutoff
            .finite()
            .map_or(self.threshold, |n| n.min(self.threshold));
        2.0 * self.density_constant * level.powf(2.0 - self.alpha) / (2.0 - self.alpha)
    }
}

/// One draw of the layered noise, from which paths at any cutoff can be read off.
#[derive(Debug, Clone)]
pub struct LayeredNoise {
    grid: TimeGrid,
    dim: usize,
    seed: u64,
    gaussian: Vec<f64>,
    small_jumps: Vec<SmallJumpLayer>,
    jumps: Vec<Jump>,
}

impl LayeredNoise {
    pub fn sample(model: &LevyModel, grid: &TimeGrid, seed: u64) -> Result<Self> {
        let dt = grid.dt();
        let d = model.dim();
        let samplers = component_samplers(model, dt)?;
        let gauss = GaussianPart::new(model, dt);
        let mut small_jumps = Vec::new();
        let mut large_counts = Vec::new();
        for s in &samplers {
            if let ComponentSampler::Stable { axis, alpha, scale } = s {
                let density_constant = stable_density_constant(*alpha) * scale.powf(*alpha);
                let threshold = scale * dt.powf(1.0 / alpha);
                let mass_above = 2.0 * density_constant * threshold.powf(-alpha) / alpha;
                large_counts.push(poisson(mass_above * dt)?);
                small_jumps.push(SmallJumpLayer {
                    axis: *axis,
                    alpha: *alpha,
                    density_constant,
                    threshold,
                    normals: Vec::with_capacity(grid.steps()),
                });
            }
        }
        let mut rng = rng_from_seed(seed);
        let mut gaussian = vec![0.0; grid.steps() * d];
        let mut jumps = Vec::new();
        for k in 0..grid.steps() {
            gauss.sample(&mut rng, &mut gaussian[k * d..(k + 1) * d]);
            let mut stable_idx = 0;
            for s in &samplers {
                match s {
                    ComponentSampler::Nothing => {}
                    ComponentSampler::Stable { axis, alpha, .. } => {
                        let layer = &mut small_jumps[stable_idx];
                        layer.normals.push(StandardNormal.sample(&mut rng));
                        let threshold = layer.threshold;
                        for _ in 0..poisson_count(&mut rng, &large_counts[stable_idx]) {
                            let u = 1.0 - rng.random::<f64>();
                            let size = threshold * u.powf(-1.0 / alpha);
                            jumps.push(Jump {
                                step: k,
                                axis: *axis,
                                size: random_sign(&mut rng) * size,
                            });
                        }
                        stable_idx += 1;
                    }
                    ComponentSampler::Poisson { axis, count, law } => {
                        for _ in 0..poisson_count(&mut rng, count) {
                            let m = law.sample_magnitude(&mut rng);
                            jumps.push(Jump {
                                step: k,
                                axis: *axis,
                                size: random_sign(&mut rng) * m,
                            });
                        }
                    }
                    ComponentSampler::Tabulated { axis, count, table } => {
                        for _ in 0..poisson_count(&mut rng, count) {
                            let m = table.sample(&mut rng);
                            jumps.push(Jump {
                                step: k,
                                axis: *axis,
                                size: random_sign(&mut rng) * m,
                            });
                        }
                    }
                }
            }
        }
        Ok(LayeredNoise {
            grid: *grid,
            dim: d,
            seed,
            gaussian,
            small_jumps,
            jumps,
        })
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Increments with every jump of magnitude above `cutoff` removed.
    pub fn increments(&self, cutoff: Cutoff) -> Result<PathGrid> {
        cutoff.validate()?;
        let d = self.dim;
        let dt = self.grid.dt();
        let mut incs = self.gaussian.clone();
        for layer in &self.small_jumps {
            let sd = (layer.variance_rate(cutoff) * dt).sqrt();
            for (k, z) in layer.normals.iter().enumerate() {
                incs[k * d + layer.axis] += sd * z;
            }
        }
        for j in self.jumps.iter().filter(|j| cutoff.keeps(j.size)) {
            incs[j.step * d + j.axis] += j.size;
        }
        Ok(PathGrid::from_increments(self.grid, d, self.seed, incs))
    }
}

/// Increments of `model` on `grid`. `Cutoff::Infinite` samples the exact
/// increment law; a finite cutoff samples the truncated model with the layered
/// scheme, so calls with the same seed and different cutoffs are coupled.
pub fn sample_increments(
    model: &LevyModel,
    grid: &TimeGrid,
    seed: u64,
    cutoff: Cutoff,
) -> Result<PathGrid> {
    cutoff.validate()?;
    match cutoff {
        Cutoff::Infinite => sample_exact(model, grid, seed),
        Cutoff::Finite(_) => LayeredNoise::sample(model, grid, seed)?.increments(cutoff),
    }
}
