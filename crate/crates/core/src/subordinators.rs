//! Simulation of subordinators on a regular grid and of their first-passage
//! (inverse) times on an external time grid.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, InverseGaussian, Open01, Poisson};

use crate::bernstein::BernsteinSpec;
use crate::bridge::{Splitter, StableDensity};
use crate::error::{Error, Result};

/// Default cap on grid steps for a single path.
pub const MAX_STEPS: usize = 100_000_000;

/// Smallest acceptance rate tolerated by the tempered stable rejection sampler.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

/// Positive β-stable variate with Laplace transform `exp(-dt s^β)` (Kanter's representation).
pub fn sample_stable_increment<R: Rng + ?Sized>(beta: f64, dt: f64, rng: &mut R) -> f64 {
    dt.powf(1.0 / beta) * unit_stable(beta, rng)
}

#[inline]
fn unit_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u = PI * rng.sample::<f64, _>(Open01);
    let w: f64 = rng.sample(Exp1);
    let (sb, cb) = (beta * u).sin_cos();
    let (su, cu) = u.sin_cos();
    // sin((1 - β) u)
    let s1b = su * cb - cu * sb;
    let ln_z = (sb * w / s1b).ln() + (s1b / (w * su)).ln() / beta;
    ln_z.exp()
}

/// Tempered stable increment with Laplace transform `exp(-dt((s + ν)^β - ν^β))`,
/// by rejection from the stable law with acceptance probability `e^{-ν S}`.
pub fn sample_tss_increment<R: Rng + ?Sized>(beta: f64, nu: f64, dt: f64, rng: &mut R) -> Result<f64> {
    let acceptance = (-dt * nu.powf(beta)).exp();
    if acceptance < MIN_ACCEPTANCE {
        return Err(step_size_error(acceptance, dt));
    }
    Ok(tss_draw(beta, nu, dt.powf(1.0 / beta), rng))
}

fn step_size_error(acceptance: f64, dt: f64) -> Error {
    Error::StepSize(format!("tempered stable acceptance rate {acceptance:e} at dt = {dt}; shrink dt"))
}

#[inline]
fn tss_draw<R: Rng + ?Sized>(beta: f64, nu: f64, scale: f64, rng: &mut R) -> f64 {
    if nu == 0.0 {
        return scale * unit_stable(beta, rng);
    }
    loop {
        let s = scale * unit_stable(beta, rng);
        let e: f64 = rng.sample(Exp1);
        if e > nu * s {
            return s;
        }
    }
}

/// Law of one grid increment of a subordinator.
#[derive(Debug, Clone)]
pub enum IncrementLaw {
    TemperedStable { beta: f64, nu: f64, scale: f64 },
    Gamma { law: Gamma<f64>, shape: f64 },
    InverseGaussian(InverseGaussian<f64>),
    /// Drift plus compound Poisson jumps, killed (sent to +∞) with probability `kill_prob`.
    Compound { drift: f64, kill_prob: f64, jumps: Option<Poisson<f64>>, sizes: Vec<f64>, cumulative: Vec<f64> },
}

impl IncrementLaw {
    pub fn tempered_stable(beta: f64, nu: f64, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let acceptance = (-dt * nu.powf(beta)).exp();
        if acceptance < MIN_ACCEPTANCE {
            return Err(step_size_error(acceptance, dt));
        }
        Ok(Self::TemperedStable { beta, nu, scale: dt.powf(1.0 / beta) })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Gamma::new(shape, 1.0 / rate)
            .map(|law| Self::Gamma { law, shape })
            .map_err(|e| Error::InvalidParameter(format!("gamma increment: {e}")))
    }

    pub fn inverse_gaussian(mean: f64, shape: f64) -> Result<Self> {
        InverseGaussian::new(mean, shape)
            .map(Self::InverseGaussian)
            .map_err(|e| Error::InvalidParameter(format!("inverse Gaussian increment: {e}")))
    }

    pub fn compound(kill_rate: f64, drift: f64, atoms: &[(f64, f64)], dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let total: f64 = atoms.iter().map(|&(_, w)| w).sum();
        let jumps = if total > 0.0 {
            Some(Poisson::new(total * dt).map_err(|e| Error::InvalidParameter(format!("jump count: {e}")))?)
        } else {
            None
        };
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|&(_, w)| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Self::Compound {
            drift: drift * dt,
            kill_prob: -(-kill_rate * dt).exp_m1(),
            jumps,
            sizes: atoms.iter().map(|&(x, _)| x).collect(),
            cumulative,
        })
    }

    /// True when every increment is the same constant.
    pub fn deterministic_step(&self) -> Option<f64> {
        match self {
            Self::Compound { drift, kill_prob, jumps: None, .. } if *kill_prob == 0.0 => Some(*drift),
            _ => None,
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::TemperedStable { beta, nu, scale } => tss_draw(*beta, *nu, *scale, rng),
            Self::Gamma { law, .. } => law.sample(rng),
            Self::InverseGaussian(ig) => ig.sample(rng),
            Self::Compound { drift, kill_prob, jumps, sizes, cumulative } => {
                if *kill_prob > 0.0 && rng.random::<f64>() < *kill_prob {
                    return f64::INFINITY;
                }
                let mut inc = *drift;
                if let Some(poisson) = jumps {
                    let count = poisson.sample(rng) as usize;
                    for _ in 0..count {
                        let u: f64 = rng.random();
                        let idx = cumulative.partition_point(|&c| c < u).min(sizes.len() - 1);
                        inc += sizes[idx];
                    }
                }
                inc
            }
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain("increment_law", format!("step must be positive, got {dt}")));
    }
    Ok(())
}

/// `D(0) = 0, D(δ), D(2δ), ...`
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorPath {
    pub step: f64,
    pub values: Vec<f64>,
}

impl SubordinatorPath {
    /// Grid first passage above `t` with the midpoint convention, or `None`
    /// if the stored path never exceeds `t`.
    pub fn first_passage(&self, t: f64) -> Option<f64> {
        let k = self.values.partition_point(|&d| d <= t);
        (k < self.values.len()).then_some((k as f64 - 0.5) * self.step)
    }
}

/// Simulates `D` on the grid `kδ` for `k = 0..=steps`.
pub fn simulate_path<R: Rng + ?Sized>(spec: &BernsteinSpec, step: f64, steps: usize, rng: &mut R) -> Result<SubordinatorPath> {
    let law = spec.function().increment_law(step)?;
    let mut values = Vec::with_capacity(steps + 1);
    let mut d = 0.0;
    values.push(d);
    for _ in 0..steps {
        d += law.sample(rng);
        values.push(d);
    }
    Ok(SubordinatorPath { step, values })
}

/// First-passage samples `E(t_1) <= ... <= E(t_k)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct InverseSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub bias_bound: f64,
}

/// Largest number of grid steps drawn as one block.
pub const MAX_BLOCK: usize = 1024;

/// Block increments that are split back to the grid only where a crossing happens.
#[derive(Debug, Clone)]
struct Blocks {
    size: usize,
    law: IncrementLaw,
    splitter: Splitter,
}

/// Reusable first-passage sampler for one subordinator and grid step.
///
/// Stable, tempered stable and gamma clocks draw the grid path in blocks of
/// up to [`MAX_BLOCK`] steps and descend by exact conditional splitting only
/// into blocks that contain a query time, which gives the same law as
/// stepping every grid point.
#[derive(Debug, Clone)]
pub struct InverseSampler {
    law: IncrementLaw,
    blocks: Option<Blocks>,
    step: f64,
    max_steps: usize,
}

impl InverseSampler {
    pub fn new(spec: &BernsteinSpec, step: f64) -> Result<Self> {
        let f = spec.function();
        let law = f.increment_law(step)?;
        let blocks = match &law {
            IncrementLaw::TemperedStable { beta, nu, .. } => {
                // keep the block acceptance rate of the tempered sampler above 90%
                let mut size = MAX_BLOCK;
                while size > 1 && size as f64 * step * nu.powf(*beta) > 0.1 {
                    size /= 2;
                }
                let density = StableDensity::cached(*beta)?;
                Some((size, Splitter::Stable { density, step }))
            }
            IncrementLaw::Gamma { shape, .. } => Some((MAX_BLOCK, Splitter::Gamma { shape_per_step: *shape })),
            _ => None,
        };
        let blocks = match blocks {
            Some((size, splitter)) if size > 1 => {
                Some(Blocks { size, law: f.increment_law(size as f64 * step)?, splitter })
            }
            _ => None,
        };
        Ok(Self { law, blocks, step, max_steps: MAX_STEPS })
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    /// Steps every grid point, for checking the block sampler.
    pub fn without_blocks(mut self) -> Self {
        self.blocks = None;
        self
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Writes `E(times[j])` into `out[j]`; `times` must be ascending.
    pub fn sample_into<R: Rng + ?Sized>(&self, times: &[f64], out: &mut [f64], rng: &mut R) -> Result<()> {
        debug_assert_eq!(times.len(), out.len());
        let delta = self.step;
        if let Some(inc) = self.law.deterministic_step() {
            for (t, e) in times.iter().zip(out.iter_mut()) {
                let k = (t / inc).floor() + 1.0;
                if k > self.max_steps as f64 {
                    return Err(self.exhausted(*t));
                }
                *e = (k - 0.5) * delta;
            }
            return Ok(());
        }
        if let Some(blocks) = &self.blocks {
            return self.sample_blocks(blocks, times, out, rng);
        }
        let mut d = 0.0;
        let mut k = 0usize;
        for (t, e) in times.iter().zip(out.iter_mut()) {
            while d <= *t {
                if k >= self.max_steps {
                    return Err(self.exhausted(*t));
                }
                d += self.law.sample(rng);
                k += 1;
            }
            *e = (k as f64 - 0.5) * delta;
        }
        Ok(())
    }

    fn sample_blocks<R: Rng + ?Sized>(&self, blocks: &Blocks, times: &[f64], out: &mut [f64], rng: &mut R) -> Result<()> {
        let mut d = 0.0;
        let mut k = 0usize;
        let mut j = 0;
        while j < times.len() {
            if k >= self.max_steps {
                return Err(self.exhausted(times[j]));
            }
            let c = blocks.law.sample(rng);
            let end = d + c;
            let hit = j + times[j..].partition_point(|t| *t < end);
            if hit > j {
                self.resolve(blocks, blocks.size, k, d, c, &times[j..hit], &mut out[j..hit], rng)?;
                j = hit;
            }
            d = end;
            k += blocks.size;
        }
        Ok(())
    }

    /// Locates the crossings of `times` inside a node of `n` steps starting at step `k0` and level `d0`.
    #[allow(clippy::too_many_arguments)]
    fn resolve<R: Rng + ?Sized>(
        &self,
        blocks: &Blocks,
        n: usize,
        k0: usize,
        d0: f64,
        total: f64,
        times: &[f64],
        out: &mut [f64],
        rng: &mut R,
    ) -> Result<()> {
        if times.is_empty() {
            return Ok(());
        }
        if n == 1 {
            out.fill((k0 as f64 + 0.5) * self.step);
            return Ok(());
        }
        let left = blocks.splitter.split(n, total, rng)?;
        let mid = d0 + left;
        let p = times.partition_point(|t| *t < mid);
        let (t_left, t_right) = times.split_at(p);
        let (o_left, o_right) = out.split_at_mut(p);
        self.resolve(blocks, n / 2, k0, d0, left, t_left, o_left, rng)?;
        self.resolve(blocks, n / 2, k0 + n / 2, mid, total - left, t_right, o_right, rng)
    }

    fn exhausted(&self, t: f64) -> Error {
        Error::Resource(format!("first passage above {t} needs more than {} steps of size {}", self.max_steps, self.step))
    }

    pub fn sample<R: Rng + ?Sized>(&self, times: &[f64], rng: &mut R) -> Result<InverseSample> {
        check_times(times)?;
        let mut values = vec![0.0; times.len()];
        self.sample_into(times, &mut values, rng)?;
        Ok(InverseSample { times: times.to_vec(), values, bias_bound: self.step })
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Empty("time grid"));
    }
    if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::domain("time grid", "times must be positive and finite"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("time grid", "times must be ascending"));
    }
    Ok(())
}

/// `E(t) = inf{r : D(r) > t}` on `times`, with grid step `step`.
pub fn sample_inverse_on_grid<R: Rng + ?Sized>(
    spec: &BernsteinSpec,
    times: &[f64],
    step: f64,
    rng: &mut R,
) -> Result<InverseSample> {
    InverseSampler::new(spec, step)?.sample(times, rng)
}
