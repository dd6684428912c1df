//! Conditional splitting of subordinator increments.
//!
//! Given the increment `C` over `n` grid steps, draws the increment over the
//! first `n/2` steps from its exact conditional law. Exponential tempering
//! cancels in the conditional law, so tempered stable increments split like
//! stable ones, which needs the positive stable density.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_kronrod, Tolerance};

/// Log-density below which the left tail is treated as zero.
const LN_FLOOR: f64 = -690.0;
/// Table spacing in `ln x`.
const LN_STEP: f64 = 0.004;
/// Right end of the table in `ln x`; beyond it only the leading tail term is kept.
const LN_TAIL: f64 = 60.0;
/// Envelope inflation in log units, covering interpolation error.
const ENVELOPE_SLACK: f64 = 1e-3;
const UNIFORM_CELLS: usize = 32;
const GEOMETRIC_WIDTH: f64 = 0.25;
const GEOMETRIC_CELLS: usize = 32;
const MAX_ATTEMPTS: usize = 1_000_000;

/// `A(u)` of Kanter's representation `S = (A(U)/W)^{(1-β)/β}`, in logs.
fn ln_kanter(beta: f64, u: f64) -> f64 {
    let alpha = beta / (1.0 - beta);
    alpha * (beta * u).sin().ln() + ((1.0 - beta) * u).sin().ln() - u.sin().ln() / (1.0 - beta)
}

/// Density of the positive stable law with Laplace transform `exp(-s^β)`,
/// tabulated in `ln x` from its integral form and, on the right, its convergent series.
#[derive(Debug)]
pub struct StableDensity {
    beta: f64,
    ln_lo: f64,
    ln_hi: f64,
    ln_g: Vec<f64>,
    mode: f64,
}

impl StableDensity {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("stable density needs beta in (0, 1), got {beta}")));
        }
        let alpha = beta / (1.0 - beta);
        let a0 = (1.0 - beta) * beta.powf(alpha);
        let ln_lo = ((a0 / -LN_FLOOR).ln()) / alpha;
        let ln_series = 4f64.ln() / beta;
        let n = ((LN_TAIL - ln_lo) / LN_STEP).ceil() as usize + 1;
        let ln_g = (0..n)
            .map(|i| {
                let v = ln_lo + i as f64 * LN_STEP;
                if v < ln_series {
                    ln_density_integral(beta, v.exp())
                } else {
                    Ok(ln_density_series(beta, v.exp()))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let peak = ln_g.iter().enumerate().fold((0, f64::NEG_INFINITY), |m, (i, &v)| if v > m.1 { (i, v) } else { m });
        let mode = (ln_lo + peak.0 as f64 * LN_STEP).exp();
        Ok(Self { beta, ln_lo, ln_hi: ln_lo + (n - 1) as f64 * LN_STEP, ln_g, mode })
    }

    /// Shared table for `beta`, built on first use.
    pub fn cached(beta: f64) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<StableDensity>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(d) = cache.lock().expect("density cache").get(&beta.to_bits()) {
            return Ok(d.clone());
        }
        let d = Arc::new(Self::new(beta)?);
        cache.lock().expect("density cache").insert(beta.to_bits(), d.clone());
        Ok(d)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mode(&self) -> f64 {
        self.mode
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        let v = x.ln();
        if v < self.ln_lo {
            return f64::NEG_INFINITY;
        }
        if v >= self.ln_hi {
            let b = self.beta;
            return ln_gamma(b + 1.0) + (PI * b).sin().ln() - PI.ln() - (b + 1.0) * v;
        }
        // four-point Lagrange interpolation in ln x
        let last = self.ln_g.len() - 1;
        let pos = (v - self.ln_lo) / LN_STEP;
        let i = (pos.floor() as usize).clamp(1, last.saturating_sub(2).max(1));
        let f = pos - i as f64;
        let y = |k: usize| self.ln_g[k.min(last)];
        let (ym, y0, y1, y2) = (y(i - 1), y(i), y(i + 1), y(i + 2));
        ym * (-f * (f - 1.0) * (f - 2.0) / 6.0)
            + y0 * ((f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0)
            + y1 * (-(f + 1.0) * f * (f - 2.0) / 2.0)
            + y2 * ((f + 1.0) * f * (f - 1.0) / 6.0)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// `ln max g` over `[a, b]`, using unimodality.
    fn ln_max_on(&self, a: f64, b: f64) -> f64 {
        self.ln_pdf(self.mode.clamp(a, b))
    }
}

fn ln_density_integral(beta: f64, x: f64) -> Result<f64> {
    let alpha = beta / (1.0 - beta);
    let k = x.powf(-alpha);
    let a0 = (1.0 - beta) * beta.powf(alpha);
    // ∫ A(u) exp(-k (A(u) - A(0))) du, kept away from underflow
    let j = gauss_kronrod(
        |u| {
            let ln_a = ln_kanter(beta, u);
            let a = ln_a.exp();
            if !a.is_finite() {
                return 0.0;
            }
            (ln_a - k * (a - a0)).exp()
        },
        0.0,
        PI,
        Tolerance::new(1e-300, 1e-11),
    )?
    .value;
    Ok((alpha / PI).ln() - (alpha + 1.0) * x.ln() - k * a0 + j.ln())
}

fn ln_density_series(beta: f64, x: f64) -> f64 {
    let lx = x.ln();
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let s = (kf * PI * beta).sin();
        let mag = ln_gamma(kf * beta + 1.0) - ln_gamma(kf + 1.0) - (kf * beta + 1.0) * lx;
        let term = if k % 2 == 1 { 1.0 } else { -1.0 } * s * mag.exp();
        sum += term;
        if mag.exp() < 1e-17 * sum.abs() {
            break;
        }
    }
    (sum / PI).ln()
}

/// Splits increments of one subordinator family.
#[derive(Debug, Clone)]
pub enum Splitter {
    /// Stable and tempered stable: `step` is the grid step, halves have scale `(n step / 2)^{1/β}`.
    Stable { density: Arc<StableDensity>, step: f64 },
    /// Gamma with shape `shape_per_step` per grid step: the left share is `Beta(a, a)`.
    Gamma { shape_per_step: f64 },
}

impl Splitter {
    /// Increment over the first `n/2` of `n` steps, given the increment `total` over all `n`.
    pub fn split<R: Rng + ?Sized>(&self, n: usize, total: f64, rng: &mut R) -> Result<f64> {
        let left = match self {
            Splitter::Gamma { shape_per_step } => {
                let a = 0.5 * n as f64 * shape_per_step;
                let b = Beta::new(a, a).map_err(|e| Error::InvalidParameter(format!("gamma bridge: {e}")))?;
                total * b.sample(rng)
            }
            Splitter::Stable { density, step } => {
                let sigma = (0.5 * n as f64 * step).powf(1.0 / density.beta);
                sigma * split_stable(density, total / sigma, rng)?
            }
        };
        Ok(left.clamp(0.0, total))
    }
}

/// Draws `y` from the density proportional to `g(y) g(c - y)` on `(0, c)`.
fn split_stable<R: Rng + ?Sized>(g: &StableDensity, c: f64, rng: &mut R) -> Result<f64> {
    let half = 0.5 * c;
    let mut edges: Vec<f64> = (0..=UNIFORM_CELLS).map(|i| half * i as f64 / UNIFORM_CELLS as f64).collect();
    let lo = g.ln_lo.exp();
    if lo < half {
        let span = (half / lo).ln();
        let count = GEOMETRIC_CELLS.max((span / GEOMETRIC_WIDTH).ceil() as usize);
        let ratio = span / count as f64;
        edges.extend((0..count).map(|i| lo * (ratio * i as f64).exp()));
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let cells = edges.len() - 1;
    let mut ln_env = Vec::with_capacity(cells);
    for w in edges.windows(2) {
        ln_env.push(g.ln_max_on(w[0], w[1]) + g.ln_max_on(c - w[1], c - w[0]) + ENVELOPE_SLACK);
    }
    let top = ln_env.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Ok(half);
    }
    let mut cumulative = Vec::with_capacity(cells);
    let mut acc = 0.0;
    for (i, w) in edges.windows(2).enumerate() {
        acc += (ln_env[i] - top).exp() * (w[1] - w[0]);
        cumulative.push(acc);
    }
    for _ in 0..MAX_ATTEMPTS {
        let pick = rng.random::<f64>() * acc;
        let i = cumulative.partition_point(|&v| v <= pick).min(cells - 1);
        let y = edges[i] + rng.random::<f64>() * (edges[i + 1] - edges[i]);
        let e: f64 = rng.sample(Exp1);
        if ln_env[i] - e < g.ln_pdf(y) + g.ln_pdf(c - y) {
            return Ok(if rng.random::<bool>() { c - y } else { y });
        }
    }
    Err(Error::Resource(format!("stable bridge rejection did not accept at c = {c}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subordinators::sample_stable_increment;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn half_order_closed_form() {
        let g = StableDensity::new(0.5).unwrap();
        for x in [0.02_f64, 0.1, 0.5, 1.0, 3.0, 10.0, 100.0] {
            let exact = x.powf(-1.5) * (-0.25 / x).exp() / (2.0 * PI.sqrt());
            assert!((g.pdf(x) / exact - 1.0).abs() < 1e-7, "{x}: {} vs {exact}", g.pdf(x));
        }
        assert!((g.mode() - 1.0 / 6.0).abs() < 1e-3);
    }

    #[test]
    fn laplace_transform_of_density() {
        for beta in [0.3, 0.7, 0.9] {
            let g = StableDensity::new(beta).unwrap();
            // ∫ e^{-x} g(x) dx over x = e^v
            let lt = gauss_kronrod(|v| (v - v.exp()).exp() * g.pdf(v.exp()), g.ln_lo, 8.0, Tolerance::relative(1e-10))
                .unwrap()
                .value;
            assert!((lt - (-1.0f64).exp()).abs() < 1e-7, "{beta}: {lt}");
        }
    }

    #[test]
    fn series_joins_table() {
        for beta in [0.3, 0.6, 0.9] {
            let x = (4f64.ln() / beta).exp();
            let a = ln_density_integral(beta, x).unwrap();
            let b = ln_density_series(beta, x);
            assert!((a - b).abs() < 1e-9, "{beta}: {a} vs {b}");
        }
    }

    #[test]
    fn split_preserves_joint_law() {
        // (left, total - left) from a split must be independent with the half-step law
        let beta = 0.7;
        let step = 0.01;
        let splitter = Splitter::Stable { density: StableDensity::cached(beta).unwrap(), step };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50_000;
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let total = sample_stable_increment(beta, 2.0 * step, &mut rng);
            let left = splitter.split(2, total, &mut rng).unwrap();
            let right = total - left;
            a.push((-left).exp());
            b.push((-right * 3.0).exp());
            c.push((-left - 2.0 * right).exp());
        }
        let check = |xs: &[f64], expected: f64| {
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
            let z = (m - expected) / (v / n as f64).sqrt();
            assert!(z.abs() < 4.0, "z = {z}");
        };
        check(&a, (-step).exp());
        check(&b, (-step * 3f64.powf(beta)).exp());
        check(&c, (-step * (1.0 + 2f64.powf(beta))).exp());
    }

    #[test]
    fn gamma_split_is_beta() {
        let s = Splitter::Gamma { shape_per_step: 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let mean = (0..n).map(|_| s.split(4, 2.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.03);
    }
}
