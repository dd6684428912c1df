//! Prabhakar Mittag-Leffler function, the upper incomplete gamma function and
//! the Laplace transform `Φ_γ(t) = E[exp(-γ E_t)]` of the inverse tempered
//! stable subordinator.

use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::laplace::{gaver_stehfest, talbot, Analytic, DEFAULT_ORDER};
use crate::quadrature::{gauss_kronrod, Tolerance};

/// Largest `|z|` accepted by [`ml3`].
pub const Z_MAX: f64 = 50.0;
/// Term budget for every series in this module.
pub const MAX_TERMS: usize = 2000;
/// Truncation tolerance of [`ml3`], relative to the partial sum.
pub const TOL_ML: f64 = 1e-12;
/// Absolute truncation tolerance of the outer series in [`phi`].
pub const TOL_PHI: f64 = 1e-10;

const CANCELLATION_LIMIT: f64 = 1e4;
/// Contour nodes of the Talbot fallback.
pub const TALBOT_NODES: usize = 32;
const DIRECT_INVERSION_NT: f64 = 30.0;

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Arguments of `M^c_{a,b}(z) = Σ (c)_n z^n / (Γ(a n + b) n!)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLArgs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z: f64,
}

impl MLArgs {
    pub fn new(a: f64, b: f64, c: f64, z: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) || !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Mittag-Leffler parameters must be positive, got a = {a}, b = {b}, c = {c}"
            )));
        }
        if !z.is_finite() {
            return Err(Error::domain("ml3", format!("argument must be finite, got {z}")));
        }
        Ok(Self { a, b, c, z })
    }

    /// Terms of the series, generated by the log-space recurrence.
    pub fn terms(&self) -> MLTerms {
        MLTerms {
            args: *self,
            n: 0,
            log_mag: -ln_gamma(self.b),
            ln_z: self.z.abs().ln(),
            lg_prev: ln_gamma(self.b),
        }
    }

    /// The `n`-th term evaluated directly from log-gamma.
    pub fn direct_term(&self, n: usize) -> f64 {
        let nf = n as f64;
        let MLArgs { a, b, c, z } = *self;
        if n == 0 {
            return 1.0 / statrs::function::gamma::gamma(b);
        }
        if z == 0.0 {
            return 0.0;
        }
        let log_mag = ln_gamma(c + nf) - ln_gamma(c) + nf * z.abs().ln() - ln_gamma(a * nf + b) - ln_gamma(nf + 1.0);
        sign_of_power(z, n) * log_mag.exp()
    }
}

fn sign_of_power(z: f64, n: usize) -> f64 {
    if z < 0.0 && n % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Iterator over the terms of a Prabhakar series.
#[derive(Debug, Clone)]
pub struct MLTerms {
    args: MLArgs,
    n: usize,
    log_mag: f64,
    ln_z: f64,
    lg_prev: f64,
}

impl Iterator for MLTerms {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let n = self.n;
        let value = if n > 0 && self.args.z == 0.0 {
            0.0
        } else {
            sign_of_power(self.args.z, n) * self.log_mag.exp()
        };
        let MLArgs { a, b, c, .. } = self.args;
        let nf = n as f64;
        let lg_next = ln_gamma(a * (nf + 1.0) + b);
        self.log_mag += (c + nf).ln() + self.ln_z - (nf + 1.0).ln() - (lg_next - self.lg_prev);
        self.lg_prev = lg_next;
        self.n += 1;
        Some(value)
    }
}

/// Three-parameter Mittag-Leffler function `M^c_{a,b}(z)` for `|z| <= Z_MAX`.
///
/// Summation stops once two consecutive decreasing terms fall below
/// `TOL_ML` relative to the partial sum, so tiny values (large `b`) keep
/// their relative accuracy.
pub fn ml3(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let args = MLArgs::new(a, b, c, z)?;
    if z.abs() > Z_MAX {
        return Err(Error::range("ml3", format!("|z| = {} exceeds {Z_MAX}", z.abs())));
    }
    if z == 0.0 {
        return Ok(1.0 / statrs::function::gamma::gamma(b));
    }
    let mut sum = Kahan::default();
    let mut previous_small = false;
    let mut previous_mag = f64::INFINITY;
    let mut largest: f64 = 0.0;
    for (n, term) in args.terms().enumerate().take(MAX_TERMS) {
        if !term.is_finite() {
            return Err(Error::Overflow("ml3"));
        }
        sum.add(term);
        let mag = term.abs();
        largest = largest.max(mag);
        if z < 0.0 && largest > CANCELLATION_LIMIT {
            return Err(Error::range("ml3", format!("alternating terms reach {largest:e} at z = {z}")));
        }
        let small = mag <= TOL_ML * sum.value().abs();
        if small && previous_small && mag <= previous_mag && n > 0 {
            let value = sum.value();
            return if value.is_finite() { Ok(value) } else { Err(Error::Overflow("ml3")) };
        }
        previous_small = small;
        previous_mag = mag;
    }
    Err(Error::range("ml3", format!("no convergence within {MAX_TERMS} terms at z = {z}")))
}

/// `e^{-ν s} Σ_m ν^m s^{β+m} M^1_{β,β+m+1}(x s^β)`.
///
/// With `x = ν^β - γ` this is the sum in `Φ_γ(s) = 1 - γ (...)`; with
/// `x = ν^β` it equals `∫_0^s e^{-ν y} y^{β-1} M^1_{β,β}(ν^β y^β) dy`.
pub fn tempered_ml_sum(beta: f64, nu: f64, x: f64, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::domain("tempered_ml_sum", format!("s must be nonnegative, got {s}")));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let z = x * s.powf(beta);
    let ln_s = s.ln();
    if nu == 0.0 {
        return Ok((beta * ln_s).exp() * ml3(beta, beta + 1.0, 1.0, z)?);
    }
    let ln_nu = nu.ln();
    let ns = nu * s;
    let mut sum = Kahan::default();
    for m in 0..MAX_TERMS {
        let mf = m as f64;
        let log_scale = -ns + mf * ln_nu + (beta + mf) * ln_s;
        let term = log_scale.exp() * ml3(beta, beta + mf + 1.0, 1.0, z)?;
        sum.add(term);
        if mf > ns {
            let r = ns / (mf + 1.0);
            if term.abs() * r / (1.0 - r) < TOL_PHI {
                return Ok(sum.value());
            }
        }
    }
    Err(Error::range("tempered_ml_sum", format!("outer series did not converge for nu*s = {ns}")))
}

/// Where a [`PhiValue`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiSource {
    Series,
    Inversion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    pub source: PhiSource,
}

fn check_phi_args(beta: f64, nu: f64, gamma: f64, t: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!("nu must be >= 0, got {nu}")));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain("phi", format!("t must be nonnegative, got {t}")));
    }
    Ok(())
}

/// `Φ_γ(t)` from the Mittag-Leffler series, without fallback.
pub fn phi_series(beta: f64, nu: f64, gamma: f64, t: f64) -> Result<f64> {
    check_phi_args(beta, nu, gamma, t)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    if nu * t > DIRECT_INVERSION_NT {
        return Err(Error::range("phi", format!("nu*t = {} is beyond the series range", nu * t)));
    }
    let value = 1.0 - gamma * tempered_ml_sum(beta, nu, nu.powf(beta) - gamma, t)?;
    if !(-1e-8..=1.0 + 1e-8).contains(&value) {
        return Err(Error::range("phi", format!("series lost accuracy ({value})")));
    }
    Ok(value)
}

/// `Φ_γ(t)` by Gaver-Stehfest inversion of `f(s) / (s (γ + f(s)))`.
pub fn phi_inversion(beta: f64, nu: f64, gamma: f64, t: f64) -> Result<f64> {
    check_phi_args(beta, nu, gamma, t)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    let nu_b = nu.powf(beta);
    let transform = |s: f64| {
        let f = if nu == 0.0 { s.powf(beta) } else { nu_b * (beta * (s / nu).ln_1p()).exp_m1() };
        f / (s * (gamma + f))
    };
    gaver_stehfest(&transform, t, DEFAULT_ORDER)
}

/// `Φ_γ(t)` by fixed-Talbot inversion of `f(s) / (s (γ + f(s)))`, clamped to `[0, 1]`.
pub fn phi_talbot(beta: f64, nu: f64, gamma: f64, t: f64) -> Result<f64> {
    check_phi_args(beta, nu, gamma, t)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    let nu_b = nu.powf(beta);
    let transform = Analytic {
        real: |s: f64| {
            let f = (s + nu).powf(beta) - nu_b;
            f / (s * (gamma + f))
        },
        complex: |s: Complex64| {
            let f = (s + nu).powf(beta) - nu_b;
            f / (s * (gamma + f))
        },
        key: None,
    };
    Ok(talbot(&transform, t, TALBOT_NODES)?.clamp(0.0, 1.0))
}

/// `Φ_γ(t) = E[exp(-γ E_t)]` for the inverse tempered stable subordinator.
///
/// Uses the series when it is reliable and Talbot inversion otherwise.
pub fn phi(beta: f64, nu: f64, gamma: f64, t: f64) -> Result<PhiValue> {
    match phi_series(beta, nu, gamma, t) {
        Ok(value) => Ok(PhiValue { value, source: PhiSource::Series }),
        Err(Error::Range { .. } | Error::Overflow(_)) => {
            Ok(PhiValue { value: phi_talbot(beta, nu, gamma, t)?, source: PhiSource::Inversion })
        }
        Err(e) => Err(e),
    }
}

/// `e^{-ν y} y^{β-1} M^1_{β,β}(x y^β)`.
///
/// Where the series is refused the kernel is recovered from its transform
/// `1 / ((s + ν)^β - x)` by Talbot inversion.
pub fn ml_kernel(beta: f64, nu: f64, x: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::domain("ml_kernel", format!("y must be positive, got {y}")));
    }
    let scale = (-nu * y + (beta - 1.0) * y.ln()).exp();
    match ml3(beta, beta, 1.0, x * y.powf(beta)) {
        Ok(m) => Ok(scale * m),
        Err(Error::Range { .. } | Error::Overflow(_)) => ml_kernel_talbot(beta, nu, x, y),
        Err(e) => Err(e),
    }
}

/// [`ml_kernel`] by inversion only.
pub fn ml_kernel_talbot(beta: f64, nu: f64, x: f64, y: f64) -> Result<f64> {
    let transform = Analytic {
        real: |s: f64| 1.0 / ((s + nu).powf(beta) - x),
        complex: |s: Complex64| 1.0 / ((s + nu).powf(beta) - x),
        key: None,
    };
    talbot(&transform, y, TALBOT_NODES)
}

/// Kernel of the transform of `E_s + E_t`: argument `-(2γ - ν^β) y^β`.
pub fn kernel_h_sum(beta: f64, nu: f64, gamma: f64, y: f64) -> Result<f64> {
    ml_kernel(beta, nu, -(2.0 * gamma - nu.powf(beta)), y)
}

/// Renewal kernel of the transform of `E_t - E_s`: argument `ν^β y^β`.
pub fn kernel_h_renewal(beta: f64, nu: f64, y: f64) -> Result<f64> {
    ml_kernel(beta, nu, nu.powf(beta), y)
}

/// `Γ(α, x) = ∫_x^∞ e^{-z} z^{α-1} dz` by quadrature.
pub fn upper_incomplete_gamma(alpha: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("upper_incomplete_gamma", format!("x must be positive, got {x}")));
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
    }
    // z = x + w, w = u / (1 - u) maps [x, ∞) onto [0, 1)
    let integrand = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - u;
        let w = u / one_minus;
        let v = (-w + (alpha - 1.0) * (x + w).ln()).exp() / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // split where the transformed weight has most of its mass
    let knee = x / (1.0 + x);
    let tol = Tolerance::relative(1e-11);
    let head = gauss_kronrod(integrand, 0.0, knee.min(0.5), tol)?;
    let tail = gauss_kronrod(integrand, knee.min(0.5), 1.0, tol)?;
    Ok((-x).exp() * (head.value + tail.value))
}
