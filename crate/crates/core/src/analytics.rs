//! Moments of the time-changed intensity `λ(E_t)`.
//!
//! Every moment is a combination of `Φ_γ(t) = E[e^{-γ E_t}]`, `Φ_{2γ}(t)` and
//! the joint transforms `E[e^{-γ(E_t ± E_s)}]`. For the tempered stable clock
//! these come from Mittag-Leffler series and kernel convolutions; for a
//! general subordinator they are obtained by numerical transform inversion.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bernstein::{BernsteinSpec, TemperedStable};
use crate::error::{Error, Result};
use crate::hawkes::HawkesParams;
use crate::montecarlo::{self, Quantity, RowKey};
use crate::laplace::{invert_mean_inverse_subordinator, order_stability, GaverStehfest, LaplaceInverter, Transform};
use crate::quadrature::{gauss_kronrod, tanh_sinh, Estimate, Tolerance};
use crate::special::{tempered_ml_sum, ml3, ml_kernel, ml_kernel_talbot, phi, PhiSource};

/// Default relative tolerance of the kernel convolutions.
pub const DEFAULT_QUAD_TOL: f64 = 1e-8;

/// Floor on the tolerance of convolutions whose kernel is itself a numerical inverse.
pub const INVERTED_QUAD_TOL: f64 = 1e-6;

/// Which closed form of the transform of `E_s + E_t` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumTransformVariant {
    /// Renewal kernel and `Φ_{2γ}(t)` as the closing term.
    Statement,
    /// Kernel with argument `-(2γ - ν^β) y^β`, closing term `Φ_γ(t)`.
    #[default]
    Proof,
}

impl fmt::Display for SumTransformVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SumTransformVariant::Statement => "statement",
            SumTransformVariant::Proof => "proof",
        })
    }
}

/// Settings of the Monte Carlo estimate used when a transform inversion is ill-conditioned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McFallback {
    pub n_paths: usize,
    pub seed: u64,
    pub step: f64,
}

impl Default for McFallback {
    fn default() -> Self {
        Self { n_paths: 20_000, seed: 0, step: 1e-3 }
    }
}

/// A Hawkes process run on the inverse of the clock `sub`.
#[derive(Clone)]
pub struct TfhpModel {
    pub hawkes: HawkesParams,
    pub sub: BernsteinSpec,
    pub sum_variant: SumTransformVariant,
    pub quad_tol: f64,
    pub fallback: McFallback,
    inverter: Arc<dyn LaplaceInverter>,
}

impl fmt::Debug for TfhpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TfhpModel")
            .field("hawkes", &self.hawkes)
            .field("sub", &self.sub)
            .field("sum_variant", &self.sum_variant)
            .field("quad_tol", &self.quad_tol)
            .field("inverter", &self.inverter.name())
            .finish()
    }
}

#[derive(Debug, Clone, Copy)]
struct Coefficients {
    gamma: f64,
    rho1: f64,
    rho2: f64,
    lambda0: f64,
    /// `λ_0 - κθ/γ`
    a: f64,
    /// `κθ/γ`
    b: f64,
}

impl Coefficients {
    fn mean(&self, phi1: f64) -> f64 {
        self.a * phi1 + self.b
    }

    fn variance(&self, phi1: f64, phi2: f64) -> Result<f64> {
        let Coefficients { gamma, rho1, rho2, lambda0, a, .. } = *self;
        let v = (rho1 * lambda0 + rho2) / gamma * (phi1 - phi2)
            + rho2 / (2.0 * gamma) * (phi2 - 1.0)
            + a * a * (phi2 - phi1 * phi1);
        if v < -1e-10 {
            return Err(Error::Consistency(format!("negative variance {v:e}")));
        }
        Ok(v.max(0.0))
    }

    fn covariance(&self, lt_sum: f64, lt_diff: f64, phi_s: f64, phi_t: f64) -> f64 {
        // prefactors carry ημ - κ = -γ
        let d = -self.gamma;
        let Coefficients { rho1, rho2, lambda0, a, .. } = *self;
        (rho1 * lambda0 + rho2) / d * (lt_sum - phi_t)
            + rho2 / (2.0 * d) * (lt_diff - lt_sum)
            + a * a * (lt_sum - phi_t * phi_s)
    }
}

impl TfhpModel {
    pub fn new(hawkes: HawkesParams, sub: BernsteinSpec) -> Result<Self> {
        hawkes.validate()?;
        let gamma = hawkes.derived().gamma;
        if !(gamma > 0.0) {
            return Err(Error::Stationarity { gamma });
        }
        Ok(Self {
            hawkes,
            sub,
            sum_variant: SumTransformVariant::default(),
            quad_tol: DEFAULT_QUAD_TOL,
            fallback: McFallback::default(),
            inverter: Arc::new(GaverStehfest::default()),
        })
    }

    pub fn with_sum_variant(mut self, variant: SumTransformVariant) -> Self {
        self.sum_variant = variant;
        self
    }

    pub fn with_quad_tol(mut self, tol: f64) -> Self {
        self.quad_tol = tol;
        self
    }

    pub fn with_fallback(mut self, fallback: McFallback) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn with_inverter(mut self, inverter: Arc<dyn LaplaceInverter>) -> Self {
        self.inverter = inverter;
        self
    }

    pub fn inverter(&self) -> &dyn LaplaceInverter {
        self.inverter.as_ref()
    }

    /// `γ = κ - ημ`.
    pub fn gamma(&self) -> f64 {
        self.hawkes.derived().gamma
    }

    fn coefficients(&self) -> Coefficients {
        let d = self.hawkes.derived();
        let b = self.hawkes.kappa * self.hawkes.theta / d.gamma;
        Coefficients { gamma: d.gamma, rho1: d.rho1, rho2: d.rho2, lambda0: self.hawkes.lambda0, a: self.hawkes.lambda0 - b, b }
    }

    fn tss(&self) -> Result<TemperedStable> {
        self.sub.tempered_stable_params().ok_or_else(|| {
            Error::InvalidParameter(format!("series formulas need a tempered stable clock, got {}", self.sub.family()))
        })
    }
}

fn check_time(op: &'static str, t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(op, format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

fn check_pair(op: &'static str, s: f64, t: f64) -> Result<()> {
    check_time(op, s)?;
    check_time(op, t)?;
    if s > t {
        return Err(Error::domain(op, format!("need s <= t, got s = {s}, t = {t}")));
    }
    Ok(())
}

fn tss_phi(sub: &TemperedStable, rate: f64, t: f64) -> Result<f64> {
    Ok(phi(sub.beta, sub.nu, rate, t)?.value)
}

/// `Φ_rate(t)` of the tempered stable clock, with its provenance.
pub fn tfhp_phi(model: &TfhpModel, rate: f64, t: f64) -> Result<(f64, PhiSource)> {
    let sub = model.tss()?;
    let p = phi(sub.beta, sub.nu, rate, t)?;
    Ok((p.value, p.source))
}

/// `E_0[λ(E_t)] = (λ_0 - κθ/γ) Φ_γ(t) + κθ/γ`.
pub fn tfhp_mean(model: &TfhpModel, t: f64) -> Result<f64> {
    check_time("tfhp_mean", t)?;
    let sub = model.tss()?;
    let c = model.coefficients();
    Ok(c.mean(tss_phi(&sub, c.gamma, t)?))
}

/// `V_0[λ(E_t)]` from the conditional variance decomposition.
pub fn tfhp_variance(model: &TfhpModel, t: f64) -> Result<f64> {
    check_time("tfhp_variance", t)?;
    let sub = model.tss()?;
    let c = model.coefficients();
    c.variance(tss_phi(&sub, c.gamma, t)?, tss_phi(&sub, 2.0 * c.gamma, t)?)
}

/// `e^{-νt} Σ_m ν^m t^{β+m} M_{β,β+m+1}((ν^β - rate) t^β)`, i.e. `(1 - Φ_rate(t)) / rate`.
fn tail_sum(sub: &TemperedStable, rate: f64, t: f64) -> Result<f64> {
    tempered_ml_sum(sub.beta, sub.nu, sub.nu.powf(sub.beta) - rate, t)
}

/// The expanded series form of the mean, evaluated term by term.
pub fn mean_series(model: &TfhpModel, t: f64) -> Result<f64> {
    check_time("mean_series", t)?;
    let sub = model.tss()?;
    let c = model.coefficients();
    Ok(c.a * (1.0 - c.gamma * tail_sum(&sub, c.gamma, t)?) + c.b)
}

/// Series form of the variance with the `ρ2` term entering as `-ρ2 S_{2γ}(t)`.
pub fn variance_series(model: &TfhpModel, t: f64) -> Result<f64> {
    let (common, rho2_term) = variance_series_parts(model, t)?;
    Ok(common - rho2_term)
}

/// Series form of the variance with `+ρ2 S_{2γ}(t)`; differs from
/// [`variance_series`] by `2 ρ2 S_{2γ}(t)` and does not match the composed variance.
pub fn variance_series_opposite_sign(model: &TfhpModel, t: f64) -> Result<f64> {
    let (common, rho2_term) = variance_series_parts(model, t)?;
    Ok(common + rho2_term)
}

fn variance_series_parts(model: &TfhpModel, t: f64) -> Result<(f64, f64)> {
    check_time("variance_series", t)?;
    let sub = model.tss()?;
    let c = model.coefficients();
    let s1 = tail_sum(&sub, c.gamma, t)?;
    let s2 = tail_sum(&sub, 2.0 * c.gamma, t)?;
    let phi1 = 1.0 - c.gamma * s1;
    let phi2 = 1.0 - 2.0 * c.gamma * s2;
    let common = (c.rho1 * c.lambda0 + c.rho2) * (2.0 * s2 - s1) + c.a * c.a * (phi2 - phi1 * phi1);
    Ok((common, c.rho2 * s2))
}

/// Kernel convolved against `Φ_γ(t - y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `e^{-νy} y^{β-1} M_{β,β}(-(2γ - ν^β) y^β)`
    Sum,
    /// `e^{-νy} y^{β-1} M_{β,β}(ν^β y^β)`
    Renewal,
}

impl Kernel {
    fn argument(&self, sub: &TemperedStable, gamma: f64) -> f64 {
        let nu_b = sub.nu.powf(sub.beta);
        match self {
            Kernel::Sum => -(2.0 * gamma - nu_b),
            Kernel::Renewal => nu_b,
        }
    }
}

/// Runs `f` with a slot that integrand closures can park their first error in.
fn with_error_slot<T>(f: impl FnOnce(&Cell<Option<Error>>) -> Result<T>) -> Result<T> {
    let slot = Cell::new(None);
    let out = f(&slot);
    match slot.take() {
        Some(e) => Err(e),
        None => out,
    }
}

fn park(slot: &Cell<Option<Error>>, r: Result<f64>) -> f64 {
    match r {
        Ok(v) => v,
        Err(e) => {
            let prev = slot.take();
            slot.set(Some(prev.unwrap_or(e)));
            f64::NAN
        }
    }
}

/// `∫_0^s h(y) Φ_γ(t - y) dy` after the substitution `y = u^{1/β}`, which makes
/// the integrand bounded.
pub fn convolve_kernel_phi(kernel: Kernel, sub: &TemperedStable, gamma: f64, s: f64, t: f64, tol: f64) -> Result<Estimate> {
    check_pair("convolve_kernel_phi", s, t)?;
    if s == 0.0 {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let TemperedStable { beta, nu } = *sub;
    let x = kernel.argument(sub, gamma);
    let inv_beta = 1.0 / beta;
    with_error_slot(|slot| {
        let integrand = |u: f64| {
            let y = u.powf(inv_beta);
            let reduced = match ml3(beta, beta, 1.0, x * u) {
                Ok(m) => Ok((-nu * y).exp() * m),
                Err(Error::Range { .. } | Error::Overflow(_)) => {
                    ml_kernel_talbot(beta, nu, x, y).map(|k| k * y.powf(1.0 - beta))
                }
                Err(e) => Err(e),
            };
            let value = reduced.and_then(|k| Ok(k * tss_phi(sub, gamma, (t - y).max(0.0))? * inv_beta));
            park(slot, value)
        };
        gauss_kronrod(integrand, 0.0, s.powf(beta), Tolerance::new(1e-14, tol))
    })
}

/// `E[e^{-γ(E_s + E_t)}]` for the tempered stable clock, `s <= t`.
pub fn lt_sum(sub: &TemperedStable, gamma: f64, s: f64, t: f64, variant: SumTransformVariant, tol: f64) -> Result<f64> {
    check_pair("lt_sum", s, t)?;
    if s == 0.0 {
        return tss_phi(sub, gamma, t);
    }
    let phi2_s = tss_phi(sub, 2.0 * gamma, s)?;
    let closed = tempered_ml_sum(sub.beta, sub.nu, -(2.0 * gamma - sub.nu.powf(sub.beta)), s)
        .or_else(|_| Ok::<_, Error>((1.0 - phi2_s) / (2.0 * gamma)))?;
    Ok(match variant {
        SumTransformVariant::Proof => {
            let conv = convolve_kernel_phi(Kernel::Sum, sub, gamma, s, t, tol)?.value;
            -gamma * conv + gamma * closed - 0.5 + 0.5 * phi2_s + tss_phi(sub, gamma, t)?
        }
        SumTransformVariant::Statement => {
            let conv = convolve_kernel_phi(Kernel::Renewal, sub, gamma, s, t, tol)?.value;
            -gamma * conv + closed - 0.5 + 0.5 * phi2_s + tss_phi(sub, 2.0 * gamma, t)?
        }
    })
}

/// `E[e^{-γ(E_t - E_s)}]` for the tempered stable clock, `s <= t`.
pub fn lt_diff(sub: &TemperedStable, gamma: f64, s: f64, t: f64, tol: f64) -> Result<f64> {
    check_pair("lt_diff", s, t)?;
    if s == 0.0 {
        return tss_phi(sub, gamma, t);
    }
    let spec = BernsteinSpec::new(*sub);
    let conv = convolve_kernel_phi(Kernel::Renewal, sub, gamma, s, t, tol)?.value;
    let closed = tempered_ml_sum(sub.beta, sub.nu, sub.nu.powf(sub.beta), s)?;
    let mean = invert_mean_inverse_subordinator(&spec, s)?;
    Ok(gamma * conv - gamma * closed + tss_phi(sub, gamma, t)? + gamma * mean)
}

/// `Cov_0(λ(E_s), λ(E_t))` for the tempered stable clock.
pub fn tfhp_covariance(model: &TfhpModel, s: f64, t: f64) -> Result<f64> {
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    check_pair("tfhp_covariance", s, t)?;
    let sub = model.tss()?;
    let c = model.coefficients();
    let sum = lt_sum(&sub, c.gamma, s, t, model.sum_variant, model.quad_tol)?;
    let diff = lt_diff(&sub, c.gamma, s, t, model.quad_tol)?;
    Ok(c.covariance(sum, diff, tss_phi(&sub, c.gamma, s)?, tss_phi(&sub, c.gamma, t)?))
}

/// A value obtained by transform inversion, with the order-stability verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inverted {
    pub value: f64,
    pub ill_conditioned: bool,
}

/// `Φ_rate(t)` for any clock, inverting `f(s) / (s (rate + f(s)))`.
pub fn phi_general(spec: &BernsteinSpec, rate: f64, t: f64, inverter: &dyn LaplaceInverter) -> Result<Inverted> {
    check_time("phi_general", t)?;
    if t == 0.0 {
        return Ok(Inverted { value: 1.0, ill_conditioned: false });
    }
    let f = spec.function();
    let transform = |s: f64| {
        let fs = f.eval(s);
        fs / (s * (rate + fs))
    };
    let value = inverter.invert(&transform, t)?;
    let ill_conditioned = order_stability(&transform, t)?.ill_conditioned;
    Ok(Inverted { value, ill_conditioned })
}

/// Mean of `λ(E_f(t))` for any clock.
pub fn gfhp_mean(model: &TfhpModel, t: f64) -> Result<Inverted> {
    let c = model.coefficients();
    let p = phi_general(&model.sub, c.gamma, t, model.inverter())?;
    Ok(Inverted { value: c.mean(p.value), ill_conditioned: p.ill_conditioned })
}

/// Variance of `λ(E_f(t))` for any clock.
pub fn gfhp_variance(model: &TfhpModel, t: f64) -> Result<Inverted> {
    let c = model.coefficients();
    let p1 = phi_general(&model.sub, c.gamma, t, model.inverter())?;
    let p2 = phi_general(&model.sub, 2.0 * c.gamma, t, model.inverter())?;
    Ok(Inverted { value: c.variance(p1.value, p2.value)?, ill_conditioned: p1.ill_conditioned || p2.ill_conditioned })
}

/// `∫_0^s k(y) Φ_γ(t - y) dy` with `k` the inverse transform of `kernel_lt`.
fn convolve_inverted(
    model: &TfhpModel,
    kernel_lt: &dyn Transform,
    s: f64,
    t: f64,
) -> Result<Inverted> {
    let gamma = model.gamma();
    let inverter = model.inverter();
    let mut ill = false;
    for y in [0.25 * s, s] {
        ill |= order_stability(kernel_lt, y)?.ill_conditioned;
    }
    let value = with_error_slot(|slot| {
        let integrand = |y: f64, _: f64, to_end: f64| {
            let k = inverter.invert(kernel_lt, y);
            let p = phi_general(&model.sub, gamma, (t - s + to_end).max(0.0), inverter).map(|p| p.value);
            park(slot, k.and_then(|k| Ok(k * p?)))
        };
        tanh_sinh(integrand, 0.0, s, model.quad_tol.max(INVERTED_QUAD_TOL))
    })?
    .value;
    Ok(Inverted { value, ill_conditioned: ill })
}

/// `E[e^{-γ(E_f(s) + E_f(t))}]` by the kernel method with the kernel inverted from `1/(f + 2γ)`.
pub fn gfhp_lt_sum(model: &TfhpModel, s: f64, t: f64) -> Result<Inverted> {
    check_pair("gfhp_lt_sum", s, t)?;
    let gamma = model.gamma();
    let phi_t = phi_general(&model.sub, gamma, t, model.inverter())?;
    if s == 0.0 {
        return Ok(phi_t);
    }
    let f = model.sub.function();
    let kernel = move |x: f64| 1.0 / (f.eval(x) + 2.0 * gamma);
    let conv = convolve_inverted(model, &kernel, s, t)?;
    Ok(Inverted { value: phi_t.value - gamma * conv.value, ill_conditioned: phi_t.ill_conditioned || conv.ill_conditioned })
}

/// `E[e^{-γ(E_f(t) - E_f(s))}]` by the kernel method with the renewal density inverted from `1/f`.
pub fn gfhp_lt_diff(model: &TfhpModel, s: f64, t: f64) -> Result<Inverted> {
    check_pair("gfhp_lt_diff", s, t)?;
    let gamma = model.gamma();
    let phi_t = phi_general(&model.sub, gamma, t, model.inverter())?;
    if s == 0.0 {
        return Ok(phi_t);
    }
    let f = model.sub.function();
    let kernel = move |x: f64| 1.0 / f.eval(x);
    let conv = convolve_inverted(model, &kernel, s, t)?;
    Ok(Inverted { value: phi_t.value + gamma * conv.value, ill_conditioned: phi_t.ill_conditioned || conv.ill_conditioned })
}

/// How a GFHP covariance was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CovarianceSource {
    Inversion,
    MonteCarlo { n_paths: usize, seed: u64, se_sum: f64, se_diff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GfhpCovariance {
    pub value: f64,
    pub source: CovarianceSource,
}

/// Covariance of `λ(E_f(s))` and `λ(E_f(t))` for any clock; joint transforms
/// fall back to Monte Carlo when their inversion is flagged ill-conditioned.
pub fn gfhp_covariance(model: &TfhpModel, s: f64, t: f64) -> Result<GfhpCovariance> {
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    check_pair("gfhp_covariance", s, t)?;
    let c = model.coefficients();
    let phi_s = phi_general(&model.sub, c.gamma, s, model.inverter())?.value;
    let phi_t = phi_general(&model.sub, c.gamma, t, model.inverter())?.value;
    let sum = gfhp_lt_sum(model, s, t);
    let diff = gfhp_lt_diff(model, s, t);
    match (sum, diff) {
        (Ok(sum), Ok(diff)) if !sum.ill_conditioned && !diff.ill_conditioned => Ok(GfhpCovariance {
            value: c.covariance(sum.value, diff.value, phi_s, phi_t),
            source: CovarianceSource::Inversion,
        }),
        (Err(e), _) | (_, Err(e)) if !matches!(e, Error::Integration(_) | Error::Inversion { .. }) => Err(e),
        _ => {
            let fb = model.fallback;
            if s == 0.0 {
                return Err(Error::domain("gfhp_covariance", "ill-conditioned inversion at s = 0"));
            }
            let mc = montecarlo::estimate_inverse_lts(&model.sub, c.gamma, s, t, fb.n_paths, fb.seed, fb.step)?;
            let pick = |q| mc.row(RowKey::pair(q, s, t)).expect("joint transform row");
            let (sum, diff) = (pick(Quantity::LtSum), pick(Quantity::LtDiff));
            Ok(GfhpCovariance {
                value: c.covariance(sum.estimate, diff.estimate, phi_s, phi_t),
                source: CovarianceSource::MonteCarlo {
                    n_paths: fb.n_paths,
                    seed: fb.seed,
                    se_sum: sum.se,
                    se_diff: diff.se,
                },
            })
        }
    }
}

/// `∫_0^s h(y) dy` for the kernel, as a closed series.
pub fn kernel_integral(kernel: Kernel, sub: &TemperedStable, gamma: f64, s: f64) -> Result<f64> {
    tempered_ml_sum(sub.beta, sub.nu, kernel.argument(sub, gamma), s)
}

/// Point evaluation of a convolution kernel.
pub fn kernel_value(kernel: Kernel, sub: &TemperedStable, gamma: f64, y: f64) -> Result<f64> {
    ml_kernel(sub.beta, sub.nu, kernel.argument(sub, gamma), y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::MarkLaw;

    fn hawkes() -> HawkesParams {
        HawkesParams::new(1.0, 2.0, 1.0, 2.0, MarkLaw::Deterministic { mean: 0.5 }).unwrap()
    }

    fn model() -> TfhpModel {
        TfhpModel::new(hawkes(), BernsteinSpec::tempered_stable(0.7, 0.5).unwrap()).unwrap()
    }

    const TSS: TemperedStable = TemperedStable { beta: 0.7, nu: 0.5 };

    #[test]
    fn rejects_nonstationary() {
        let h = HawkesParams::new(1.0, 1.0, 2.0, 2.0, MarkLaw::Deterministic { mean: 0.5 }).unwrap();
        let err = TfhpModel::new(h, BernsteinSpec::stable(0.5).unwrap()).unwrap_err();
        assert_eq!(err, Error::Stationarity { gamma: 0.0 });
    }

    #[test]
    fn boundary_values() {
        let m = model();
        assert_eq!(tfhp_mean(&m, 0.0).unwrap(), 2.0);
        assert_eq!(tfhp_variance(&m, 0.0).unwrap(), 0.0);
        assert!((tfhp_mean(&m, 200.0).unwrap() - 4.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn mean_series_agrees_with_composition() {
        let m = model();
        for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let a = tfhp_mean(&m, t).unwrap();
            let b = mean_series(&m, t).unwrap();
            assert!((a - b).abs() < 1e-8, "{t}");
        }
    }

    #[test]
    fn variance_series_agrees_with_composition() {
        let m = model();
        let c = m.coefficients();
        for t in [0.1, 0.5, 1.0, 2.0] {
            let v = tfhp_variance(&m, t).unwrap();
            let series = variance_series(&m, t).unwrap();
            assert!((v - series).abs() < 1e-6, "{t}");
            let flipped = variance_series_opposite_sign(&m, t).unwrap();
            let s2 = tail_sum(&TSS, 2.0 * c.gamma, t).unwrap();
            assert!((flipped - series - 2.0 * c.rho2 * s2).abs() < 1e-12);
        }
        assert!(matches!(variance_series(&m, 5.0), Err(Error::Range { .. })));
    }

    #[test]
    fn untempered_mean_is_fractional_hawkes() {
        let m = TfhpModel::new(hawkes(), BernsteinSpec::stable(0.7).unwrap()).unwrap();
        for t in [0.5, 1.0, 2.0, 5.0] {
            let ml = ml3(0.7, 1.0, 1.0, -1.5 * f64::powf(t, 0.7)).unwrap();
            let expected = (2.0 - 4.0 / 3.0) * ml + 4.0 / 3.0;
            assert!((tfhp_mean(&m, t).unwrap() - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn convolution_boundaries() {
        let tiny = convolve_kernel_phi(Kernel::Sum, &TSS, 1.5, 1e-8, 1.0, 1e-8).unwrap();
        assert!(tiny.value.abs() < 1e-6);
    }

    #[test]
    fn renewal_convolution_with_unit_phi_is_closed_sum() {
        // Φ ≡ 1 in the limit of vanishing rate
        let sub = TemperedStable { beta: 0.6, nu: 0.4 };
        let direct = convolve_kernel_phi(Kernel::Renewal, &sub, 1e-14, 1.0, 1.0, 1e-10).unwrap();
        let closed = kernel_integral(Kernel::Renewal, &sub, 0.0, 1.0).unwrap();
        assert!((direct.value - closed).abs() < 1e-6, "{} vs {closed}", direct.value);
    }

    #[test]
    fn convolution_self_convergence() {
        let reference = convolve_kernel_phi(Kernel::Sum, &TSS, 1.5, 0.5, 1.0, 1e-12).unwrap().value;
        let coarse = convolve_kernel_phi(Kernel::Sum, &TSS, 1.5, 0.5, 1.0, 1e-5).unwrap();
        let fine = convolve_kernel_phi(Kernel::Sum, &TSS, 1.5, 0.5, 1.0, 1e-9).unwrap();
        assert!((fine.value - reference).abs() <= (coarse.value - reference).abs() + 1e-15);
        assert!((fine.value - reference).abs() < 1e-8);
    }

    #[test]
    fn lt_sum_reductions() {
        let v = SumTransformVariant::Proof;
        assert_eq!(lt_sum(&TSS, 1.5, 0.0, 0.0, v, 1e-8).unwrap(), 1.0);
        assert_eq!(lt_sum(&TSS, 1.5, 0.0, 1.3, v, 1e-8).unwrap(), tss_phi(&TSS, 1.5, 1.3).unwrap());
        for t in [0.5, 1.0, 2.0] {
            let diag = lt_sum(&TSS, 1.5, t, t, v, 1e-9).unwrap();
            assert!((diag - tss_phi(&TSS, 3.0, t).unwrap()).abs() < 1e-4, "{t}");
        }
    }

    #[test]
    fn lt_sum_proof_value() {
        let v = lt_sum(&TSS, 1.5, 0.5, 1.0, SumTransformVariant::Proof, 1e-9).unwrap();
        assert!((v - 0.08818).abs() < 5e-5, "{v}");
        let statement = lt_sum(&TSS, 1.5, 0.5, 1.0, SumTransformVariant::Statement, 1e-9).unwrap();
        assert!(statement < 0.0);
    }

    #[test]
    fn lt_diff_reductions() {
        assert!((lt_diff(&TSS, 1.5, 1.0, 1.0, 1e-9).unwrap() - 1.0).abs() < 1e-4);
        assert_eq!(lt_diff(&TSS, 1.5, 0.0, 2.0, 1e-9).unwrap(), tss_phi(&TSS, 1.5, 2.0).unwrap());
        let v = lt_diff(&TSS, 1.5, 0.5, 1.0, 1e-9).unwrap();
        assert!(v > 0.0 && v <= 1.0);
    }

    #[test]
    fn covariance_diagonal_is_variance() {
        let m = model();
        for t in [0.5, 1.0, 2.0, 5.0] {
            let cov = tfhp_covariance(&m, t, t).unwrap();
            let var = tfhp_variance(&m, t).unwrap();
            assert!((cov - var).abs() < 1e-6, "{t}: {cov} vs {var}");
        }
    }

    #[test]
    fn covariance_cauchy_schwarz_and_sign() {
        let m = model();
        for (s, t) in [(0.5, 1.0), (1.0, 2.0), (0.5, 3.0)] {
            let c = tfhp_covariance(&m, s, t).unwrap();
            let vs = tfhp_variance(&m, s).unwrap();
            let vt = tfhp_variance(&m, t).unwrap();
            assert!(c >= 0.0);
            assert!(c * c <= vs * vt * (1.0 + 1e-9));
        }
    }

    #[test]
    fn gfhp_matches_tfhp_on_tempered_stable() {
        let m = model();
        for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let mean = gfhp_mean(&m, t).unwrap();
            assert!((mean.value - tfhp_mean(&m, t).unwrap()).abs() < 1e-5, "{t}");
            assert!(!mean.ill_conditioned);
            let var = gfhp_variance(&m, t).unwrap();
            assert!((var.value - tfhp_variance(&m, t).unwrap()).abs() < 1e-5, "{t}");
        }
    }

    #[test]
    fn gfhp_zero_time() {
        let m = TfhpModel::new(hawkes(), BernsteinSpec::gamma(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(gfhp_mean(&m, 0.0).unwrap().value, 2.0);
        assert_eq!(gfhp_variance(&m, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn gfhp_joint_transforms_match_tempered_stable() {
        let m = model();
        let sum = gfhp_lt_sum(&m, 0.5, 1.0).unwrap();
        let series = lt_sum(&TSS, 1.5, 0.5, 1.0, SumTransformVariant::Proof, 1e-9).unwrap();
        assert!((sum.value - series).abs() < 1e-5, "{} vs {series}", sum.value);
        let diff = gfhp_lt_diff(&m, 0.5, 1.0).unwrap();
        let series = lt_diff(&TSS, 1.5, 0.5, 1.0, 1e-9).unwrap();
        assert!((diff.value - series).abs() < 1e-5, "{} vs {series}", diff.value);
    }

    #[test]
    fn pure_drift_clock_gives_classical_moments() {
        let m = TfhpModel::new(hawkes(), BernsteinSpec::custom(0.0, 1.0, vec![]).unwrap()).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let mean = gfhp_mean(&m, t).unwrap().value;
            assert!((mean - crate::hawkes::hp_mean(&hawkes(), t)).abs() < 1e-5);
            let var = gfhp_variance(&m, t).unwrap().value;
            assert!((var - crate::hawkes::hp_variance(&hawkes(), t)).abs() < 1e-5);
        }
    }

    #[test]
    fn series_formulas_need_tempered_stable() {
        let m = TfhpModel::new(hawkes(), BernsteinSpec::gamma(1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(tfhp_mean(&m, 1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn pair_order_is_validated() {
        assert!(lt_sum(&TSS, 1.5, 2.0, 1.0, SumTransformVariant::Proof, 1e-8).is_err());
        assert!(lt_diff(&TSS, 1.5, 2.0, 1.0, 1e-8).is_err());
    }
}
