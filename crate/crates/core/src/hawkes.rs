//! Hawkes process with exponentially decaying intensity
//! `λ_t = θ + (λ_0 - θ) e^{-κt} + η Σ_{t_i <= t} ξ_i e^{-κ(t - t_i)}`:
//! exact simulation by thinning and the closed-form moments of `λ_t`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of events a single path may contain.
pub const MAX_EVENTS: usize = 10_000_000;

/// Distribution of the marks `ξ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkLaw {
    Deterministic { mean: f64 },
    Exponential { mean: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl MarkLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            MarkLaw::Deterministic { mean } | MarkLaw::Exponential { mean } => mean,
            MarkLaw::Gamma { shape, rate } => shape / rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            MarkLaw::Deterministic { .. } => 0.0,
            MarkLaw::Exponential { mean } => mean * mean,
            MarkLaw::Gamma { shape, rate } => shape / (rate * rate),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            MarkLaw::Deterministic { mean } | MarkLaw::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            MarkLaw::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("mark law parameters must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
enum MarkSampler {
    Constant(f64),
    Exponential(f64),
    Gamma(Gamma<f64>),
}

impl MarkSampler {
    fn new(law: MarkLaw) -> Result<Self> {
        Ok(match law {
            MarkLaw::Deterministic { mean } => MarkSampler::Constant(mean),
            MarkLaw::Exponential { mean } => MarkSampler::Exponential(mean),
            MarkLaw::Gamma { shape, rate } => MarkSampler::Gamma(
                Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(format!("mark law: {e}")))?,
            ),
        })
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MarkSampler::Constant(m) => *m,
            MarkSampler::Exponential(m) => m * rng.sample::<f64, _>(Exp1),
            MarkSampler::Gamma(g) => g.sample(rng),
        }
    }
}

/// Baseline `θ`, decay `κ`, excitation `η`, initial intensity `λ_0` and mark law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HawkesParams {
    pub theta: f64,
    pub kappa: f64,
    pub eta: f64,
    pub lambda0: f64,
    pub marks: MarkLaw,
}

/// `γ = κ - ημ`, `ρ1 = η²(ψ² + μ²)`, `ρ2 = η²κθ(ψ² + μ²)/(ημ - κ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HawkesDerived {
    pub gamma: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub stationary: bool,
}

impl HawkesParams {
    pub fn new(theta: f64, kappa: f64, eta: f64, lambda0: f64, marks: MarkLaw) -> Result<Self> {
        let p = Self { theta, kappa, eta, lambda0, marks };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.theta, self.kappa, self.eta, self.lambda0].iter().all(|x| x.is_finite());
        if !finite || !(self.theta >= 0.0) || !(self.kappa > 0.0) || !(self.eta >= 0.0) || !(self.lambda0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Hawkes parameters need theta >= 0, kappa > 0, eta >= 0, lambda0 > 0; got {self:?}"
            )));
        }
        self.marks.validate()
    }

    pub fn derived(&self) -> HawkesDerived {
        let mu = self.marks.mean();
        let second = self.marks.variance() + mu * mu;
        let gamma = self.kappa - self.eta * mu;
        let rho1 = self.eta * self.eta * second;
        HawkesDerived { gamma, rho1, rho2: -rho1 * self.kappa * self.theta / gamma, stationary: gamma > 0.0 }
    }

    /// `ημ - κ`.
    fn drift_rate(&self) -> f64 {
        self.eta * self.marks.mean() - self.kappa
    }
}

/// `(e^x - 1)/x`, with its Taylor polynomial near 0.
fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    } else {
        x.exp_m1() / x
    }
}

/// `(e^x - 1 - x)/x²`, with its Taylor polynomial near 0.
fn expm1_ratio2(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x * (1.0 / 720.0 + x / 5040.0))))
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// `E_0[λ_t] = e^{(ημ-κ)t} λ_0 + κθ (e^{(ημ-κ)t} - 1)/(ημ - κ)`.
pub fn hp_mean(params: &HawkesParams, t: f64) -> f64 {
    let d = params.drift_rate();
    let x = d * t;
    x.exp() * params.lambda0 + params.kappa * params.theta * t * expm1_ratio(x)
}

/// `V_0[λ_t] = (ρ1λ0 + ρ2)/(ημ-κ) (e^{2(ημ-κ)t} - e^{(ημ-κ)t}) - ρ2/(2(ημ-κ)) (e^{2(ημ-κ)t} - 1)`,
/// evaluated in a form without the removable singularity at `ημ = κ`.
pub fn hp_variance(params: &HawkesParams, t: f64) -> f64 {
    let d = params.drift_rate();
    let rho1 = params.derived().rho1;
    let x = d * t;
    let g = expm1_ratio(x);
    rho1 * params.lambda0 * t * x.exp() * g + 0.5 * rho1 * params.kappa * params.theta * t * t * g * g
}

/// `Cov_0(λ_s, λ_t) = e^{(ημ-κ)(t-s)} V_0[λ_s]` for `s <= t`.
pub fn hp_covariance(params: &HawkesParams, s: f64, t: f64) -> f64 {
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    if s == t {
        return hp_variance(params, t);
    }
    (params.drift_rate() * (t - s)).exp() * hp_variance(params, s)
}

/// `E_0[N_t] = ∫_0^t E_0[λ_u] du`.
pub fn hp_count_mean(params: &HawkesParams, t: f64) -> f64 {
    let x = params.drift_rate() * t;
    params.lambda0 * t * expm1_ratio(x) + params.kappa * params.theta * t * t * expm1_ratio2(x)
}

/// `λ_t` from `λ_s` and the events in `(s, t]`.
pub fn intensity_step(params: &HawkesParams, lambda_s: f64, s: f64, t: f64, events: &[(f64, f64)]) -> f64 {
    let decay = (-params.kappa * (t - s)).exp();
    let jumps: f64 = events.iter().map(|&(ti, xi)| xi * (-params.kappa * (t - ti)).exp()).sum();
    params.theta + decay * (lambda_s - params.theta) + params.eta * jumps
}

/// Thinning simulator that can be advanced to arbitrary times.
///
/// Between events the intensity relaxes monotonically to `θ`, so
/// `max(λ, θ)` dominates it until the next event; pausing at a query time and
/// restarting the exponential proposal is exact by memorylessness.
#[derive(Debug, Clone)]
pub struct HawkesCursor {
    params: HawkesParams,
    marks: MarkSampler,
    time: f64,
    intensity: f64,
    events: usize,
}

impl HawkesCursor {
    pub fn new(params: &HawkesParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params: *params, marks: MarkSampler::new(params.marks)?, time: 0.0, intensity: params.lambda0, events: 0 })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Right-continuous intensity at the current time.
    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn event_count(&self) -> usize {
        self.events
    }

    /// Simulates up to `until` (inclusive), calling `on_event(time, mark)` for each event.
    pub fn advance<R, F>(&mut self, until: f64, rng: &mut R, mut on_event: F) -> Result<()>
    where
        R: Rng + ?Sized,
        F: FnMut(f64, f64),
    {
        let HawkesParams { theta, kappa, eta, .. } = self.params;
        if until < self.time {
            return Err(Error::domain("advance", format!("cannot move back from {} to {until}", self.time)));
        }
        loop {
            let bound = self.intensity.max(theta);
            let wait = if bound > 0.0 { rng.sample::<f64, _>(Exp1) / bound } else { f64::INFINITY };
            let candidate = self.time + wait;
            if candidate > until {
                self.intensity = theta + (self.intensity - theta) * (-kappa * (until - self.time)).exp();
                self.time = until;
                return Ok(());
            }
            let lambda = theta + (self.intensity - theta) * (-kappa * wait).exp();
            self.time = candidate;
            self.intensity = lambda;
            if rng.random::<f64>() * bound <= lambda {
                let mark = self.marks.sample(rng);
                self.intensity += eta * mark;
                self.events += 1;
                if self.events > MAX_EVENTS {
                    return Err(Error::Resource(format!("more than {MAX_EVENTS} events by t = {}", self.time)));
                }
                on_event(candidate, mark);
            }
        }
    }
}

/// A simulated path on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HawkesPath {
    pub horizon: f64,
    pub times: Vec<f64>,
    pub marks: Vec<f64>,
    pub terminal_intensity: f64,
    params: HawkesParams,
}

impl HawkesPath {
    pub fn params(&self) -> &HawkesParams {
        &self.params
    }

    pub fn event_count(&self) -> usize {
        self.times.len()
    }

    /// `λ_t`, right-continuous at event times.
    pub fn intensity_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::domain("intensity_at", format!("t = {t} outside [0, {}]", self.horizon)));
        }
        let HawkesParams { theta, kappa, eta, lambda0, .. } = self.params;
        let n = self.times.partition_point(|&ti| ti <= t);
        let jumps: f64 = self.times[..n]
            .iter()
            .zip(&self.marks[..n])
            .map(|(&ti, &xi)| xi * (-kappa * (t - ti)).exp())
            .sum();
        Ok(theta + (lambda0 - theta) * (-kappa * t).exp() + eta * jumps)
    }

    /// Events as `event_time,mark` CSV rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("event_time,mark\n");
        for (t, m) in self.times.iter().zip(&self.marks) {
            out.push_str(&format!("{t},{m}\n"));
        }
        out
    }
}

/// Exact sample path on `[0, horizon]` by Ogata thinning.
pub fn simulate_hawkes<R: Rng + ?Sized>(params: &HawkesParams, horizon: f64, rng: &mut R) -> Result<HawkesPath> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::domain("simulate_hawkes", format!("horizon must be nonnegative, got {horizon}")));
    }
    let mut cursor = HawkesCursor::new(params)?;
    let mut times = Vec::new();
    let mut marks = Vec::new();
    cursor.advance(horizon, rng, |t, m| {
        times.push(t);
        marks.push(m);
    })?;
    Ok(HawkesPath { horizon, times, marks, terminal_intensity: cursor.intensity(), params: *params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference() -> HawkesParams {
        HawkesParams::new(1.0, 2.0, 1.0, 2.0, MarkLaw::Deterministic { mean: 0.5 }).unwrap()
    }

    #[test]
    fn derived_quantities() {
        let d = reference().derived();
        assert_eq!(d.gamma, 1.5);
        assert_eq!(d.rho1, 0.25);
        assert!((d.rho2 - 0.25 * 2.0 / (-1.5)).abs() < 1e-15);
        assert!(d.stationary);
    }

    #[test]
    fn mean_closed_form() {
        let p = reference();
        assert_eq!(hp_mean(&p, 0.0), 2.0);
        let e = (-1.5f64).exp();
        let closed = 2.0 * e + (2.0 / -1.5) * (e - 1.0);
        assert!((hp_mean(&p, 1.0) - closed).abs() < 1e-14);
        assert!((hp_mean(&p, 1.0) - 1.48209).abs() < 1e-5);
        assert!((hp_mean(&p, 50.0) - 4.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn count_mean_integrates_the_mean() {
        let p = reference();
        for t in [0.5, 1.0, 3.0] {
            let q = crate::quadrature::gauss_kronrod(|u| hp_mean(&p, u), 0.0, t, crate::quadrature::Tolerance::relative(1e-13))
                .unwrap();
            assert!((hp_count_mean(&p, t) - q.value).abs() < 1e-12);
        }
        let poisson = HawkesParams::new(1.5, 2.0, 0.0, 1.5, MarkLaw::Deterministic { mean: 0.5 }).unwrap();
        assert!((hp_count_mean(&poisson, 4.0) - 6.0).abs() < 1e-12);
        let critical = HawkesParams::new(1.0, 0.5, 1.0, 2.0, MarkLaw::Deterministic { mean: 0.5 }).unwrap();
        assert!((hp_count_mean(&critical, 2.0) - (2.0 * 2.0 + 0.5 * 4.0 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_closed_form() {
        let p = reference();
        let d = p.derived();
        let dr = -d.gamma;
        for t in [0.1, 0.5, 1.0, 2.0, 7.0] {
            let e1 = (dr * t).exp();
            let e2 = (2.0 * dr * t).exp();
            let closed = (d.rho1 * p.lambda0 + d.rho2) / dr * (e2 - e1) - d.rho2 / (2.0 * dr) * (e2 - 1.0);
            assert!((hp_variance(&p, t) - closed).abs() < 1e-13, "t {t}");
        }
        assert_eq!(hp_variance(&p, 0.0), 0.0);
    }

    #[test]
    fn critical_limit_is_continuous() {
        let at = |eta: f64| HawkesParams::new(1.0, 2.0, eta, 2.0, MarkLaw::Exponential { mean: 0.5 }).unwrap();
        let critical = at(4.0);
        assert!((hp_mean(&critical, 2.0) - (2.0 + 2.0 * 2.0)).abs() < 1e-12);
        for t in [0.5, 3.0] {
            let near = at(4.0 * (1.0 + 1e-5));
            assert!((hp_mean(&critical, t) - hp_mean(&near, t)).abs() < 1e-3);
            assert!((hp_variance(&critical, t) - hp_variance(&near, t)).abs() < 1e-3 * hp_variance(&critical, t));
        }
    }

    #[test]
    fn covariance_reduces_to_variance() {
        let p = reference();
        assert_eq!(hp_covariance(&p, 1.3, 1.3), hp_variance(&p, 1.3));
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let c = hp_covariance(&p, 0.5, 0.5 + 0.25 * k as f64);
            assert!(c <= prev && c >= 0.0);
            prev = c;
        }
    }

    #[test]
    fn empty_horizon() {
        let path = simulate_hawkes(&reference(), 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(path.event_count(), 0);
        assert_eq!(path.terminal_intensity, 2.0);
    }

    #[test]
    fn intensity_without_events() {
        let p = reference();
        let path = HawkesPath { horizon: 1.0, times: vec![], marks: vec![], terminal_intensity: 0.0, params: p };
        let t = std::f64::consts::LN_2 / 2.0;
        assert!((path.intensity_at(t).unwrap() - 1.5).abs() < 1e-15);
        assert!(path.intensity_at(1.5).is_err());
    }

    #[test]
    fn jump_at_event_is_eta_times_mark() {
        let p = HawkesParams::new(1.0, 2.0, 0.8, 2.0, MarkLaw::Exponential { mean: 1.0 }).unwrap();
        let path = simulate_hawkes(&p, 5.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(path.event_count() > 0);
        let (t1, xi) = (path.times[0], path.marks[0]);
        let before = path.intensity_at(t1 * (1.0 - 1e-12)).unwrap();
        let at = path.intensity_at(t1).unwrap();
        assert!((at - before - 0.8 * xi).abs() < 1e-9);
        assert!((path.intensity_at(5.0).unwrap() - path.terminal_intensity).abs() < 1e-10);
    }

    #[test]
    fn autoregressive_relation() {
        let p = HawkesParams::new(0.7, 1.3, 0.9, 1.1, MarkLaw::Gamma { shape: 2.0, rate: 3.0 }).unwrap();
        for seed in 0..20 {
            let path = simulate_hawkes(&p, 8.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let (s, t) = (2.0 + 0.1 * seed as f64, 6.5);
            let between: Vec<(f64, f64)> = path
                .times
                .iter()
                .zip(&path.marks)
                .filter(|(&ti, _)| ti > s && ti <= t)
                .map(|(&ti, &xi)| (ti, xi))
                .collect();
            let stepped = intensity_step(&p, path.intensity_at(s).unwrap(), s, t, &between);
            let direct = path.intensity_at(t).unwrap();
            assert!(((stepped - direct) / direct).abs() < 1e-12);
        }
    }

    #[test]
    fn intensity_lower_bound() {
        let p = reference();
        let path = simulate_hawkes(&p, 10.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for k in 0..=100 {
            let t = k as f64 * 0.1;
            let floor = p.theta.min(p.lambda0 * (-p.kappa * t).exp());
            assert!(path.intensity_at(t).unwrap() >= floor);
        }
    }

    #[test]
    fn csv_export() {
        let p = reference();
        let path = simulate_hawkes(&p, 3.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let csv = path.to_csv();
        assert!(csv.starts_with("event_time,mark\n"));
        assert_eq!(csv.lines().count(), path.event_count() + 1);
    }

    #[test]
    fn rejects_bad_parameters() {
        let marks = MarkLaw::Deterministic { mean: 0.5 };
        assert!(HawkesParams::new(-1.0, 2.0, 1.0, 2.0, marks).is_err());
        assert!(HawkesParams::new(1.0, 0.0, 1.0, 2.0, marks).is_err());
        assert!(HawkesParams::new(1.0, 2.0, 1.0, 0.0, marks).is_err());
        assert!(HawkesParams::new(1.0, 2.0, 1.0, 2.0, MarkLaw::Exponential { mean: -1.0 }).is_err());
    }

    #[test]
    fn mark_law_json() {
        let m: MarkLaw = serde_json::from_str(r#"{"law":"gamma","shape":2,"rate":4}"#).unwrap();
        assert_eq!(m.mean(), 0.5);
        assert_eq!(m.variance(), 0.125);
        assert!(serde_json::from_str::<MarkLaw>(r#"{"law":"gamma","shape":2,"rate":4,"x":1}"#).is_err());
    }

    #[test]
    fn explosive_parameters_hit_event_cap() {
        let p = HawkesParams::new(1.0, 0.1, 5.0, 1.0, MarkLaw::Deterministic { mean: 1.0 }).unwrap();
        let err = simulate_hawkes(&p, 100.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }
}
