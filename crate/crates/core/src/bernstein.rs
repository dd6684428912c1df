//! Bernstein functions `f(s) = a + b s + ∫ (1 - e^{-s x}) υ(dx)` and the
//! subordinators they generate.
//!
//! Each family implements [`BernsteinFunction`]; families are constructed by
//! name through a [`BernsteinRegistry`] from the JSON form used in experiment
//! configs, e.g. `{"family": "tempered_stable", "beta": 0.7, "nu": 0.5}`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::special::upper_incomplete_gamma;
use crate::subordinators::IncrementLaw;

/// Laplace exponent of a subordinator together with what is needed to simulate it.
pub trait BernsteinFunction: fmt::Debug + Send + Sync {
    /// Registry name of the family.
    fn family(&self) -> &'static str;

    /// `f(s)` for `s > 0`; callers validate `s`.
    fn eval(&self, s: f64) -> f64;

    /// Principal-branch continuation of `f` off the real axis.
    fn eval_complex(&self, _s: Complex64) -> Option<Complex64> {
        None
    }

    /// Tail of the Lévy measure plus the kill rate, `a + υ(s, ∞)`.
    fn levy_tail(&self, _s: f64) -> Result<f64> {
        Err(Error::NotImplemented("levy_tail"))
    }

    fn drift(&self) -> f64 {
        0.0
    }

    fn kill_rate(&self) -> f64 {
        0.0
    }

    /// `(β, ν)` when `f(s) = (s + ν)^β - ν^β`.
    fn tempered_stable(&self) -> Option<TemperedStable> {
        None
    }

    /// Law of the increment `D(t + dt) - D(t)`.
    fn increment_law(&self, dt: f64) -> Result<IncrementLaw>;

    fn to_json(&self) -> Value;
}

/// `f(s) = (s + ν)^β - ν^β`; `ν = 0` is the β-stable subordinator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperedStable {
    pub beta: f64,
    pub nu: f64,
}

impl TemperedStable {
    pub fn new(beta: f64, nu: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("stability index beta must lie in (0, 1), got {beta}")));
        }
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("tempering rate nu must be >= 0, got {nu}")));
        }
        Ok(Self { beta, nu })
    }

    pub fn stable(beta: f64) -> Result<Self> {
        Self::new(beta, 0.0)
    }

    /// Mean of `D(1)`, i.e. `f'(0+) = β ν^{β-1}`.
    pub fn mean_rate(&self) -> f64 {
        self.beta * self.nu.powf(self.beta - 1.0)
    }
}

impl BernsteinFunction for TemperedStable {
    fn family(&self) -> &'static str {
        "tempered_stable"
    }

    fn eval(&self, s: f64) -> f64 {
        if self.nu == 0.0 {
            s.powf(self.beta)
        } else {
            // ν^β ((1 + s/ν)^β - 1) without cancellation for small s
            self.nu.powf(self.beta) * (self.beta * (s / self.nu).ln_1p()).exp_m1()
        }
    }

    fn eval_complex(&self, s: Complex64) -> Option<Complex64> {
        Some((s + self.nu).powf(self.beta) - self.nu.powf(self.beta))
    }

    fn levy_tail(&self, s: f64) -> Result<f64> {
        let beta = self.beta;
        if self.nu == 0.0 {
            return Ok(s.powf(-beta) / gamma(1.0 - beta));
        }
        let inc = upper_incomplete_gamma(-beta, self.nu * s)?;
        Ok(beta / gamma(1.0 - beta) * self.nu.powf(beta) * inc)
    }

    fn tempered_stable(&self) -> Option<TemperedStable> {
        Some(*self)
    }

    fn increment_law(&self, dt: f64) -> Result<IncrementLaw> {
        IncrementLaw::tempered_stable(self.beta, self.nu, dt)
    }

    fn to_json(&self) -> Value {
        json!({"family": "tempered_stable", "beta": self.beta, "nu": self.nu})
    }
}

/// Gamma subordinator, `f(s) = p ln(1 + s/q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSubordinator {
    pub p: f64,
    pub q: f64,
}

impl GammaSubordinator {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0 && q > 0.0) || !p.is_finite() || !q.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma subordinator needs p, q > 0, got p = {p}, q = {q}")));
        }
        Ok(Self { p, q })
    }
}

impl BernsteinFunction for GammaSubordinator {
    fn family(&self) -> &'static str {
        "gamma"
    }

    fn eval(&self, s: f64) -> f64 {
        self.p * (s / self.q).ln_1p()
    }

    fn eval_complex(&self, s: Complex64) -> Option<Complex64> {
        Some(self.p * (s / self.q + 1.0).ln())
    }

    fn increment_law(&self, dt: f64) -> Result<IncrementLaw> {
        IncrementLaw::gamma(self.p * dt, self.q)
    }

    fn to_json(&self) -> Value {
        json!({"family": "gamma", "p": self.p, "q": self.q})
    }
}

/// Inverse Gaussian subordinator, `f(s) = δ (sqrt(2s + g²) - g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGaussianSubordinator {
    pub delta: f64,
    pub g: f64,
}

impl InverseGaussianSubordinator {
    pub fn new(delta: f64, g: f64) -> Result<Self> {
        if !(delta > 0.0 && g > 0.0) || !delta.is_finite() || !g.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "inverse Gaussian subordinator needs delta, g > 0, got delta = {delta}, g = {g}"
            )));
        }
        Ok(Self { delta, g })
    }
}

impl BernsteinFunction for InverseGaussianSubordinator {
    fn family(&self) -> &'static str {
        "inverse_gaussian"
    }

    fn eval(&self, s: f64) -> f64 {
        let root = (2.0 * s + self.g * self.g).sqrt();
        self.delta * 2.0 * s / (root + self.g)
    }

    fn eval_complex(&self, s: Complex64) -> Option<Complex64> {
        Some(self.delta * ((2.0 * s + self.g * self.g).sqrt() - self.g))
    }

    fn increment_law(&self, dt: f64) -> Result<IncrementLaw> {
        let scale = self.delta * dt;
        IncrementLaw::inverse_gaussian(scale / self.g, scale * scale)
    }

    fn to_json(&self) -> Value {
        json!({"family": "inverse_gaussian", "delta": self.delta, "g": self.g})
    }
}

/// Kill rate, drift and a finite list of Lévy-measure atoms `(x, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomBernstein {
    pub a: f64,
    pub b: f64,
    pub atoms: Vec<(f64, f64)>,
}

impl CustomBernstein {
    pub fn new(a: f64, b: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if !(a >= 0.0) || !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("kill rate and drift must be >= 0, got a = {a}, b = {b}")));
        }
        for &(x, w) in &atoms {
            if !(x > 0.0) || !(w > 0.0) || !x.is_finite() || !w.is_finite() {
                return Err(Error::InvalidParameter(format!("measure atoms need x > 0 and w > 0, got ({x}, {w})")));
            }
        }
        if a == 0.0 && b == 0.0 && atoms.is_empty() {
            return Err(Error::InvalidParameter("custom Bernstein function is identically zero".into()));
        }
        Ok(Self { a, b, atoms })
    }

    pub fn drift_only(b: f64) -> Result<Self> {
        Self::new(0.0, b, Vec::new())
    }
}

impl BernsteinFunction for CustomBernstein {
    fn family(&self) -> &'static str {
        "custom"
    }

    fn eval(&self, s: f64) -> f64 {
        let jumps: f64 = self.atoms.iter().map(|&(x, w)| -w * (-s * x).exp_m1()).sum();
        self.a + self.b * s + jumps
    }

    fn eval_complex(&self, s: Complex64) -> Option<Complex64> {
        let jumps: Complex64 = self.atoms.iter().map(|&(x, w)| w * (1.0 - (-s * x).exp())).sum();
        Some(self.a + self.b * s + jumps)
    }

    fn levy_tail(&self, s: f64) -> Result<f64> {
        Ok(self.a + self.atoms.iter().filter(|&&(x, _)| x > s).map(|&(_, w)| w).sum::<f64>())
    }

    fn drift(&self) -> f64 {
        self.b
    }

    fn kill_rate(&self) -> f64 {
        self.a
    }

    fn increment_law(&self, dt: f64) -> Result<IncrementLaw> {
        IncrementLaw::compound(self.a, self.b, &self.atoms, dt)
    }

    fn to_json(&self) -> Value {
        let atoms: Vec<[f64; 2]> = self.atoms.iter().map(|&(x, w)| [x, w]).collect();
        json!({"family": "custom", "a": self.a, "b": self.b, "atoms": atoms})
    }
}

/// A validated Bernstein function, cheap to clone and share between threads.
#[derive(Clone)]
pub struct BernsteinSpec(Arc<dyn BernsteinFunction>);

impl fmt::Debug for BernsteinSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl BernsteinSpec {
    pub fn new(function: impl BernsteinFunction + 'static) -> Self {
        Self(Arc::new(function))
    }

    pub fn tempered_stable(beta: f64, nu: f64) -> Result<Self> {
        Ok(Self::new(TemperedStable::new(beta, nu)?))
    }

    pub fn stable(beta: f64) -> Result<Self> {
        Self::tempered_stable(beta, 0.0)
    }

    pub fn gamma(p: f64, q: f64) -> Result<Self> {
        Ok(Self::new(GammaSubordinator::new(p, q)?))
    }

    pub fn inverse_gaussian(delta: f64, g: f64) -> Result<Self> {
        Ok(Self::new(InverseGaussianSubordinator::new(delta, g)?))
    }

    pub fn custom(a: f64, b: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self::new(CustomBernstein::new(a, b, atoms)?))
    }

    pub fn function(&self) -> &dyn BernsteinFunction {
        self.0.as_ref()
    }

    pub fn family(&self) -> &'static str {
        self.0.family()
    }

    pub fn eval_f(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::domain("eval_f", format!("s must be positive, got {s}")));
        }
        Ok(self.0.eval(s))
    }

    pub fn levy_tail(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::domain("levy_tail", format!("s must be positive, got {s}")));
        }
        self.0.levy_tail(s)
    }

    pub fn drift_coefficient(&self) -> f64 {
        self.0.drift()
    }

    pub fn tempered_stable_params(&self) -> Option<TemperedStable> {
        self.0.tempered_stable()
    }

    pub fn to_json(&self) -> Value {
        self.0.to_json()
    }
}

type SpecFactory = fn(&Value) -> Result<BernsteinSpec>;

/// Families constructible by name.
pub struct BernsteinRegistry {
    factories: HashMap<String, SpecFactory>,
}

fn params<'de, T: Deserialize<'de>>(family: &str, value: &'de Value) -> Result<T> {
    T::deserialize(value).map_err(|e| Error::InvalidParameter(format!("{family}: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemperedStableJson {
    #[allow(dead_code)]
    family: String,
    beta: f64,
    #[serde(default)]
    nu: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StableJson {
    #[allow(dead_code)]
    family: String,
    beta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaJson {
    #[allow(dead_code)]
    family: String,
    p: f64,
    q: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InverseGaussianJson {
    #[allow(dead_code)]
    family: String,
    delta: f64,
    g: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomJson {
    #[allow(dead_code)]
    family: String,
    #[serde(default)]
    a: f64,
    #[serde(default)]
    b: f64,
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
}

impl Default for BernsteinRegistry {
    fn default() -> Self {
        let mut reg = Self { factories: HashMap::new() };
        reg.register("tempered_stable", |v| {
            let p: TemperedStableJson = params("tempered_stable", v)?;
            BernsteinSpec::tempered_stable(p.beta, p.nu)
        });
        reg.register("stable", |v| {
            let p: StableJson = params("stable", v)?;
            BernsteinSpec::stable(p.beta)
        });
        reg.register("gamma", |v| {
            let p: GammaJson = params("gamma", v)?;
            BernsteinSpec::gamma(p.p, p.q)
        });
        reg.register("inverse_gaussian", |v| {
            let p: InverseGaussianJson = params("inverse_gaussian", v)?;
            BernsteinSpec::inverse_gaussian(p.delta, p.g)
        });
        reg.register("custom", |v| {
            let p: CustomJson = params("custom", v)?;
            BernsteinSpec::custom(p.a, p.b, p.atoms)
        });
        reg
    }
}

impl BernsteinRegistry {
    pub fn register(&mut self, family: impl Into<String>, factory: SpecFactory) {
        self.factories.insert(family.into(), factory);
    }

    pub fn families(&self) -> Vec<&str> {
        let mut names: Vec<_> = self.factories.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }

    pub fn build(&self, value: &Value) -> Result<BernsteinSpec> {
        let family = value
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidParameter("subordinator spec needs a string `family` field".into()))?;
        let factory = self
            .factories
            .get(family)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown subordinator family `{family}`")))?;
        factory(value)
    }
}

impl Serialize for BernsteinSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BernsteinSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        BernsteinRegistry::default().build(&value).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn named_variants() -> Vec<BernsteinSpec> {
        vec![
            BernsteinSpec::tempered_stable(0.7, 0.5).unwrap(),
            BernsteinSpec::tempered_stable(0.3, 2.0).unwrap(),
            BernsteinSpec::stable(0.5).unwrap(),
            BernsteinSpec::gamma(1.0, 1.0).unwrap(),
            BernsteinSpec::gamma(2.5, 0.4).unwrap(),
            BernsteinSpec::inverse_gaussian(1.0, 2.0).unwrap(),
            BernsteinSpec::custom(0.0, 0.5, vec![(0.2, 1.0), (3.0, 0.1)]).unwrap(),
        ]
    }

    #[test]
    fn closed_form_values() {
        let stable = BernsteinSpec::stable(0.5).unwrap();
        assert!((stable.eval_f(4.0).unwrap() - 2.0).abs() < 1e-15);
        let ts = BernsteinSpec::tempered_stable(0.5, 1.0).unwrap();
        assert!((ts.eval_f(1.0).unwrap() - (2.0f64.sqrt() - 1.0)).abs() < 1e-15);
        let g = BernsteinSpec::gamma(1.0, 1.0).unwrap();
        assert!((g.eval_f(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_positive_argument_is_a_domain_error() {
        let spec = BernsteinSpec::stable(0.5).unwrap();
        assert!(matches!(spec.eval_f(0.0), Err(Error::Domain { .. })));
        assert!(matches!(spec.eval_f(-1.0), Err(Error::Domain { .. })));
        assert!(matches!(spec.levy_tail(0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn construction_validates() {
        assert!(BernsteinSpec::tempered_stable(1.0, 0.5).is_err());
        assert!(BernsteinSpec::tempered_stable(0.0, 0.5).is_err());
        assert!(BernsteinSpec::tempered_stable(0.5, -1.0).is_err());
        assert!(BernsteinSpec::gamma(0.0, 1.0).is_err());
        assert!(BernsteinSpec::inverse_gaussian(1.0, -2.0).is_err());
        assert!(BernsteinSpec::custom(-1.0, 0.0, vec![]).is_err());
        assert!(BernsteinSpec::custom(0.0, 1.0, vec![(0.0, 1.0)]).is_err());
    }

    #[test]
    fn drift_coefficient() {
        assert_eq!(BernsteinSpec::custom(0.0, 1.0, vec![]).unwrap().drift_coefficient(), 1.0);
        assert_eq!(BernsteinSpec::tempered_stable(0.5, 1.0).unwrap().drift_coefficient(), 0.0);
        assert_eq!(BernsteinSpec::gamma(1.0, 1.0).unwrap().drift_coefficient(), 0.0);
    }

    #[test]
    fn pure_drift_is_linear() {
        let spec = BernsteinSpec::custom(0.0, 1.7, vec![]).unwrap();
        for s in [1e-3, 0.5, 2.0, 1e3] {
            assert_eq!(spec.eval_f(s).unwrap(), 1.7 * s);
        }
    }

    #[test]
    fn stable_alias_matches_untempered() {
        let a = BernsteinSpec::stable(0.6).unwrap();
        let b = BernsteinSpec::tempered_stable(0.6, 0.0).unwrap();
        for k in 0..50 {
            let s = 10f64.powf(-3.0 + 6.0 * k as f64 / 49.0);
            assert_eq!(a.eval_f(s).unwrap(), b.eval_f(s).unwrap());
        }
    }

    #[test]
    fn tempered_stable_small_s_slope() {
        let spec = BernsteinSpec::tempered_stable(0.5, 1.0).unwrap();
        let s = 1e-6;
        let slope = spec.eval_f(s).unwrap() / s;
        assert!((slope - 0.5).abs() < 1e-4);
    }

    #[test]
    fn nonnegative_monotone_concave_on_log_grid() {
        let grid: Vec<f64> = (0..121).map(|k| 10f64.powf(-3.0 + k as f64 * 0.05)).collect();
        for spec in named_variants() {
            let vals: Vec<f64> = grid.iter().map(|&s| spec.eval_f(s).unwrap()).collect();
            for w in vals.windows(2) {
                assert!(w[0] >= 0.0 && w[1] >= w[0], "{spec:?} not monotone");
            }
            for i in 1..grid.len() - 1 {
                let left = (vals[i] - vals[i - 1]) / (grid[i] - grid[i - 1]);
                let right = (vals[i + 1] - vals[i]) / (grid[i + 1] - grid[i]);
                assert!(right <= left * (1.0 + 1e-9) + 1e-12, "{spec:?} not concave near {}", grid[i]);
            }
        }
    }

    #[test]
    fn stable_tail_exact() {
        let spec = BernsteinSpec::stable(0.5).unwrap();
        let tail = spec.levy_tail(1.0).unwrap();
        assert!((tail - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tempered_tail_against_direct_quadrature() {
        use crate::quadrature::{gauss_kronrod, Tolerance};
        let (beta, nu) = (0.5, 1.0);
        let spec = BernsteinSpec::tempered_stable(beta, nu).unwrap();
        let tail = spec.levy_tail(1.0).unwrap();
        // ∫_1^∞ c x^{-3/2} e^{-x} dx with x = 1/u on (0, 1]
        let c = beta / gamma(1.0 - beta);
        let density = |u: f64| if u <= 0.0 { 0.0 } else { c * u.powf(beta - 1.0) * (-1.0 / u).exp() };
        let coarse = gauss_kronrod(density, 0.0, 1.0, Tolerance::relative(1e-8)).unwrap().value;
        let fine = gauss_kronrod(density, 0.0, 1.0, Tolerance::relative(5e-9)).unwrap().value;
        assert!((coarse - fine).abs() < 1e-8);
        assert!((tail - fine).abs() < 1e-7 * fine, "{tail} vs {fine}");
    }

    #[test]
    fn tail_not_available_for_gamma() {
        let spec = BernsteinSpec::gamma(1.0, 1.0).unwrap();
        assert_eq!(spec.levy_tail(1.0).unwrap_err(), Error::NotImplemented("levy_tail"));
    }

    #[test]
    fn custom_tail_sums_atoms_above() {
        let spec = BernsteinSpec::custom(0.25, 0.0, vec![(0.5, 1.0), (2.0, 3.0)]).unwrap();
        assert_eq!(spec.levy_tail(0.1).unwrap(), 4.25);
        assert_eq!(spec.levy_tail(1.0).unwrap(), 3.25);
        assert_eq!(spec.levy_tail(5.0).unwrap(), 0.25);
    }

    #[test]
    fn complex_extension_agrees_on_real_axis() {
        for spec in named_variants() {
            for s in [0.01, 0.7, 12.0] {
                let z = spec.function().eval_complex(Complex64::new(s, 0.0)).unwrap();
                assert!((z.re - spec.eval_f(s).unwrap()).abs() < 1e-12 * (1.0 + z.re.abs()));
                assert!(z.im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn registry_round_trip() {
        let reg = BernsteinRegistry::default();
        assert_eq!(reg.families(), vec!["custom", "gamma", "inverse_gaussian", "stable", "tempered_stable"]);
        for spec in named_variants() {
            let back = reg.build(&spec.to_json()).unwrap();
            assert_eq!(back.to_json(), spec.to_json());
        }
        let stable = reg.build(&json!({"family": "stable", "beta": 0.4})).unwrap();
        assert_eq!(stable.tempered_stable_params(), Some(TemperedStable { beta: 0.4, nu: 0.0 }));
    }

    #[test]
    fn registry_rejects_bad_input() {
        let reg = BernsteinRegistry::default();
        assert!(reg.build(&json!({"family": "levy"})).is_err());
        assert!(reg.build(&json!({"beta": 0.5})).is_err());
        assert!(reg.build(&json!({"family": "gamma", "p": 1.0, "q": 1.0, "r": 2.0})).is_err());
        assert!(reg.build(&json!({"family": "tempered_stable", "beta": 1.5, "nu": 0.5})).is_err());
    }

    #[test]
    fn deserializes_through_registry() {
        let spec: BernsteinSpec =
            serde_json::from_str(r#"{"family":"custom","a":0,"b":1,"atoms":[[0.5,2.0]]}"#).unwrap();
        assert_eq!(spec.family(), "custom");
        assert_eq!(spec.drift_coefficient(), 1.0);
    }

    proptest! {
        #[test]
        fn tail_nonincreasing(beta in 0.05f64..0.95, nu in 0.0f64..3.0, s1 in 0.01f64..5.0, ds in 0.0f64..5.0) {
            let spec = BernsteinSpec::tempered_stable(beta, nu).unwrap();
            let a = spec.levy_tail(s1).unwrap();
            let b = spec.levy_tail(s1 + ds).unwrap();
            prop_assert!(b <= a * (1.0 + 1e-9));
        }

        #[test]
        fn tempered_stable_concave(beta in 0.05f64..0.95, nu in 0.0f64..5.0, s in 1e-3f64..100.0, h in 1e-3f64..10.0) {
            let spec = BernsteinSpec::tempered_stable(beta, nu).unwrap();
            let f0 = spec.eval_f(s).unwrap();
            let f1 = spec.eval_f(s + h).unwrap();
            let f2 = spec.eval_f(s + 2.0 * h).unwrap();
            prop_assert!(f1 >= f0 && f2 >= f1);
            prop_assert!(f2 - f1 <= (f1 - f0) * (1.0 + 1e-9) + 1e-14);
        }
    }
}
