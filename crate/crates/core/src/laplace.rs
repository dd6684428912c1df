//! Numerical inversion of Laplace transforms.
//!
//! Gaver-Stehfest works on the real axis only and is the default for every
//! subordinator family. Fixed Talbot needs the transform on a complex contour
//! and is used where a family supplies its analytic continuation.

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::Value;

use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};

/// Default Gaver-Stehfest order.
pub const DEFAULT_ORDER: usize = 18;
/// Order used as the second opinion in [`order_stability`].
pub const CHECK_ORDER: usize = 14;
/// Relative disagreement between the two orders above which a transform is
/// flagged as ill-conditioned.
pub const STABILITY_TOL: f64 = 1e-4;

/// Order for `E[E_f(t)]`, whose transform grows like `1/s²` and magnifies rounding.
pub const MEAN_ORDER: usize = 16;

const MIN_ORDER: usize = 8;
const MAX_ORDER: usize = 20;

/// A Laplace transform `s -> F(s)`, defined at least for real `s > 0`.
pub trait Transform: Sync {
    fn eval(&self, s: f64) -> f64;

    /// Analytic continuation into the complex plane, when available.
    fn eval_complex(&self, _s: Complex64) -> Option<Complex64> {
        None
    }

    /// Stable identity used by [`CachedInverter`]; transforms without one are never cached.
    fn cache_key(&self) -> Option<String> {
        None
    }
}

impl<F: Fn(f64) -> f64 + Sync> Transform for F {
    fn eval(&self, s: f64) -> f64 {
        self(s)
    }
}

/// A transform given by a real closure and its complex extension.
pub struct Analytic<R, C> {
    pub real: R,
    pub complex: C,
    pub key: Option<String>,
}

impl<R, C> Transform for Analytic<R, C>
where
    R: Fn(f64) -> f64 + Sync,
    C: Fn(Complex64) -> Complex64 + Sync,
{
    fn eval(&self, s: f64) -> f64 {
        (self.real)(s)
    }

    fn eval_complex(&self, s: Complex64) -> Option<Complex64> {
        Some((self.complex)(s))
    }

    fn cache_key(&self) -> Option<String> {
        self.key.clone()
    }
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn stehfest_weights_exact(order: usize) -> Vec<f64> {
    let m = order / 2;
    (1..=order)
        .map(|k| {
            let mut sum = BigRational::zero();
            for j in k.div_ceil(2)..=k.min(m) {
                let num = BigInt::from(j).pow(m as u32) * factorial(2 * j);
                let den = factorial(m - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k);
                sum += BigRational::new(num, den);
            }
            if (k + m) % 2 == 1 {
                sum = -sum;
            }
            sum.to_f64().expect("Stehfest weight fits in f64")
        })
        .collect()
}

/// Stehfest weights `V_1..V_N`, computed once per order in exact rational
/// arithmetic and rounded to double.
pub fn stehfest_weights(order: usize) -> Result<Arc<Vec<f64>>> {
    if !order.is_multiple_of(2) || !(MIN_ORDER..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidParameter(format!(
            "Gaver-Stehfest order must be even and in [{MIN_ORDER}, {MAX_ORDER}], got {order}"
        )));
    }
    static TABLE: OnceLock<Vec<Arc<Vec<f64>>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        (MIN_ORDER..=MAX_ORDER)
            .step_by(2)
            .map(|n| Arc::new(stehfest_weights_exact(n)))
            .collect()
    });
    Ok(table[(order - MIN_ORDER) / 2].clone())
}

/// Gaver-Stehfest estimate of `f(t)` from its transform.
pub fn gaver_stehfest(transform: &dyn Transform, t: f64, order: usize) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain("gaver_stehfest", format!("t must be positive, got {t}")));
    }
    let weights = stehfest_weights(order)?;
    let a = LN_2 / t;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let s = (k + 1) as f64 * a;
        let v = transform.eval(s);
        if !v.is_finite() {
            return Err(Error::Inversion { abscissa: s });
        }
        acc += w * v;
    }
    Ok(acc * a)
}

/// Fixed-Talbot inversion with `nodes` contour points.
pub fn talbot(transform: &dyn Transform, t: f64, nodes: usize) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain("talbot", format!("t must be positive, got {t}")));
    }
    if nodes < 4 {
        return Err(Error::InvalidParameter(format!("Talbot needs at least 4 nodes, got {nodes}")));
    }
    let m = nodes as f64;
    let r = 2.0 * m / (5.0 * t);
    let at = |s: Complex64| -> Result<Complex64> {
        let v = transform.eval_complex(s).ok_or(Error::NotImplemented("complex evaluation"))?;
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::Inversion { abscissa: s.re });
        }
        Ok(v)
    };
    let f_r = at(Complex64::new(r, 0.0))?;
    let mut acc = 0.5 * (f_r * (r * t).exp()).re;
    for k in 1..nodes {
        let theta = k as f64 * std::f64::consts::PI / m;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let term = (s * t).exp() * at(s)? * Complex64::new(1.0, sigma);
        acc += term.re;
    }
    Ok(acc * r / m)
}

/// A numerical inversion strategy.
pub trait LaplaceInverter: Send + Sync {
    fn name(&self) -> &str;
    fn invert(&self, transform: &dyn Transform, t: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct GaverStehfest {
    pub order: usize,
}

impl Default for GaverStehfest {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER }
    }
}

impl LaplaceInverter for GaverStehfest {
    fn name(&self) -> &str {
        "gaver_stehfest"
    }

    fn invert(&self, transform: &dyn Transform, t: f64) -> Result<f64> {
        gaver_stehfest(transform, t, self.order)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Talbot {
    pub nodes: usize,
}

impl Default for Talbot {
    fn default() -> Self {
        Self { nodes: 24 }
    }
}

impl LaplaceInverter for Talbot {
    fn name(&self) -> &str {
        "talbot"
    }

    fn invert(&self, transform: &dyn Transform, t: f64) -> Result<f64> {
        talbot(transform, t, self.nodes)
    }
}

/// Memoizes inversions of keyed transforms per `(key, t, method)`.
pub struct CachedInverter<I> {
    inner: I,
    cache: Mutex<HashMap<(String, u64), f64>>,
}

impl<I: LaplaceInverter> CachedInverter<I> {
    pub fn new(inner: I) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn len(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<I: LaplaceInverter> LaplaceInverter for CachedInverter<I> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn invert(&self, transform: &dyn Transform, t: f64) -> Result<f64> {
        let Some(key) = transform.cache_key() else {
            return self.inner.invert(transform, t);
        };
        let key = (key, t.to_bits());
        if let Some(v) = self.cache.lock().ok().and_then(|c| c.get(&key).copied()) {
            return Ok(v);
        }
        let v = self.inner.invert(transform, t)?;
        if let Ok(mut c) = self.cache.lock() {
            c.insert(key, v);
        }
        Ok(v)
    }
}

type InverterFactory = fn(&Value) -> Result<Box<dyn LaplaceInverter>>;

/// Inversion methods selectable by name.
pub struct InverterRegistry {
    factories: HashMap<String, InverterFactory>,
}

impl Default for InverterRegistry {
    fn default() -> Self {
        let mut reg = Self { factories: HashMap::new() };
        reg.register("gaver_stehfest", |params| {
            let order = params.get("order").and_then(Value::as_u64).map_or(DEFAULT_ORDER, |o| o as usize);
            stehfest_weights(order)?;
            Ok(Box::new(GaverStehfest { order }))
        });
        reg.register("talbot", |params| {
            let nodes = params.get("nodes").and_then(Value::as_u64).map_or(24, |n| n as usize);
            if nodes < 4 {
                return Err(Error::InvalidParameter(format!("Talbot needs at least 4 nodes, got {nodes}")));
            }
            Ok(Box::new(Talbot { nodes }))
        });
        reg
    }
}

impl InverterRegistry {
    pub fn register(&mut self, name: impl Into<String>, factory: InverterFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        let mut names: Vec<_> = self.factories.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }

    pub fn build(&self, name: &str, params: &Value) -> Result<Box<dyn LaplaceInverter>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown inversion method `{name}`")))?;
        factory(params)
    }
}

/// Result of inverting the same transform at two orders.
#[derive(Debug, Clone, Copy)]
pub struct StabilityCheck {
    pub value: f64,
    pub check: f64,
    pub ill_conditioned: bool,
}

/// Inverts at [`DEFAULT_ORDER`] and [`CHECK_ORDER`] and flags relative
/// disagreement above [`STABILITY_TOL`] (relative to `max(|value|, 1)`).
pub fn order_stability(transform: &dyn Transform, t: f64) -> Result<StabilityCheck> {
    let value = gaver_stehfest(transform, t, DEFAULT_ORDER)?;
    let check = gaver_stehfest(transform, t, CHECK_ORDER)?;
    let scale = value.abs().max(1.0);
    Ok(StabilityCheck { value, check, ill_conditioned: (value - check).abs() > STABILITY_TOL * scale })
}

/// `E[E_f(t)]`, the mean of the inverse subordinator, from its transform `1/(s f(s))`.
pub fn invert_mean_inverse_subordinator(spec: &BernsteinSpec, t: f64) -> Result<f64> {
    let transform = |s: f64| 1.0 / (s * spec.function().eval(s));
    gaver_stehfest(&transform, t, MEAN_ORDER)
}
