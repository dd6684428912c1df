//! Numerical integration on finite intervals.
//!
//! Two rules are provided:
//!
//! * [`gauss_kronrod`]: globally adaptive 7/15-point Gauss-Kronrod bisection, the
//!   workhorse for integrands that are bounded (possibly after a change of
//!   variables that removes an algebraic endpoint singularity).
//! * [`tanh_sinh`]: double-exponential quadrature, used where the integrand has
//!   an integrable endpoint singularity of unknown order (kernels obtained by
//!   numerical transform inversion).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Value and error estimate of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self { abs: 1e-300, rel, max_subdivisions: 2000 }
    }

    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_subdivisions: 2000 }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut resabs = kronrod.abs();
    let mut fv = [(0.0, 0.0); 7];
    for (j, fvj) in fv.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        *fvj = (f1, f2);
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for (j, &(f1, f2)) in fv.iter().enumerate() {
        resasc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = kronrod * half;
    resasc *= half.abs();
    resabs *= half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    let round_off = 50.0 * f64::EPSILON * resabs;
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(round_off);
    }
    if !value.is_finite() || !error.is_finite() {
        return Err(Error::Integration(format!("non-finite integrand on [{a}, {b}]")));
    }
    Ok(Segment { a, b, value, error })
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let first = kronrod15(&mut f, a, b)?;
    let mut evaluations = 15;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut subdivisions = 1;
    while total_err > tol.target(total) {
        if subdivisions >= tol.max_subdivisions {
            return Err(Error::Integration(format!(
                "{subdivisions} subdivisions on [{a}, {b}], error estimate {total_err:e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval can no longer be split in floating point
            return Err(Error::Integration(format!("interval [{}, {}] exhausted", worst.a, worst.b)));
        }
        let left = kronrod15(&mut f, worst.a, mid)?;
        let right = kronrod15(&mut f, mid, worst.b)?;
        evaluations += 30;
        subdivisions += 1;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if total_err <= tol.target(total) {
            // re-sum to shed the drift of the running totals
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    Ok(Estimate { value: total, error: total_err, evaluations })
}

/// Tanh-sinh quadrature over `[a, b]`.
///
/// The integrand receives the abscissa together with its distances to the two
/// endpoints, so kernels singular at an endpoint can be evaluated without the
/// cancellation in `x - a`.
pub fn tanh_sinh<F: FnMut(f64, f64, f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let half = 0.5 * (b - a);
    const MAX_LEVEL: usize = 9;
    const T_MAX: f64 = 4.5;
    let half_pi = std::f64::consts::FRAC_PI_2;

    // node at parameter u: weight and distances from the endpoints
    let mut eval = |u: f64| -> Option<f64> {
        let sh = u.sinh();
        let ch = u.cosh();
        let arg = half_pi * sh;
        // 1 - tanh(arg) and 1 + tanh(arg), computed without cancellation
        let e = (-2.0 * arg.abs()).exp();
        let small = 2.0 * e / (1.0 + e);
        let (one_minus, one_plus) = if arg >= 0.0 { (small, 2.0 - small) } else { (2.0 - small, small) };
        let dist_b = half * one_minus;
        let dist_a = half * one_plus;
        if dist_a <= 0.0 || dist_b <= 0.0 {
            return None;
        }
        let cosh_arg = arg.cosh();
        let w = half_pi * ch / (cosh_arg * cosh_arg);
        let x = if dist_a < dist_b { a + dist_a } else { b - dist_b };
        let fx = f(x, dist_a, dist_b);
        Some(w * fx * half)
    };

    let mut h = 1.0;
    let mut sum = eval(0.0).unwrap_or(0.0);
    let mut evaluations = 1;
    let mut k = 1;
    loop {
        let u = k as f64 * h;
        if u > T_MAX {
            break;
        }
        if let Some(v) = eval(u) {
            sum += v;
            evaluations += 1;
        }
        if let Some(v) = eval(-u) {
            sum += v;
            evaluations += 1;
        }
        k += 1;
    }
    let mut estimate = sum * h;
    let mut previous = f64::NAN;
    for _level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        loop {
            let u = k as f64 * h;
            if u > T_MAX {
                break;
            }
            if let Some(v) = eval(u) {
                sum += v;
                evaluations += 1;
            }
            if let Some(v) = eval(-u) {
                sum += v;
                evaluations += 1;
            }
            k += 2;
        }
        previous = estimate;
        estimate = sum * h;
        if !estimate.is_finite() {
            return Err(Error::Integration(format!("non-finite tanh-sinh sum on [{a}, {b}]")));
        }
        let diff = (estimate - previous).abs();
        if diff <= rel_tol * estimate.abs().max(f64::MIN_POSITIVE) {
            return Ok(Estimate { value: estimate, error: diff, evaluations });
        }
    }
    Err(Error::Integration(format!(
        "tanh-sinh did not converge on [{a}, {b}]: last change {:e}",
        (estimate - previous).abs()
    )))
}
