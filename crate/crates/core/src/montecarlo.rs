//! Monte Carlo estimates of intensity moments, by composing simulated Hawkes
//! paths with independent inverse-subordinator samples.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{SumTransformVariant, TfhpModel};
use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use crate::hawkes::{HawkesCursor, HawkesParams};
use crate::subordinators::{check_times, InverseSampler};

/// Largest `|z|` accepted by [`compare`].
pub const Z_GATE: f64 = 4.0;
pub const JACKKNIFE_BLOCKS: usize = 100;
pub const MIN_PATHS: usize = 100;
/// A report is eligible only when `γ · bias_bound < BIAS_FRACTION · min(se)`.
pub const BIAS_FRACTION: f64 = 0.25;
const PILOT_PATHS: usize = 2_000;
const PILOT_STEP: f64 = 1e-2;

/// Independent draws inside one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubStream {
    Clock = 0,
    Hawkes = 1,
}

/// Generator for `(seed, path, sub)`; distinct triples give non-overlapping streams.
pub fn path_rng(seed: u64, path: u64, sub: SubStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path.wrapping_mul(2).wrapping_add(sub as u64));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Mean,
    Variance,
    Covariance,
    CountMean,
    Phi,
    LtSum,
    LtDiff,
}

impl Quantity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::Mean => "mean",
            Quantity::Variance => "variance",
            Quantity::Covariance => "covariance",
            Quantity::CountMean => "count_mean",
            Quantity::Phi => "phi",
            Quantity::LtSum => "lt_sum",
            Quantity::LtDiff => "lt_diff",
        }
    }
}

/// Identifies one row: a quantity at time `t` or at the pair `(s, t)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RowKey {
    pub quantity: Quantity,
    pub s: Option<f64>,
    pub t: f64,
}

impl RowKey {
    pub fn at(quantity: Quantity, t: f64) -> Self {
        Self { quantity, s: None, t }
    }

    pub fn pair(quantity: Quantity, s: f64, t: f64) -> Self {
        Self { quantity, s: Some(s), t }
    }

    fn bits(&self) -> (Quantity, Option<u64>, u64) {
        (self.quantity, self.s.map(f64::to_bits), self.t.to_bits())
    }
}

impl PartialEq for RowKey {
    fn eq(&self, other: &Self) -> bool {
        self.bits() == other.bits()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub key: RowKey,
    pub analytic: Option<f64>,
    pub estimate: f64,
    pub se: f64,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub rows: Vec<ReportRow>,
    pub n_paths: usize,
    pub seed: u64,
    pub bias_bound: f64,
    pub gamma: f64,
    pub lemma41_variant: Option<SumTransformVariant>,
    pub advisory: bool,
}

impl MomentReport {
    fn new(rows: Vec<ReportRow>, n_paths: usize, seed: u64, bias_bound: f64, gamma: f64) -> Self {
        let mut report = Self { rows, n_paths, seed, bias_bound, gamma, lemma41_variant: None, advisory: false };
        report.advisory = !report.bias_negligible();
        report
    }

    pub fn keys(&self) -> Vec<RowKey> {
        self.rows.iter().map(|r| r.key).collect()
    }

    pub fn row(&self, key: RowKey) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    pub fn min_se(&self) -> f64 {
        self.rows.iter().map(|r| r.se).fold(f64::INFINITY, f64::min)
    }

    fn bias_negligible(&self) -> bool {
        self.gamma.abs() * self.bias_bound < BIAS_FRACTION * self.min_se()
    }

    pub fn with_variant(mut self, variant: SumTransformVariant) -> Self {
        self.lemma41_variant = Some(variant);
        self
    }

    /// One row per quantity with columns `quantity,s,t,analytic,estimate,se,z`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,s,t,analytic,estimate,se,z\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.key.quantity.as_str(),
                opt(r.key.s),
                r.key.t,
                opt(r.analytic),
                r.estimate,
                r.se,
                opt(r.z)
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Consistency(format!("report serialization: {e}")))
    }
}

/// An analytic value to be attached to a report row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticValue {
    pub key: RowKey,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub max_abs_z: f64,
    pub failures: Vec<RowKey>,
    pub advisory: bool,
}

/// Attaches analytic values and z-scores to `report` and gates every row at `|z| < Z_GATE`.
pub fn compare(analytic: &[AnalyticValue], report: &mut MomentReport) -> Result<Verdict> {
    if report.rows.is_empty() {
        return Err(Error::Empty("report"));
    }
    if analytic.len() != report.rows.len() {
        return Err(Error::IndexMismatch(format!("{} analytic values for {} rows", analytic.len(), report.rows.len())));
    }
    let mut failures = Vec::new();
    let mut max_abs_z: f64 = 0.0;
    for row in &mut report.rows {
        let value = analytic
            .iter()
            .find(|a| a.key == row.key)
            .ok_or_else(|| Error::IndexMismatch(format!("no analytic value for {:?}", row.key)))?
            .value;
        let diff = value - row.estimate;
        let z = if row.se > 0.0 {
            diff / row.se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        row.analytic = Some(value);
        row.z = Some(z);
        max_abs_z = max_abs_z.max(z.abs());
        if !(z.abs() < Z_GATE) {
            failures.push(row.key);
        }
    }
    Ok(Verdict { pass: failures.is_empty(), max_abs_z, failures, advisory: report.advisory })
}

/// Mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (m, (ss / (n - 1.0) / n).sqrt())
}

/// Unbiased sample covariance of `(x, y)` with a delete-a-block jackknife standard error.
pub fn covariance_jackknife(x: &[f64], y: &[f64], blocks: usize) -> (f64, f64) {
    let n = x.len();
    let (mx, _) = mean_se(x);
    let (my, _) = mean_se(y);
    let blocks = blocks.clamp(2, n);
    let mut sums = vec![[0.0f64; 4]; blocks];
    for i in 0..n {
        let b = i * blocks / n;
        let (dx, dy) = (x[i] - mx, y[i] - my);
        let s = &mut sums[b];
        s[0] += dx;
        s[1] += dy;
        s[2] += dx * dy;
        s[3] += 1.0;
    }
    let total = sums.iter().fold([0.0; 4], |mut acc, s| {
        for k in 0..4 {
            acc[k] += s[k];
        }
        acc
    });
    let cov = |s: [f64; 4]| (s[2] - s[0] * s[1] / s[3]) / (s[3] - 1.0);
    let full = cov(total);
    let leave_out: Vec<f64> = sums
        .iter()
        .map(|s| cov([total[0] - s[0], total[1] - s[1], total[2] - s[2], total[3] - s[3]]))
        .collect();
    let centre = leave_out.iter().sum::<f64>() / blocks as f64;
    let spread: f64 = leave_out.iter().map(|v| (v - centre) * (v - centre)).sum();
    let b = blocks as f64;
    (full, ((b - 1.0) / b * spread).sqrt())
}

/// Step size satisfying the bias rule for a target standard error, with a 20% margin.
pub fn bias_rule_step(gamma: f64, target_se: f64) -> f64 {
    0.8 * BIAS_FRACTION * target_se / gamma.abs()
}

/// Internal time at which each path is read.
enum Clock {
    Identity,
    Inverse(InverseSampler),
}

struct Grid {
    points: Vec<f64>,
}

impl Grid {
    fn new(times: &[f64], pairs: &[(f64, f64)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &t in times {
            set.insert(t.to_bits());
        }
        for &(s, t) in pairs {
            if s > t {
                return Err(Error::domain("pairs", format!("need s <= t, got ({s}, {t})")));
            }
            set.insert(s.to_bits());
            set.insert(t.to_bits());
        }
        let mut points: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
        points.sort_by(f64::total_cmp);
        check_times(&points)?;
        Ok(Self { points })
    }

    fn index(&self, t: f64) -> usize {
        self.points.iter().position(|p| p.to_bits() == t.to_bits()).expect("time on grid")
    }
}

/// Per-path samples, column-major over the grid.
struct Samples {
    intensity: Vec<Vec<f64>>,
    counts: Vec<Vec<f64>>,
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths < MIN_PATHS {
        return Err(Error::InvalidParameter(format!("need at least {MIN_PATHS} paths, got {n_paths}")));
    }
    Ok(())
}

fn simulate(params: &HawkesParams, clock: &Clock, grid: &Grid, n_paths: usize, seed: u64) -> Result<Samples> {
    let k = grid.points.len();
    let cursor = HawkesCursor::new(params)?;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut internal = grid.points.clone();
            if let Clock::Inverse(sampler) = clock {
                let mut rng = path_rng(seed, path, SubStream::Clock);
                sampler.sample_into(&grid.points, &mut internal, &mut rng)?;
            }
            let mut rng = path_rng(seed, path, SubStream::Hawkes);
            let mut hp = cursor.clone();
            let mut lambda = Vec::with_capacity(k);
            let mut count = Vec::with_capacity(k);
            for &u in &internal {
                hp.advance(u, &mut rng, |_, _| {})?;
                lambda.push(hp.intensity());
                count.push(hp.event_count() as f64);
            }
            Ok((lambda, count))
        })
        .collect::<Result<_>>()?;
    let mut intensity = vec![Vec::with_capacity(n_paths); k];
    let mut counts = vec![Vec::with_capacity(n_paths); k];
    for (lambda, count) in rows {
        for j in 0..k {
            intensity[j].push(lambda[j]);
            counts[j].push(count[j]);
        }
    }
    Ok(Samples { intensity, counts })
}

fn row(key: RowKey, (estimate, se): (f64, f64)) -> ReportRow {
    ReportRow { key, analytic: None, estimate, se, z: None }
}

fn moment_rows(samples: &Samples, grid: &Grid, times: &[f64], pairs: &[(f64, f64)], counts: bool) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for &t in times {
        let x = &samples.intensity[grid.index(t)];
        rows.push(row(RowKey::at(Quantity::Mean, t), mean_se(x)));
        rows.push(row(RowKey::at(Quantity::Variance, t), covariance_jackknife(x, x, JACKKNIFE_BLOCKS)));
        if counts {
            rows.push(row(RowKey::at(Quantity::CountMean, t), mean_se(&samples.counts[grid.index(t)])));
        }
    }
    for &(s, t) in pairs {
        let (x, y) = (&samples.intensity[grid.index(s)], &samples.intensity[grid.index(t)]);
        rows.push(row(RowKey::pair(Quantity::Covariance, s, t), covariance_jackknife(x, y, JACKKNIFE_BLOCKS)));
    }
    rows
}

/// Mean, variance and event-count mean of the classical intensity at `times`,
/// and covariances at `pairs`.
pub fn estimate_hp_moments(
    params: &HawkesParams,
    times: &[f64],
    pairs: &[(f64, f64)],
    n_paths: usize,
    seed: u64,
) -> Result<MomentReport> {
    check_paths(n_paths)?;
    let grid = Grid::new(times, pairs)?;
    let samples = simulate(params, &Clock::Identity, &grid, n_paths, seed)?;
    let rows = moment_rows(&samples, &grid, times, pairs, true);
    Ok(MomentReport::new(rows, n_paths, seed, 0.0, params.derived().gamma))
}

/// Mean and variance of `λ(E_t)` at `times` and covariances at `pairs`, for the
/// model's clock sampled with grid step `step`.
pub fn estimate_tfhp_moments(
    model: &TfhpModel,
    times: &[f64],
    pairs: &[(f64, f64)],
    n_paths: usize,
    seed: u64,
    step: f64,
) -> Result<MomentReport> {
    check_paths(n_paths)?;
    let grid = Grid::new(times, pairs)?;
    let clock = Clock::Inverse(InverseSampler::new(&model.sub, step)?);
    let samples = simulate(&model.hawkes, &clock, &grid, n_paths, seed)?;
    let rows = moment_rows(&samples, &grid, times, pairs, false);
    Ok(MomentReport::new(rows, n_paths, seed, step, model.gamma()).with_variant(model.sum_variant))
}

/// Grid step meeting the bias rule at `n_paths`, scaled from the standard errors of a pilot report.
pub fn step_from_pilot(pilot: &MomentReport, n_paths: usize) -> f64 {
    let target = pilot.min_se() * (pilot.n_paths as f64 / n_paths as f64).sqrt();
    bias_rule_step(pilot.gamma, target).min(pilot.bias_bound.max(f64::MIN_POSITIVE))
}

fn pilot_paths(n_paths: usize) -> usize {
    PILOT_PATHS.min(n_paths.max(MIN_PATHS))
}

fn pilot_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Grid step for [`estimate_tfhp_moments`] from a coarse pilot run, scaled to `n_paths`.
pub fn auto_step(model: &TfhpModel, times: &[f64], pairs: &[(f64, f64)], n_paths: usize, seed: u64) -> Result<f64> {
    let pilot = estimate_tfhp_moments(model, times, pairs, pilot_paths(n_paths), pilot_seed(seed), PILOT_STEP)?;
    Ok(step_from_pilot(&pilot, n_paths))
}

/// Grid step for [`estimate_inverse_lts`] from a coarse pilot run, scaled to `n_paths`.
pub fn auto_step_lts(sub: &BernsteinSpec, gamma: f64, s: f64, t: f64, n_paths: usize, seed: u64) -> Result<f64> {
    let pilot = estimate_inverse_lts(sub, gamma, s, t, pilot_paths(n_paths), pilot_seed(seed), PILOT_STEP)?;
    Ok(step_from_pilot(&pilot, n_paths))
}

/// Means of `e^{-γ(E_s + E_t)}`, `e^{-γ(E_t - E_s)}` and `e^{-γ E_t}` from joint samples of one inverse path.
pub fn estimate_inverse_lts(
    sub: &BernsteinSpec,
    gamma: f64,
    s: f64,
    t: f64,
    n_paths: usize,
    seed: u64,
    step: f64,
) -> Result<MomentReport> {
    check_paths(n_paths)?;
    if !(s > 0.0 && s <= t) {
        return Err(Error::domain("estimate_inverse_lts", format!("need 0 < s <= t, got ({s}, {t})")));
    }
    let sampler = InverseSampler::new(sub, step)?;
    let times = [s, t];
    let draws: Vec<[f64; 2]> = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut out = [0.0; 2];
            sampler.sample_into(&times, &mut out, &mut path_rng(seed, path, SubStream::Clock))?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let series = |f: &dyn Fn(&[f64; 2]) -> f64| draws.iter().map(f).collect::<Vec<f64>>();
    let sum = series(&|e| (-gamma * (e[0] + e[1])).exp());
    let diff = series(&|e| (-gamma * (e[1] - e[0])).exp());
    let phi_s = series(&|e| (-gamma * e[0]).exp());
    let phi_t = series(&|e| (-gamma * e[1]).exp());
    let mut rows = vec![
        row(RowKey::pair(Quantity::LtSum, s, t), mean_se(&sum)),
        row(RowKey::pair(Quantity::LtDiff, s, t), mean_se(&diff)),
        row(RowKey::at(Quantity::Phi, s), mean_se(&phi_s)),
    ];
    if s != t {
        rows.push(row(RowKey::at(Quantity::Phi, t), mean_se(&phi_t)));
    }
    Ok(MomentReport::new(rows, n_paths, seed, step, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::{hp_count_mean, hp_mean, MarkLaw};
    use rand::Rng;

    fn params() -> HawkesParams {
        HawkesParams::new(1.0, 2.0, 1.0, 2.0, MarkLaw::Deterministic { mean: 0.5 }).unwrap()
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = path_rng(1, 0, SubStream::Clock).random();
        let b: u64 = path_rng(1, 0, SubStream::Hawkes).random();
        let c: u64 = path_rng(1, 1, SubStream::Clock).random();
        let d: u64 = path_rng(2, 0, SubStream::Clock).random();
        assert_eq!(a, path_rng(1, 0, SubStream::Clock).random::<u64>());
        assert!(a != b && a != c && a != d && b != c);
    }

    #[test]
    fn jackknife_matches_plain_se_for_means_scale() {
        let mut rng = path_rng(3, 0, SubStream::Clock);
        let x: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let (v, se) = covariance_jackknife(&x, &x, JACKKNIFE_BLOCKS);
        assert!((v - 1.0 / 12.0).abs() < 4.0 * se);
        // Var of the sample variance of U(0,1) is (μ4 - σ⁴)/n
        let expected = ((1.0 / 80.0 - 1.0 / 144.0) / 20_000.0f64).sqrt();
        assert!((se / expected - 1.0).abs() < 0.3, "{se} vs {expected}");
    }

    #[test]
    fn compare_identical_values_pass() {
        let mut report = MomentReport::new(
            vec![row(RowKey::at(Quantity::Mean, 1.0), (2.0, 0.1))],
            100,
            0,
            0.0,
            1.0,
        );
        let verdict = compare(&[AnalyticValue { key: RowKey::at(Quantity::Mean, 1.0), value: 2.0 }], &mut report).unwrap();
        assert!(verdict.pass);
        assert_eq!(report.rows[0].z, Some(0.0));
    }

    #[test]
    fn compare_flags_large_z() {
        let mut report = MomentReport::new(vec![row(RowKey::at(Quantity::Mean, 1.0), (2.0, 0.1))], 100, 0, 0.0, 1.0);
        let verdict = compare(&[AnalyticValue { key: RowKey::at(Quantity::Mean, 1.0), value: 3.0 }], &mut report).unwrap();
        assert!(!verdict.pass);
        assert!((verdict.max_abs_z - 10.0).abs() < 1e-9);
    }

    #[test]
    fn compare_errors() {
        let mut empty = MomentReport::new(vec![], 100, 0, 0.0, 1.0);
        assert_eq!(compare(&[], &mut empty), Err(Error::Empty("report")));
        let mut report = MomentReport::new(vec![row(RowKey::at(Quantity::Mean, 1.0), (2.0, 0.1))], 100, 0, 0.0, 1.0);
        let wrong = AnalyticValue { key: RowKey::at(Quantity::Mean, 2.0), value: 2.0 };
        assert!(matches!(compare(&[wrong], &mut report), Err(Error::IndexMismatch(_))));
    }

    #[test]
    fn hp_moments_match_closed_forms() {
        let p = params();
        let report = estimate_hp_moments(&p, &[0.5, 1.0], &[(0.5, 1.0)], 20_000, 7).unwrap();
        for t in [0.5, 1.0] {
            let mean = report.row(RowKey::at(Quantity::Mean, t)).unwrap();
            assert!((mean.estimate - hp_mean(&p, t)).abs() < 4.0 * mean.se);
            let count = report.row(RowKey::at(Quantity::CountMean, t)).unwrap();
            assert!((count.estimate - hp_count_mean(&p, t)).abs() < 4.0 * count.se);
        }
        assert!(!report.advisory);
    }

    #[test]
    fn doubling_paths_shrinks_se() {
        let p = params();
        let a = estimate_hp_moments(&p, &[1.0], &[], 10_000, 1).unwrap();
        let b = estimate_hp_moments(&p, &[1.0], &[], 20_000, 1).unwrap();
        let key = RowKey::at(Quantity::Mean, 1.0);
        let ratio = b.row(key).unwrap().se / a.row(key).unwrap().se;
        assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn reports_are_deterministic() {
        let model = TfhpModel::new(params(), BernsteinSpec::tempered_stable(0.7, 0.5).unwrap()).unwrap();
        let a = estimate_tfhp_moments(&model, &[0.5, 1.0], &[(0.5, 1.0)], 200, 11, 1e-2).unwrap();
        let b = estimate_tfhp_moments(&model, &[0.5, 1.0], &[(0.5, 1.0)], 200, 11, 1e-2).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(a.advisory);
    }

    #[test]
    fn inverse_lts_diagonal() {
        let sub = BernsteinSpec::tempered_stable(0.7, 0.5).unwrap();
        let r = estimate_inverse_lts(&sub, 1.5, 1.0, 1.0, 1_000, 3, 1e-2).unwrap();
        assert_eq!(r.row(RowKey::pair(Quantity::LtDiff, 1.0, 1.0)).unwrap().estimate, 1.0);
        assert_eq!(r.rows.len(), 3);
        let small = estimate_inverse_lts(&sub, 1e-12, 0.5, 1.0, 1_000, 3, 1e-2).unwrap();
        assert!(small.rows.iter().all(|row| (row.estimate - 1.0).abs() < 1e-9));
    }

    #[test]
    fn too_few_paths() {
        assert!(matches!(estimate_hp_moments(&params(), &[1.0], &[], 10, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn csv_layout() {
        let report = estimate_hp_moments(&params(), &[1.0], &[(0.5, 1.0)], 100, 0).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "quantity,s,t,analytic,estimate,se,z");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("covariance,0.5,1,,"));
    }
}
