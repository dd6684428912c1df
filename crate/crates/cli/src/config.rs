use std::path::Path;

use serde::Deserialize;
use tfhp::analytics::{SumTransformVariant, McFallback, DEFAULT_QUAD_TOL};
use tfhp::hawkes::HawkesParams;
use tfhp::BernsteinSpec;

use crate::failure::Failure;

fn default_paths() -> usize {
    100_000
}

/// Everything one experiment needs; unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hawkes: Option<HawkesParams>,
    pub subordinator: Option<BernsteinSpec>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub pairs: Vec<(f64, f64)>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub step: StepSetting,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub lemma41_variant: SumTransformVariant,
    pub fallback: Option<McFallback>,
    #[serde(default)]
    pub ml_eval: MlEval,
    #[serde(default)]
    pub output: OutputPaths,
}

/// Grid step of the inverse sampler: a number, or `"auto"` for the bias rule.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Default)]
#[serde(untagged)]
pub enum StepSetting {
    Fixed(f64),
    #[default]
    #[serde(skip)]
    Auto,
    Named(StepName),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepName {
    Auto,
}

impl StepSetting {
    pub fn fixed(&self) -> Option<f64> {
        match self {
            StepSetting::Fixed(step) => Some(*step),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative tolerance of kernel convolutions.
    pub quad: f64,
    /// Diagonal covariance versus variance, and series versus composition.
    pub consistency: f64,
    /// General-clock values versus tempered stable values on the same clock.
    pub coincidence: f64,
    /// Joint transforms on the diagonal.
    pub diagonal: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { quad: DEFAULT_QUAD_TOL, consistency: 1e-6, coincidence: 1e-5, diagonal: 1e-4 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlEval {
    /// `[a, b, c, z]` arguments of the three-parameter function.
    #[serde(default)]
    pub ml3: Vec<[f64; 4]>,
    /// `[beta, nu, rate, t]` arguments of the inverse-clock transform.
    #[serde(default)]
    pub phi: Vec<[f64; 4]>,
}

/// File names inside the output directory; default to the subcommand name.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: Option<String>,
    pub json: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), Failure> {
        if let Some(h) = &self.hawkes {
            h.validate().map_err(|e| Failure::Config(format!("hawkes: {e}")))?;
        }
        if let StepSetting::Fixed(step) = self.step {
            if !(step > 0.0) {
                return Err(Failure::Config(format!("step must be positive or \"auto\", got {step}")));
            }
        }
        if self.times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Failure::Config("times must be positive and finite".into()));
        }
        if self.pairs.iter().any(|&(s, t)| !(s > 0.0 && s <= t && t.is_finite())) {
            return Err(Failure::Config("pairs must satisfy 0 < s <= t".into()));
        }
        Ok(())
    }

    pub fn hawkes(&self) -> Result<HawkesParams, Failure> {
        self.hawkes.ok_or_else(|| Failure::Config("missing `hawkes`".into()))
    }

    pub fn subordinator(&self) -> Result<BernsteinSpec, Failure> {
        self.subordinator.clone().ok_or_else(|| Failure::Config("missing `subordinator`".into()))
    }

    /// `times` sorted ascending; errors when empty.
    pub fn time_grid(&self) -> Result<Vec<f64>, Failure> {
        if self.times.is_empty() {
            return Err(Failure::Config("`times` must not be empty".into()));
        }
        let mut times = self.times.clone();
        times.sort_by(f64::total_cmp);
        times.dedup();
        Ok(times)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, String> {
        serde_json::from_str::<ExperimentConfig>(text).map_err(|e| e.to_string())
    }

    #[test]
    fn step_forms() {
        assert_eq!(parse(r#"{"step": 0.001}"#).unwrap().step, StepSetting::Fixed(0.001));
        assert_eq!(parse(r#"{"step": "auto"}"#).unwrap().step.fixed(), None);
        assert_eq!(parse("{}").unwrap().step, StepSetting::Auto);
        assert!(parse(r#"{"step": "fine"}"#).is_err());
    }

    #[test]
    fn unknown_keys_report_line() {
        let err = parse("{\n  \"n_paths\": 10,\n  \"bogus\": 1\n}").unwrap_err();
        assert!(err.contains("bogus") && err.contains("line 3"), "{err}");
        assert!(parse(r#"{"tolerances": {"quad": 1e-8, "z": 3}}"#).is_err());
    }

    #[test]
    fn subordinator_parameters_are_checked() {
        let err = parse(r#"{"subordinator": {"family": "tempered_stable", "beta": 1.5, "nu": 0.5}}"#).unwrap_err();
        assert!(err.contains("line 1"), "{err}");
        let ok = parse(r#"{"subordinator": {"family": "gamma", "p": 1, "q": 1}}"#).unwrap();
        assert_eq!(ok.subordinator.unwrap().family(), "gamma");
    }
}
