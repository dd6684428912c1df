//! Public-API checks against values computed independently at 40 digits.

use tfhp::analytics::{gfhp_mean, phi_general, tfhp_mean, tfhp_variance, TfhpModel};
use tfhp::hawkes::{hp_mean, hp_variance, HawkesParams, MarkLaw};
use tfhp::laplace::{GaverStehfest, Talbot};
use tfhp::montecarlo::{compare, estimate_tfhp_moments, AnalyticValue, Quantity};
use tfhp::special::{ml3, phi};
use tfhp::{BernsteinRegistry, BernsteinSpec, Error};

fn hawkes() -> HawkesParams {
    HawkesParams::new(1.0, 2.0, 1.0, 2.0, MarkLaw::Deterministic { mean: 0.5 }).unwrap()
}

#[test]
fn prabhakar_values() {
    let cases = [
        ([0.7, 0.7, 1.0, -2.0], 0.077_358_224_338_521_222),
        ([0.5, 1.0, 2.0, -1.5], 0.076_151_039_855_477_402),
        ([0.8, 1.2, 0.5, 3.0], 14.386_983_090_995_583),
        ([0.3, 1.0, 1.0, -0.8], 0.514_381_958_688_244_253),
    ];
    for ([a, b, c, z], exact) in cases {
        let v = ml3(a, b, c, z).unwrap();
        assert!((v - exact).abs() < 1e-10 * exact.abs().max(1.0), "ml3({a},{b},{c},{z}) = {v}, want {exact}");
    }
}

#[test]
fn inverse_clock_transform_values() {
    let cases = [
        ([0.7, 0.5, 1.5, 1.0], 0.176_427_421_887_137_872),
        ([0.5, 2.0, 0.5, 2.0], 0.076_782_008_191_534_028),
        ([0.9, 0.0, 1.5, 0.5], 0.450_852_815_166_391_665),
        ([0.3, 0.5, 1.5, 5.0], 0.004_093_994_247_271_300_7),
    ];
    for ([beta, nu, gamma, t], exact) in cases {
        let v = phi(beta, nu, gamma, t).unwrap().value;
        assert!((v - exact).abs() < 1e-7, "phi({beta},{nu},{gamma},{t}) = {v}, want {exact}");
    }
}

#[test]
fn gamma_clock_transform() {
    let spec = BernsteinSpec::gamma(1.0, 1.0).unwrap();
    let exact = 0.226_869_976_051_263_967;
    let gs = phi_general(&spec, 1.5, 1.0, &GaverStehfest::default()).unwrap();
    assert!(!gs.ill_conditioned);
    assert!((gs.value - exact).abs() < 1e-6, "{}", gs.value);
    let talbot = phi_general(&spec, 1.5, 1.0, &Talbot::default());
    assert!(matches!(talbot, Err(Error::NotImplemented(_))));
}

#[test]
fn general_path_agrees_with_series_path() {
    let model = TfhpModel::new(hawkes(), BernsteinSpec::tempered_stable(0.6, 1.0).unwrap()).unwrap();
    for t in [0.3, 1.0, 3.0] {
        let direct = tfhp_mean(&model, t).unwrap();
        let general = gfhp_mean(&model, t).unwrap();
        assert!((direct - general.value).abs() < 1e-5, "t {t}: {direct} vs {}", general.value);
    }
}

#[test]
fn moments_decay_to_stationary_level() {
    let p = hawkes();
    let model = TfhpModel::new(p, BernsteinSpec::tempered_stable(0.7, 0.5).unwrap()).unwrap();
    let level = p.kappa * p.theta / p.derived().gamma;
    assert!((hp_mean(&p, 50.0) - level).abs() < 1e-6);
    let far = tfhp_mean(&model, 40.0).unwrap();
    assert!((far - level).abs() < (tfhp_mean(&model, 5.0).unwrap() - level).abs());
    assert!(tfhp_variance(&model, 1.0).unwrap() < hp_variance(&p, 1.0) + 1.0);
}

#[test]
fn registry_builds_each_family() {
    let registry = BernsteinRegistry::default();
    for value in [
        serde_json::json!({ "family": "tempered_stable", "beta": 0.7, "nu": 0.5 }),
        serde_json::json!({ "family": "gamma", "p": 1.0, "q": 2.0 }),
    ] {
        let spec = registry.build(&value).unwrap();
        assert_eq!(spec.family(), value["family"].as_str().unwrap());
        assert!(spec.eval_f(1.0).unwrap() > 0.0);
    }
    let stable = registry.build(&serde_json::json!({ "family": "stable", "beta": 0.4 })).unwrap();
    assert_eq!(stable.tempered_stable_params().unwrap().nu, 0.0);
    let unknown = registry.build(&serde_json::json!({ "family": "cauchy" }));
    assert!(matches!(unknown, Err(Error::InvalidParameter(_))));
}

#[test]
fn unstable_hawkes_is_rejected() {
    let p = HawkesParams::new(1.0, 0.4, 1.0, 2.0, MarkLaw::Deterministic { mean: 0.5 }).unwrap();
    let err = TfhpModel::new(p, BernsteinSpec::tempered_stable(0.7, 0.5).unwrap()).unwrap_err();
    assert!(matches!(err, Error::Stationarity { .. }));
}

#[test]
fn same_seed_same_report() {
    let model = TfhpModel::new(hawkes(), BernsteinSpec::tempered_stable(0.7, 0.5).unwrap()).unwrap();
    let run = |seed| estimate_tfhp_moments(&model, &[0.5, 2.0], &[(0.5, 2.0)], 2000, seed, 1e-3).unwrap();
    let (a, b, c) = (run(5), run(5), run(6));
    assert_eq!(a.to_csv(), b.to_csv());
    assert_ne!(a.to_csv(), c.to_csv());
}

#[test]
fn report_gate_on_small_run() {
    let model = TfhpModel::new(hawkes(), BernsteinSpec::gamma(1.0, 1.0).unwrap()).unwrap();
    let mut report = estimate_tfhp_moments(&model, &[1.0], &[], 5000, 9, 1e-3).unwrap();
    let analytic: Vec<AnalyticValue> = report
        .keys()
        .into_iter()
        .map(|key| {
            let value = match key.quantity {
                Quantity::Mean => gfhp_mean(&model, key.t).unwrap().value,
                _ => tfhp::analytics::gfhp_variance(&model, key.t).unwrap().value,
            };
            AnalyticValue { key, value }
        })
        .collect();
    let verdict = compare(&analytic, &mut report).unwrap();
    assert!(verdict.pass, "{verdict:?}");
    assert!(compare(&analytic[..1], &mut report).is_err());
}
