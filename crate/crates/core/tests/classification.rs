use fmahal::classify::{
    cv_alpha, default_alpha_grid, evaluate_classifier, fit_classifier, fit_cv_classifier,
    ClassifierModel, CvProtocol, KnnClassifier, Predict, RuleMode,
};
use fmahal::covariance::{fit_empirical, EigenSystem};
use fmahal::rng::substream;
use fmahal::simulate::{brownian_pair, scenario_sample, Case, Scenario, ScenarioSpec};
use fmahal::{Curve, FunctionalSample, Grid};
use proptest::prelude::*;
use rand::Rng;

fn classes(s: &FunctionalSample) -> (FunctionalSample, FunctionalSample) {
    (s.class(0).unwrap(), s.class(1).unwrap())
}

#[test]
fn cut_brownian_constant_is_finite_and_reproducible() {
    let (b0, b1) = classes(&brownian_pair(0.875, 50, 50, 3).unwrap());
    let a = fit_classifier(&b0, &b1, 0.01, [0.5, 0.5], RuleMode::Heteroscedastic).unwrap();
    let b = fit_classifier(&b0, &b1, 0.01, [0.5, 0.5], RuleMode::Heteroscedastic).unwrap();
    assert!(a.threshold_c.is_finite());
    // the bridge varies less than the motion, so the constant is negative
    assert!(a.threshold_c < 0.0);
    assert_eq!(a.threshold_c.to_bits(), b.threshold_c.to_bits());
}

fn shared_covariance_model() -> ClassifierModel {
    let (b0, _) = classes(&brownian_pair(1.0, 40, 30, 4).unwrap());
    let e0 = fit_empirical(&b0).unwrap();
    let shifted = e0.mean().add(&e0.grid().curve_from_fn(|t| 0.4 * t));
    let e1 = EigenSystem::new(
        e0.grid().clone(),
        shifted,
        e0.eigenvalues().to_vec(),
        e0.eigenfunctions().to_vec(),
    )
    .unwrap();
    ClassifierModel::from_eigensystems(e0, e1, 0.01, [0.5, 0.5], RuleMode::Heteroscedastic).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn shared_covariance_rules_agree(x in prop::collection::vec(-2.0f64..2.0, 30)) {
        let hetero = shared_covariance_model();
        prop_assert_eq!(hetero.threshold_c, 0.0);
        let homo = ClassifierModel { mode: RuleMode::Homoscedastic, ..hetero.clone() };
        prop_assert_eq!(hetero.predict(&x).unwrap(), homo.predict(&x).unwrap());
    }

    #[test]
    fn prediction_depends_on_score_difference(x in prop::collection::vec(-2.0f64..2.0, 30)) {
        let model = shared_covariance_model();
        let [s0, s1] = model.scores(&x).unwrap();
        prop_assert_eq!(model.predict(&x).unwrap(), u32::from(s0 - s1 > model.threshold_c));
    }
}

#[test]
fn equidistant_curve_goes_to_class_zero() {
    let model = shared_covariance_model();
    let m0 = model.class_models[0].eigsys().mean();
    let m1 = model.class_models[1].eigsys().mean();
    let mid = m0.add(m1).scaled(0.5);
    let [s0, s1] = model.scores(&mid).unwrap();
    assert!((s0 - s1).abs() < 1e-9);
    let exact = Curve::from(m0.to_vec());
    assert_eq!(model.predict(&exact).unwrap(), 0);
}

#[test]
fn cv_is_deterministic_under_seed() {
    let (b0, b1) = classes(&brownian_pair(1.0, 30, 50, 5).unwrap());
    let grid = default_alpha_grid();
    let a = cv_alpha(&b0, &b1, &grid, 5, 9, RuleMode::Heteroscedastic).unwrap();
    let b = cv_alpha(&b0, &b1, &grid, 5, 9, RuleMode::Heteroscedastic).unwrap();
    assert_eq!(a, b);
    assert!(grid.contains(&a));
}

#[test]
fn indistinguishable_scenario_is_a_coin_flip() {
    let g = Grid::uniform(51).unwrap();
    let spec = ScenarioSpec::new(Scenario::A, Case::Same, Case::Same);
    let mut rng = substream(6, 0);
    let reps = 20;
    let (mut m_err, mut k_err) = (0.0, 0.0);
    for _ in 0..reps {
        let seed: u64 = rng.random();
        let train = scenario_sample(&spec, 50, &g, seed).unwrap();
        let test = scenario_sample(&spec, 250, &g, seed ^ 1).unwrap();
        let (t0, t1) = classes(&train);
        let model = fit_cv_classifier(
            &t0,
            &t1,
            &default_alpha_grid(),
            &CvProtocol::default(),
            seed,
        )
        .unwrap();
        m_err += evaluate_classifier(&model, &test).unwrap();
        k_err += evaluate_classifier(
            &KnnClassifier {
                train: &train,
                k: 5,
            },
            &test,
        )
        .unwrap();
    }
    for err in [m_err / reps as f64, k_err / reps as f64] {
        assert!((err - 0.5).abs() <= 0.05, "{err}");
    }
}

#[test]
fn model_json_round_trip() {
    let model = shared_covariance_model();
    let text = serde_json::to_string(&model).unwrap();
    let back: ClassifierModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, model);
}
