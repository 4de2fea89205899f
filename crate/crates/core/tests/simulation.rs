use catsdr::baselines::{fit_method, sir_fit, Method};
use catsdr::linalg::{orthonormalize, principal_angles};
use catsdr::simbench::{evaluate_classifier, projection_distance, true_basis, Classifier};
use catsdr::tuning::{tune_supervised, tune_unsupervised, tune_weighted};
use catsdr::{
    generate_simulation, made_fit, opcg_fit, MadeConfig, MadeInit, MethodConfig, OpcgConfig, SimConfig, Simulation,
    Solver, TuningConfig,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sim(seed: u64) -> Simulation {
    generate_simulation(&SimConfig::with_seed(seed)).unwrap()
}

fn opcg_cfg(refine: usize) -> OpcgConfig {
    OpcgConfig {
        solver: Solver::FisherScoring,
        refine,
        ..OpcgConfig::default()
    }
}

fn made_cfg() -> MadeConfig {
    MadeConfig {
        solver: Solver::FisherScoring,
        ..MadeConfig::default()
    }
}

fn tuning_cfg() -> TuningConfig {
    TuningConfig {
        opcg: OpcgConfig {
            solver: Solver::FisherScoring,
            ..OpcgConfig::unrefined()
        },
        ..TuningConfig::default()
    }
}

fn dist(basis: &nalgebra::DMatrix<f64>) -> f64 {
    projection_distance(basis, &true_basis()).unwrap().value
}

#[test]
fn refinement_does_not_hurt() {
    let mut refined = Vec::new();
    let mut unrefined = Vec::new();
    for seed in 0..20 {
        let s = sim(seed);
        refined.push(dist(&opcg_fit(&s.train, 1.0, 2, &opcg_cfg(5)).unwrap().original));
        unrefined.push(dist(&opcg_fit(&s.train, 1.0, 2, &opcg_cfg(0)).unwrap().original));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&refined) <= mean(&unrefined) + 0.05,
        "{refined:?} vs {unrefined:?}"
    );
}

#[test]
fn opcg_recovers_both_directions_and_sir_does_not() {
    let s = sim(11);
    let fit = opcg_fit(&s.train, 1.0, 2, &opcg_cfg(5)).unwrap();
    let angles = principal_angles(&orthonormalize(&fit.original), &s.beta_true);
    assert!(angles.iter().all(|a| a.to_degrees() < 25.0), "{angles:?}");
    let sir = sir_fit(&s.train, 2, 0.0).unwrap();
    let angles = principal_angles(&orthonormalize(&sir.original), &s.beta_true);
    assert!(angles[1].to_degrees() >= 25.0, "{angles:?}");
}

#[test]
fn made_from_opcg_matches_plain_made() {
    let cfg = MethodConfig {
        opcg: opcg_cfg(5),
        made: made_cfg(),
        ..MethodConfig::default()
    };
    let (mut plain, mut seeded) = (0.0, 0.0);
    for seed in 0..5 {
        let s = sim(seed);
        plain += dist(&fit_method(Method::Made, &s.train, 1.0, 2, &cfg).unwrap().original) / 5.0;
        seeded += dist(&fit_method(Method::OpcgMade, &s.train, 1.0, 2, &cfg).unwrap().original) / 5.0;
    }
    assert!((plain - seeded).abs() <= 0.05, "{plain} vs {seeded}");
}

#[test]
fn made_started_at_the_truth_stays_there() {
    // at n = 250 the sample minimizer itself sits ~0.13 from the truth, so probe at n = 1000
    let s = generate_simulation(&SimConfig::with_train_size(4, 1000)).unwrap();
    let cfg = MadeConfig {
        max_outer: 1,
        refine_from_start: true,
        ..made_cfg()
    };
    let state = made_fit(&s.train, 1.0, 2, &MadeInit::Basis(true_basis()), &cfg).unwrap();
    assert!(dist(&state.beta) <= 0.05, "{}", dist(&state.beta));
}

#[test]
fn knn_on_opcg_projection_classifies_test_set() {
    let s = sim(5);
    let fit = opcg_fit(&s.train, 1.0, 2, &opcg_cfg(5)).unwrap();
    let err = evaluate_classifier(
        &fit.project(s.train.x()).unwrap(),
        s.train.labels(),
        &fit.project(s.test.x()).unwrap(),
        s.test.labels(),
        Classifier::Knn(5),
    )
    .unwrap();
    assert!(err <= 0.10, "{err}");
}

#[test]
fn unsupervised_ratio_is_smallest_mid_grid() {
    let s = sim(2);
    let grid = [0.6, 1.01, 1.65, 4.0];
    let curve = tune_unsupervised(&s.train, &s.tune, &grid, 2, 5, &tuning_cfg()).unwrap();
    let r = &curve.ratio_km;
    assert!(r[1] < r[0] && r[1] < r[3], "{r:?}");
}

#[test]
fn supervised_and_weighted_select_the_band() {
    let s = sim(6);
    let grid = catsdr::tuning::default_grid();
    let cfg = tuning_cfg();
    let sup = tune_supervised(&s.train, &s.tune, &grid, 2, &[2, 2, 2], &cfg).unwrap();
    assert!((0.7..=2.0).contains(&sup.h_selected), "{}", sup.h_selected);
    let w = tune_weighted(&s.train, &s.tune, &grid, 2, 6, &[2, 2, 2], &cfg).unwrap();
    assert!((0.7..=2.0).contains(&w.h_selected), "{}", w.h_selected);
}

#[test]
fn noise_labels_give_a_flat_curve() {
    let s = sim(8);
    let mut labels = s.train.labels().to_vec();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let noisy = catsdr::LabeledDataset::new(s.train.x().clone(), labels, s.train.family()).unwrap();
    let grid = [1.0, 1.65, 2.7, 4.5, 7.4];
    let curve = tune_unsupervised(&noisy, &s.tune, &grid, 2, 5, &tuning_cfg()).unwrap();
    let finite: Vec<f64> = curve.ratio_km.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = finite
        .iter()
        .fold((f64::MAX, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    assert!(finite.len() >= 3 && hi / lo < 2.0, "{:?}", curve.ratio_km);
}
