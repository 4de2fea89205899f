//! Acceptance suite. Each test checks one criterion at its stated tolerance and
//! writes a single PASS/FAIL line to stderr (uncaptured, so it shows under
//! plain `cargo test`).
//!
//! The heavy criteria (order, tuning, consistency, wine) use Fisher scoring for
//! the local fits; the method comparison uses the default conjugate-gradient
//! solver.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use catsdr::baselines::Method;
use catsdr::io::{load_csv, parse_merge, split, CsvOptions};
use catsdr::links::{
    adcat_inverse_link, adcat_link, adcat_probabilities, cat_inverse_link, cat_link, matrix_form, prob_to_survivor,
    survivor_to_prob,
};
use catsdr::localglm::{fisher_scoring_local, fit_local, gaussian_weights};
use catsdr::opcg::candidate_matrix;
use catsdr::simbench::{evaluate_classifier, projection_distance, compare_methods, Classifier};
use catsdr::tuning::{default_grid, tune_kfold};
use catsdr::{
    generate_simulation, opcg_fit, predictor_augmentation, CanonicalParam, Family, FamilyKind, KernelWeights,
    LabeledDataset, LocalFit, MethodConfig, OpcgConfig, OptimizerConfig, ProbabilityVector, SimConfig, Solver,
    TuningConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn report(id: usize, name: &str, pass: bool, detail: &str, started: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "{verdict} criterion {id} [{name}] {detail} ({:.1}s)\n",
        started.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn fisher(config: OpcgConfig) -> OpcgConfig {
    OpcgConfig {
        solver: Solver::FisherScoring,
        ..config
    }
}

fn sim(seed: u64) -> catsdr::Simulation {
    generate_simulation(&SimConfig::with_seed(seed)).unwrap()
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn criterion_1_method_comparison_bands() {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let methods = [
        Method::Opcg,
        Method::Made,
        Method::PwOpcg,
        Method::PlOpcg,
        Method::Opg,
        Method::Sir,
    ];
    let table = compare_methods(&seeds, 1.0, 2, &methods, &MethodConfig::default()).unwrap();
    let bands: [(Method, f64, f64); 6] = [
        (Method::Opcg, 0.0, 0.45),
        (Method::Made, 0.0, 0.45),
        (Method::PwOpcg, 0.0, 0.55),
        (Method::PlOpcg, 0.0, 0.50),
        (Method::Opg, 0.9, 2.0),
        (Method::Sir, 1.5, f64::INFINITY),
    ];
    let mut pass = table.failures.is_empty();
    let mut detail = Vec::new();
    for (method, lo, hi) in bands {
        let mean = table.mean(method).unwrap_or(f64::NAN);
        pass &= mean >= lo && mean <= hi;
        detail.push(format!("{method}={mean:.4}"));
    }
    if !table.failures.is_empty() {
        detail.push(format!("failed fits: {:?}", table.failures));
    }
    let detail = detail.join(" ");
    report(1, "simulation method comparison", pass, &detail, started);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_2_order_determination() {
    let started = Instant::now();
    let cfg = fisher(OpcgConfig::unrefined());
    let estimates: Vec<usize> = (0..10)
        .map(|seed| {
            let s = sim(seed);
            predictor_augmentation(&s.train, 1.0, catsdr::default_d_max(10), 2, 200, seed, &cfg)
                .unwrap()
                .d_hat
        })
        .collect();
    let hits = estimates.iter().filter(|d| **d == 2).count();
    let pass = hits >= 8;
    let detail = format!("d_hat=2 in {hits}/10 replicates {estimates:?}");
    report(2, "predictor augmentation", pass, &detail, started);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_3_kfold_tuning() {
    let started = Instant::now();
    let cfg = TuningConfig {
        opcg: fisher(OpcgConfig::unrefined()),
        ..TuningConfig::default()
    };
    let grid = default_grid();
    assert_eq!(grid.len(), 20);
    let chosen: Vec<f64> = (0..10)
        .map(|seed| {
            let s = sim(seed);
            tune_kfold(&s.train, &grid, 2, 6, &[2, 2, 2], 3, &cfg, seed)
                .unwrap()
                .h_selected
        })
        .collect();
    let hits = chosen.iter().filter(|h| (0.7..=2.0).contains(*h)).count();
    let pass = hits >= 8;
    let shown: Vec<String> = chosen.iter().map(|h| format!("{h:.3}")).collect();
    let detail = format!("h in [0.7, 2.0] for {hits}/10 replicates [{}]", shown.join(", "));
    report(3, "3-fold weighted k-means", pass, &detail, started);
    assert!(pass, "{detail}");
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_4_link_layer() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_grad: f64 = 0.0;
    let mut worst_hess: f64 = 0.0;
    let mut worst_trip: f64 = 0.0;
    let mut worst_matrix: f64 = 0.0;
    for m in [2usize, 3, 5, 10] {
        let k = m - 1;
        for family in [Family::categorical(m).unwrap(), Family::ordinal(m).unwrap()] {
            for _ in 0..100 {
                let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
                let mean = family.inverse_link(&theta);
                let var = family.variance(&theta);
                let step = 1e-5;
                let mut fd_grad = vec![0.0; k];
                let mut fd_hess = DMatrix::zeros(k, k);
                for j in 0..k {
                    let mut up = theta.clone();
                    let mut dn = theta.clone();
                    up[j] += step;
                    dn[j] -= step;
                    fd_grad[j] = (family.cumulant(&up) - family.cumulant(&dn)) / (2.0 * step);
                    let col = (family.inverse_link(&up) - family.inverse_link(&dn)) / (2.0 * step);
                    fd_hess.set_column(j, &col);
                }
                worst_grad = worst_grad.max(rel_err(mean.as_slice(), &fd_grad));
                worst_hess = worst_hess.max(rel_err(var.as_slice(), fd_hess.as_slice()));

                let t = CanonicalParam::new(theta.clone()).unwrap();
                let back = match family.kind() {
                    FamilyKind::Categorical => cat_link(&cat_inverse_link(&t)).unwrap(),
                    FamilyKind::Ordinal => adcat_link(&adcat_probabilities(&t)).unwrap(),
                };
                let trip = back
                    .as_slice()
                    .iter()
                    .zip(&theta)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst_trip = worst_trip.max(trip);

                if family.kind() == FamilyKind::Ordinal {
                    let tau = adcat_inverse_link(&t);
                    let lit = matrix_form::adcat_inverse_link_matrix(&theta);
                    let diff = tau
                        .as_slice()
                        .iter()
                        .zip(lit.iter())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    worst_matrix = worst_matrix.max(diff);
                }
            }
            // probabilities -> survivors -> probabilities, and link -> survivors -> link
            for _ in 0..100 {
                let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let p = ProbabilityVector::new(raw[..k].iter().map(|v| v / total).collect()).unwrap();
                let tau = prob_to_survivor(&p).unwrap();
                let p2 = survivor_to_prob(&tau).unwrap();
                let trip = p
                    .as_slice()
                    .iter()
                    .zip(p2.as_slice())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst_trip = worst_trip.max(trip);
                let theta = adcat_link(&p).unwrap();
                let theta2 = adcat_link(&survivor_to_prob(&adcat_inverse_link(&theta)).unwrap()).unwrap();
                let trip = theta
                    .as_slice()
                    .iter()
                    .zip(theta2.as_slice())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst_trip = worst_trip.max(trip);
            }
        }
    }
    let pass = worst_grad < 1e-6 && worst_hess < 1e-6 && worst_trip < 1e-10 && worst_matrix < 1e-12;
    let detail = format!(
        "grad rel {worst_grad:.2e}, hessian rel {worst_hess:.2e}, round trip {worst_trip:.2e}, matrix form {worst_matrix:.2e}"
    );
    report(4, "link layer", pass, &detail, started);
    assert!(pass, "{detail}");
}

/// Newton-Raphson (IRLS) for multinomial logistic regression with the last
/// category as reference. Returns the intercepts and the `p x (m-1)` slopes.
fn irls_multinomial(x: &DMatrix<f64>, labels: &[usize], m: usize) -> (DVector<f64>, DMatrix<f64>) {
    let (n, p) = x.shape();
    let k = m - 1;
    let q = p + 1;
    // coef[(r, j)]: row 0 intercept, rows 1..=p slopes
    let mut coef = DMatrix::<f64>::zeros(q, k);
    let design = |i: usize, r: usize| if r == 0 { 1.0 } else { x[(i, r - 1)] };
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(q * k);
        let mut hess = DMatrix::<f64>::zeros(q * k, q * k);
        for i in 0..n {
            let eta: Vec<f64> = (0..k)
                .map(|j| (0..q).map(|r| design(i, r) * coef[(r, j)]).sum())
                .collect();
            let mx = eta.iter().copied().fold(0.0, f64::max);
            let denom = (-mx).exp() + eta.iter().map(|e| (e - mx).exp()).sum::<f64>();
            let pi: Vec<f64> = eta.iter().map(|e| (e - mx).exp() / denom).collect();
            for j in 0..k {
                let y = if labels[i] == j + 1 { 1.0 } else { 0.0 };
                for r in 0..q {
                    grad[j * q + r] += (y - pi[j]) * design(i, r);
                }
                for l in 0..k {
                    let w = if j == l { pi[j] * (1.0 - pi[j]) } else { -pi[j] * pi[l] };
                    for r in 0..q {
                        for s in 0..q {
                            hess[(j * q + r, l * q + s)] += w * design(i, r) * design(i, s);
                        }
                    }
                }
            }
        }
        let delta = hess.cholesky().expect("information is positive definite").solve(&grad);
        for j in 0..k {
            for r in 0..q {
                coef[(r, j)] += delta[j * q + r];
            }
        }
        if delta.amax() < 1e-13 {
            break;
        }
    }
    let alpha = coef.row(0).transpose();
    let gamma = coef.rows(1, p).into_owned();
    (alpha, gamma)
}

fn multinomial_data(seed: u64, n: usize, p: usize, m: usize) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gaussian(&mut rng, n, p);
    let gamma = gaussian(&mut rng, p, m - 1) * 0.8;
    let alpha: Vec<f64> = (0..m - 1).map(|_| rng.random_range(-0.5..0.5)).collect();
    let labels = (0..n)
        .map(|i| {
            let mut w: Vec<f64> = (0..m - 1)
                .map(|j| (alpha[j] + (0..p).map(|c| x[(i, c)] * gamma[(c, j)]).sum::<f64>()).exp())
                .collect();
            w.push(1.0);
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (l, wl) in w.iter().enumerate() {
                if u < *wl {
                    return l + 1;
                }
                u -= wl;
            }
            m
        })
        .collect();
    LabeledDataset::new(x, labels, Family::categorical(m).unwrap()).unwrap()
}

#[test]
fn criterion_5_global_glm_equivalence() {
    let started = Instant::now();
    let cfg = OptimizerConfig {
        ridge: 1e-8,
        ..OptimizerConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut unconverged = 0;
    for (case, m) in [2usize, 3, 2, 3, 3].into_iter().enumerate() {
        let data = multinomial_data(50 + case as u64, 300, 3, m);
        let (alpha, gamma) = irls_multinomial(data.x(), data.labels(), m);
        let anchor = 7 * case;
        let w = KernelWeights::uniform(data.n(), anchor);
        let x0 = data.x().row(anchor).transpose();
        let a_expected = &alpha + gamma.transpose() * &x0;
        let fits: [LocalFit; 2] = [
            fit_local(anchor, &w, &data, &cfg, None).unwrap(),
            fisher_scoring_local(anchor, &w, &data, &cfg, None).unwrap(),
        ];
        for fit in fits {
            unconverged += usize::from(!fit.converged);
            worst = worst.max((&fit.a - &a_expected).amax());
            worst = worst.max((&fit.b - &gamma).amax());
        }
    }
    let pass = worst < 1e-4 && unconverged == 0;
    let detail = format!("max coordinate gap {worst:.2e} over 5 datasets and both solvers");
    report(5, "global GLM equivalence", pass, &detail, started);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_6_consistency_trend() {
    let started = Instant::now();
    let cfg = fisher(OpcgConfig::default());
    let medians: Vec<f64> = [100usize, 250, 1000]
        .into_iter()
        .map(|n| {
            let dists = (0..20)
                .map(|seed| {
                    let s = generate_simulation(&SimConfig::with_train_size(seed, n)).unwrap();
                    let fit = opcg_fit(&s.train, 1.0, 2, &cfg).unwrap();
                    projection_distance(&fit.original, &s.beta_true).unwrap().value
                })
                .collect();
            median(dists)
        })
        .collect();
    let pass = medians[0] > medians[1] && medians[1] > medians[2];
    let detail = format!(
        "median distance n=100: {:.4}, n=250: {:.4}, n=1000: {:.4}",
        medians[0], medians[1], medians[2]
    );
    report(6, "consistency trend", pass, &detail, started);
    assert!(pass, "{detail}");
}

fn random_rotation(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    gaussian(rng, p, p).qr().q()
}

fn proj(b: &DMatrix<f64>) -> DMatrix<f64> {
    b * b.transpose()
}

#[test]
fn criterion_7_equivariance_and_invariance() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checks: Vec<(&str, f64)> = Vec::new();
    let cfg = OptimizerConfig::default();

    // local fits: rotation covariance and translation invariance, both families and solvers
    for kind in [FamilyKind::Categorical, FamilyKind::Ordinal] {
        let data = multinomial_data(70, 150, 4, 3).with_kind(kind).unwrap();
        let r = random_rotation(&mut rng, 4);
        let rotated = data.with_x(data.x() * &r).unwrap();
        let shift = DVector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
        let shifted = data
            .with_x(DMatrix::from_fn(150, 4, |i, c| data.x()[(i, c)] + shift[c]))
            .unwrap();
        let anchor = 11;
        let w = gaussian_weights(data.x(), anchor, 1.5, None).unwrap();
        let w_rot = gaussian_weights(rotated.x(), anchor, 1.5, None).unwrap();
        let w_shift = gaussian_weights(shifted.x(), anchor, 1.5, None).unwrap();
        for solver in [Solver::HybridCg, Solver::FisherScoring] {
            let run = |d: &LabeledDataset, w: &KernelWeights| match solver {
                Solver::HybridCg => fit_local(anchor, w, d, &cfg, None).unwrap(),
                Solver::FisherScoring => fisher_scoring_local(anchor, w, d, &cfg, None).unwrap(),
            };
            let base = run(&data, &w);
            let rot = run(&rotated, &w_rot);
            let sh = run(&shifted, &w_shift);
            let gap_rot = (&rot.a - &base.a).amax().max((&rot.b - r.transpose() * &base.b).amax());
            let gap_shift = (&sh.a - &base.a).amax().max((&sh.b - &base.b).amax());
            checks.push(("local fit rotation", gap_rot));
            checks.push(("local fit translation", gap_shift));
        }
    }

    // OPCG: rotation equivariance on raw predictors, translation and row-permutation invariance
    let s = sim(3);
    let data = s.train;
    let (n, p) = (data.n(), data.p());
    let raw = fisher(OpcgConfig {
        standardize: false,
        ..OpcgConfig::default()
    });
    let base = opcg_fit(&data, 1.0, 2, &raw).unwrap();
    let r = random_rotation(&mut rng, p);
    let rot = opcg_fit(&data.with_x(data.x() * &r).unwrap(), 1.0, 2, &raw).unwrap();
    checks.push((
        "opcg rotation",
        (proj(&rot.basis) - r.transpose() * proj(&base.basis) * &r).amax(),
    ));

    let std_cfg = fisher(OpcgConfig::default());
    let base_std = opcg_fit(&data, 1.0, 2, &std_cfg).unwrap();
    let shift = DVector::from_fn(p, |_, _| rng.random_range(-10.0..10.0));
    let shifted = data
        .with_x(DMatrix::from_fn(n, p, |i, c| data.x()[(i, c)] + shift[c]))
        .unwrap();
    let sh = opcg_fit(&shifted, 1.0, 2, &std_cfg).unwrap();
    checks.push((
        "opcg translation",
        (proj(&sh.original) - proj(&base_std.original)).amax(),
    ));

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let permuted = data.subset(&order).unwrap();
    let perm = opcg_fit(&permuted, 1.0, 2, &std_cfg).unwrap();
    checks.push((
        "opcg permutation",
        (proj(&perm.original) - proj(&base_std.original)).amax(),
    ));
    let single = fisher(OpcgConfig::unrefined());
    let lam = candidate_matrix(&data, 1.0, &single).unwrap().lambda;
    let lam_perm = candidate_matrix(&permuted, 1.0, &single).unwrap().lambda;
    checks.push(("candidate matrix permutation", (&lam - &lam_perm).amax() / lam.amax()));

    let worst = checks.iter().map(|c| c.1).fold(0.0, f64::max);
    let pass = worst < 1e-6;
    let failing: Vec<String> = checks
        .iter()
        .filter(|c| c.1 >= 1e-6)
        .map(|c| format!("{}={:.2e}", c.0, c.1))
        .collect();
    let detail = format!("{} checks, worst gap {worst:.2e} {}", checks.len(), failing.join(" "));
    report(7, "equivariance and invariance", pass, &detail, started);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_8_wine_smoke() {
    let started = Instant::now();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/winequality-red.csv");
    let mut opts = CsvOptions::new("quality", FamilyKind::Ordinal);
    opts.merge = Some(parse_merge("3,4,5;6;7,8").unwrap());
    let data = load_csv(&path, &opts).unwrap();
    assert_eq!((data.n(), data.p(), data.m()), (1599, 11, 3));
    let (train, test) = split(&data, 2.0 / 3.0, true, 0).unwrap();
    let fit = opcg_fit(&train, 3.5, 2, &fisher(OpcgConfig::default())).unwrap();
    let z_train = fit.project(train.x()).unwrap();
    let z_test = fit.project(test.x()).unwrap();
    let error = evaluate_classifier(&z_train, train.labels(), &z_test, test.labels(), Classifier::Knn(5)).unwrap();
    let pass = error <= 0.45;
    let detail = format!("5-NN test error {:.2}% on {} test rows", 100.0 * error, test.n());
    report(8, "wine quality smoke", pass, &detail, started);
    assert!(pass, "{detail}");
}
