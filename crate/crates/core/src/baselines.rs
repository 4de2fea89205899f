//! Comparison estimators: OPG, pairwise and per-label OPCG, and SIR.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Result, SdrError};
use crate::linalg::{inv_sqrt_psd, orthonormalize, top_eigenvectors};
use crate::localglm::gaussian_weights_from_coords;
use crate::made::{made_fit, MadeConfig, MadeInit};
use crate::opcg::{check_dimension, opcg_fit, standardize, Diagnostics, OpcgConfig, SdrBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Opcg,
    Made,
    /// MADE started from the OPCG basis.
    OpcgMade,
    Opg,
    PwOpcg,
    PlOpcg,
    Sir,
}

impl Method {
    /// Methods in the simulation comparison.
    pub const COMPARED: [Method; 6] = [
        Method::Opcg,
        Method::Made,
        Method::Opg,
        Method::PwOpcg,
        Method::PlOpcg,
        Method::Sir,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Opcg => "opcg",
            Method::Made => "made",
            Method::OpcgMade => "opcg_made",
            Method::Opg => "opg",
            Method::PwOpcg => "pw_opcg",
            Method::PlOpcg => "pl_opcg",
            Method::Sir => "sir",
        }
    }

    pub fn needs_bandwidth(&self) -> bool {
        !matches!(self, Method::Sir)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SdrError;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Method::Opcg,
            Method::Made,
            Method::OpcgMade,
            Method::Opg,
            Method::PwOpcg,
            Method::PlOpcg,
            Method::Sir,
        ];
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        all.into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| SdrError::Parameter(format!("unknown method `{s}`")))
    }
}

/// Settings shared by every estimator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MethodConfig {
    pub opcg: OpcgConfig,
    pub made: MadeConfig,
    /// Ridge added to the predictor covariance before whitening in SIR.
    pub tikhonov: f64,
    pub opg_response: OpgResponse,
}

/// Dispatches to the estimator for `method`.
pub fn fit_method(method: Method, data: &LabeledDataset, h: f64, d: usize, config: &MethodConfig) -> Result<SdrBasis> {
    match method {
        Method::Opcg => opcg_fit(data, h, d, &config.opcg),
        Method::Made => Ok(made_fit(data, h, d, &MadeInit::Coordinate, &config.made)?.into_basis()),
        Method::OpcgMade => {
            let start = opcg_fit(data, h, d, &config.opcg)?;
            Ok(made_fit(data, h, d, &MadeInit::Basis(start.basis), &config.made)?.into_basis())
        }
        Method::Opg => opg_fit_with(data, h, d, config.opg_response),
        Method::PwOpcg => pw_opcg_fit(data, h, d, &config.opcg),
        Method::PlOpcg => pl_opcg_fit(data, h, d, &config.opcg),
        Method::Sir => sir_fit(data, d, config.tikhonov),
    }
}

/// Response regressed by OPG's local least squares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OpgResponse {
    /// The class label as a number, as in scalar-response OPG.
    #[default]
    Label,
    /// The (m-1)-dimensional encoding, one least squares column per coordinate.
    Encoded,
}

/// Outer product of gradients from local linear least squares on the label.
pub fn opg_fit(data: &LabeledDataset, h: f64, d: usize) -> Result<SdrBasis> {
    opg_fit_with(data, h, d, OpgResponse::Label)
}

pub fn opg_fit_with(data: &LabeledDataset, h: f64, d: usize, response: OpgResponse) -> Result<SdrBasis> {
    let scalar = response == OpgResponse::Label;
    check_dimension(d, data.p())?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(SdrError::Parameter(format!("bandwidth must be positive, got {h}")));
    }
    let (std, record) = standardize(data)?;
    let (n, p) = (std.n(), std.p());
    let k = if scalar { 1 } else { std.family().dim() };
    let x = std.x();
    let slopes: Vec<(DMatrix<f64>, bool)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let w = gaussian_weights_from_coords(x, j, h)?;
            let mut gram = DMatrix::zeros(p + 1, p + 1);
            let mut rhs = DMatrix::zeros(p + 1, k);
            let mut z = DVector::zeros(p + 1);
            for (i, &wi) in w.weights().iter().enumerate() {
                if wi == 0.0 {
                    continue;
                }
                z[0] = 1.0;
                for c in 0..p {
                    z[c + 1] = x[(i, c)] - x[(j, c)];
                }
                gram.ger(wi, &z, &z, 1.0);
                let lab = [std.labels()[i] as f64];
                let y = if scalar { &lab[..] } else { std.encoded_row(i) };
                for r in 0..=p {
                    for c in 0..k {
                        rhs[(r, c)] += wi * z[r] * y[c];
                    }
                }
            }
            let (coef, damped) = match gram.clone().cholesky() {
                Some(ch) => (ch.solve(&rhs), false),
                None => {
                    let delta = 1e-8 * gram.trace().max(1e-300) / (p + 1) as f64;
                    let shifted = &gram + DMatrix::identity(p + 1, p + 1) * delta;
                    let sol = shifted
                        .cholesky()
                        .map(|ch| ch.solve(&rhs))
                        .or_else(|| gram.clone().pseudo_inverse(1e-12).ok().map(|pi| pi * &rhs))
                        .ok_or_else(|| SdrError::EstimationFailed(format!("singular local design at anchor {j}")))?;
                    (sol, true)
                }
            };
            Ok((coef.rows(1, p).into_owned(), damped))
        })
        .collect::<Result<_>>()?;
    let mut lambda = DMatrix::zeros(p, p);
    let mut damped = 0;
    for (b, was_damped) in &slopes {
        lambda += b * b.transpose();
        damped += *was_damped as usize;
    }
    lambda /= n as f64;
    let (values, basis) = top_eigenvectors(&lambda, d);
    let mut diagnostics = Diagnostics {
        n_effective: n,
        ..Diagnostics::default()
    };
    if damped > 0 {
        diagnostics
            .warnings
            .push(format!("{damped} local designs needed a ridge-damped solve"));
    }
    Ok(SdrBasis::from_standardized(basis, values, record, diagnostics))
}

/// Pools `d` directions from each binary subproblem, each weighted by its share of
/// the subproblem's leading eigenvalues, and keeps the top `d`.
fn pooled_binary(
    data: &LabeledDataset,
    h: f64,
    d: usize,
    config: &OpcgConfig,
    problems: Vec<(String, Vec<usize>, Box<dyn Fn(usize) -> bool + Sync>)>,
) -> Result<SdrBasis> {
    check_dimension(d, data.p())?;
    let (std, record) = standardize(data)?;
    let sub_config = OpcgConfig {
        standardize: false,
        ..config.clone()
    };
    let p = std.p();
    let mut pooled = DMatrix::zeros(p, p);
    let mut used = 0;
    let mut diagnostics = Diagnostics::default();
    for (name, rows, positive) in problems {
        if rows.len() < 2 * (d + 1) {
            diagnostics
                .warnings
                .push(format!("{name}: skipped, only {} observations", rows.len()));
            continue;
        }
        let sub = match std.binary_subset(&rows, positive.as_ref()) {
            Ok(sub) => sub,
            Err(e) => {
                diagnostics.warnings.push(format!("{name}: skipped, {e}"));
                continue;
            }
        };
        match opcg_fit(&sub, h, d, &sub_config) {
            Ok(fit) => {
                let total: f64 = fit.eigenvalues.iter().take(d).map(|v| v.max(0.0)).sum();
                for (k, col) in fit.basis.column_iter().enumerate() {
                    let w = if total > 0.0 {
                        fit.eigenvalues[k].max(0.0) / total
                    } else {
                        1.0 / d as f64
                    };
                    pooled += (col * col.transpose()) * w;
                }
                used += 1;
                diagnostics.n_effective += fit.diagnostics.n_effective;
                diagnostics.n_flagged += fit.diagnostics.n_flagged;
                diagnostics
                    .warnings
                    .extend(fit.diagnostics.warnings.into_iter().map(|w| format!("{name}: {w}")));
            }
            Err(e) => diagnostics.warnings.push(format!("{name}: skipped, {e}")),
        }
    }
    if used == 0 {
        return Err(SdrError::EstimationFailed(
            "no binary subproblem could be fitted".into(),
        ));
    }
    let (values, basis) = top_eigenvectors(&pooled, d);
    Ok(SdrBasis::from_standardized(basis, values, record, diagnostics))
}

/// Pairwise OPCG: binary OPCG on every pair of classes, directions pooled.
pub fn pw_opcg_fit(data: &LabeledDataset, h: f64, d: usize, config: &OpcgConfig) -> Result<SdrBasis> {
    let groups = data.indices_by_class();
    let m = data.m();
    let mut problems: Vec<(String, Vec<usize>, Box<dyn Fn(usize) -> bool + Sync>)> = Vec::new();
    for l1 in 1..=m {
        for l2 in l1 + 1..=m {
            let mut rows = groups[l1 - 1].clone();
            rows.extend(&groups[l2 - 1]);
            rows.sort_unstable();
            problems.push((format!("pair {l1}-{l2}"), rows, Box::new(move |l| l == l1)));
        }
    }
    pooled_binary(data, h, d, config, problems)
}

/// Per-label OPCG: one-vs-rest binary OPCG for every class, directions pooled.
pub fn pl_opcg_fit(data: &LabeledDataset, h: f64, d: usize, config: &OpcgConfig) -> Result<SdrBasis> {
    let rows: Vec<usize> = (0..data.n()).collect();
    let problems = (1..=data.m())
        .map(|l| {
            let f: Box<dyn Fn(usize) -> bool + Sync> = Box::new(move |c| c == l);
            (format!("class {l}"), rows.clone(), f)
        })
        .collect();
    pooled_binary(data, h, d, config, problems)
}

/// Sliced inverse regression with the classes as slices.
pub fn sir_fit(data: &LabeledDataset, d: usize, tikhonov: f64) -> Result<SdrBasis> {
    check_dimension(d, data.p())?;
    if d > data.m() - 1 {
        return Err(SdrError::Parameter(format!(
            "SIR recovers at most m - 1 = {} directions, requested {d}",
            data.m() - 1
        )));
    }
    if !(tikhonov >= 0.0) {
        return Err(SdrError::Parameter("tikhonov must be nonnegative".into()));
    }
    let (std, record) = standardize(data)?;
    let (n, p) = (std.n(), std.p());
    let x = std.x();
    // columns are centred, so the covariance is X'X / (n - 1)
    let cov = x.transpose() * x / (n as f64 - 1.0);
    let whiten = inv_sqrt_psd(&cov, tikhonov).ok_or_else(|| {
        SdrError::EstimationFailed("predictor covariance is singular; use a positive tikhonov".into())
    })?;
    let z = x * &whiten;
    let mut m_between = DMatrix::zeros(p, p);
    for rows in std.indices_by_class() {
        let frac = rows.len() as f64 / n as f64;
        let mean = z.select_rows(&rows).row_mean().transpose();
        m_between += (&mean * mean.transpose()) * frac;
    }
    let (values, eta) = top_eigenvectors(&m_between, d);
    let basis = orthonormalize(&(&whiten * eta));
    let basis = crate::linalg::fix_signs(basis);
    Ok(SdrBasis::from_standardized(
        basis,
        values,
        record,
        Diagnostics::default(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projection_distance;
    use crate::links::Family;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn shifted_classes(n: usize, p: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| 1 + i % 2).collect();
        let x = DMatrix::from_fn(n, p, |r, c| {
            let z: f64 = rng.sample(StandardNormal);
            if c == 0 && labels[r] == 2 {
                z + 2.0
            } else {
                z
            }
        });
        LabeledDataset::new(x, labels, Family::categorical(2).unwrap()).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::COMPARED {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("PW-OPCG".parse::<Method>().unwrap(), Method::PwOpcg);
        assert!("dr".parse::<Method>().is_err());
    }

    #[test]
    fn sir_finds_mean_shift() {
        let data = shifted_classes(400, 4, 1);
        let fit = sir_fit(&data, 1, 0.0).unwrap();
        let e1 = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]);
        assert!(projection_distance(&fit.original, &e1) < 0.2);
        assert!(sir_fit(&data, 2, 0.0).is_err());
        let tiny = sir_fit(&data, 1, 1e-12).unwrap();
        assert!(projection_distance(&fit.original, &tiny.original) < 1e-6);
    }

    #[test]
    fn opg_single_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 300;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let labels = (0..n)
            .map(|i| {
                let eta = 1.5 * (x[(i, 0)] + x[(i, 2)]);
                if rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()) {
                    1
                } else {
                    2
                }
            })
            .collect();
        let data = LabeledDataset::new(x, labels, Family::categorical(2).unwrap()).unwrap();
        let fit = opg_fit(&data, 1e3, 1).unwrap();
        let truth = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 1.0]).normalize();
        assert!(projection_distance(&fit.original, &truth) < 0.3);
        let enc = opg_fit_with(&data, 1.0, 1, OpgResponse::Encoded).unwrap();
        let lab = opg_fit_with(&data, 1.0, 1, OpgResponse::Label).unwrap();
        assert!(projection_distance(&enc.basis, &lab.basis) < 1e-8);
    }

    #[test]
    fn binary_pooling_matches_opcg() {
        let data = shifted_classes(120, 3, 2);
        let cfg = OpcgConfig::unrefined();
        let plain = opcg_fit(&data, 1.5, 1, &cfg).unwrap();
        let pw = pw_opcg_fit(&data, 1.5, 1, &cfg).unwrap();
        let pl = pl_opcg_fit(&data, 1.5, 1, &cfg).unwrap();
        assert!(projection_distance(&plain.basis, &pw.basis) < 1e-8);
        assert!(projection_distance(&plain.basis, &pl.basis) < 1e-6);
    }
}
