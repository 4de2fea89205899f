//! Structural dimension by predictor augmentation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Result, SdrError};
use crate::linalg::sym_eigen_desc;
use crate::opcg::{candidate_matrix, standardize, OpcgConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub d_hat: usize,
    /// Combined criterion for `k = 0..=d_max`.
    pub objective_curve: Vec<f64>,
    /// Scree part, `lambda_{k+1} / (1 + sum)`.
    pub eigenvalue_component: Vec<f64>,
    /// Noise-block part, `phi(k) / (1 + sum)`; zero at `k = 0`.
    pub eigenvector_component: Vec<f64>,
    pub replications: usize,
    pub r_augment: usize,
}

/// Number of noise columns used when none is given: `ceil(p / 5)`.
pub fn default_augment(p: usize) -> usize {
    p.div_ceil(5).max(1)
}

/// Largest candidate dimension when none is given: `floor(p / ln p)`, capped at `p - 1`.
pub fn default_d_max(p: usize) -> usize {
    if p < 2 {
        return 0;
    }
    ((p as f64 / (p as f64).ln()).floor() as usize).clamp(1, p - 1)
}

/// Divides by one plus the total, so a uniformly small component stays small.
fn normalized(v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.into_iter().map(|x| x / (1.0 + total)).collect()
}

/// Predictor augmentation on the OPCG candidate matrix.
///
/// Each replication appends `r` standard normal columns to the standardized
/// predictors and records how much of the leading `k` eigenvectors falls in the
/// noise block. The scree part uses the eigenvalues of the un-augmented matrix.
pub fn predictor_augmentation(
    data: &LabeledDataset,
    h: f64,
    d_max: usize,
    r: usize,
    reps: usize,
    seed: u64,
    config: &OpcgConfig,
) -> Result<OrderEstimate> {
    let p = data.p();
    if d_max >= p {
        return Err(SdrError::Parameter(format!("d_max must be below p = {p}, got {d_max}")));
    }
    if r == 0 || reps == 0 {
        return Err(SdrError::Parameter("augmentation needs r >= 1 and reps >= 1".into()));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(SdrError::Parameter(format!("bandwidth must be positive, got {h}")));
    }
    let work = if config.standardize {
        standardize(data)?.0
    } else {
        data.clone()
    };
    let single = OpcgConfig {
        refine: 0,
        standardize: false,
        ..config.clone()
    };

    let (values, _) = sym_eigen_desc(&candidate_matrix(&work, h, &single)?.lambda);
    let scree: Vec<f64> = (0..=d_max).map(|k| values[k].max(0.0)).collect();

    let n = work.n();
    let block: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let mut x = DMatrix::zeros(n, p + r);
            x.columns_mut(0, p).copy_from(work.x());
            for c in p..p + r {
                for i in 0..n {
                    x[(i, c)] = rng.sample(StandardNormal);
                }
            }
            let augmented = work.with_x(x)?;
            let (_, vectors) = sym_eigen_desc(&candidate_matrix(&augmented, h, &single)?.lambda);
            let mut cumulative = vec![0.0; d_max + 1];
            for k in 1..=d_max {
                let tail = vectors.view((p, k - 1), (r, 1)).norm_squared();
                cumulative[k] = cumulative[k - 1] + tail;
            }
            Ok(cumulative)
        })
        .collect::<Result<_>>()?;

    let mut phi = vec![0.0; d_max + 1];
    for rep in &block {
        for (acc, v) in phi.iter_mut().zip(rep) {
            *acc += v / reps as f64;
        }
    }
    let eigenvalue_component = normalized(scree);
    let eigenvector_component = normalized(phi);
    let objective_curve: Vec<f64> = eigenvalue_component
        .iter()
        .zip(&eigenvector_component)
        .map(|(a, b)| a + b)
        .collect();
    let d_hat = objective_curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    Ok(OrderEstimate {
        d_hat,
        objective_curve,
        eigenvalue_component,
        eigenvector_component,
        replications: reps,
        r_augment: r,
    })
}
