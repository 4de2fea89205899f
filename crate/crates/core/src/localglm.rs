//! Kernel-weighted local linear multivariate GLM fits at a single anchor.

use nalgebra::{DMatrix, DVector};

use crate::dataset::LabeledDataset;
use crate::error::{Result, SdrError};
use crate::links::{CanonicalParam, Family};
use crate::optim::{hybrid_cg, CgConfig, Objective};

/// Fits whose intercept exceeds this in max-norm are flagged as separated.
pub const SEPARATION_THRESHOLD: f64 = 30.0;

/// Laplace smoothing mass spread over the classes when initializing the intercept.
const INIT_SMOOTHING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Gradient tolerance per parameter; the stopping rule uses `grad_tol * sqrt(#params)`.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// Penalty `ridge/2 * (|a|^2 + |B|_F^2)` on the normalized-weight objective.
    pub ridge: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iters: 500,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            ridge: 1e-2,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(SdrError::Parameter(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        self.cg_config(1).validate()
    }

    pub(crate) fn cg_config(&self, nparams: usize) -> CgConfig {
        CgConfig {
            grad_tol: self.grad_tol * (nparams as f64).sqrt(),
            max_iters: self.max_iters,
            armijo_c: self.armijo_c,
            backtrack_factor: self.backtrack_factor,
            ..CgConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    #[default]
    HybridCg,
    FisherScoring,
}

/// Normalized kernel weights for one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    w: Vec<f64>,
    h: f64,
    anchor: usize,
}

impl KernelWeights {
    /// Weights `1/n` everywhere; the `h -> infinity` limit.
    pub fn uniform(n: usize, anchor: usize) -> Self {
        Self {
            w: vec![1.0 / n as f64; n],
            h: f64::INFINITY,
            anchor,
        }
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_raw(raw: Vec<f64>, h: f64, anchor: usize) -> Result<Self> {
        if raw.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SdrError::Parameter(
                "kernel weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(SdrError::DegenerateNeighborhood(anchor));
        }
        Ok(Self {
            w: raw.into_iter().map(|v| v / total).collect(),
            h,
            anchor,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    /// `1 / sum w_i^2`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.w.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Gaussian kernel weights about row `anchor` of `x`.
///
/// With `direction` the distances are measured on `beta'(X_i - X_j)`.
pub fn gaussian_weights(
    x: &DMatrix<f64>,
    anchor: usize,
    h: f64,
    direction: Option<&DMatrix<f64>>,
) -> Result<KernelWeights> {
    if anchor >= x.nrows() {
        return Err(SdrError::Parameter(format!("anchor {anchor} out of range")));
    }
    match direction {
        Some(beta) => {
            if beta.nrows() != x.ncols() {
                return Err(SdrError::Parameter("direction has the wrong number of rows".into()));
            }
            gaussian_weights_from_coords(&(x * beta), anchor, h)
        }
        None => gaussian_weights_from_coords(x, anchor, h),
    }
}

pub(crate) fn gaussian_weights_from_coords(coords: &DMatrix<f64>, anchor: usize, h: f64) -> Result<KernelWeights> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(SdrError::Parameter(format!("bandwidth must be positive, got {h}")));
    }
    let (n, q) = coords.shape();
    let scale = -0.5 / (h * h);
    let mut raw = vec![0.0; n];
    for (i, r) in raw.iter_mut().enumerate() {
        let mut d2 = 0.0;
        for c in 0..q {
            let d = coords[(i, c)] - coords[(anchor, c)];
            d2 += d * d;
        }
        *r = (scale * d2).exp();
    }
    KernelWeights::from_raw(raw, h, anchor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitFlags {
    /// Effective sample size below `m` or too few weighted points; `B` is zero.
    pub degenerate: bool,
    /// Intercept beyond the separation threshold.
    pub separated: bool,
    /// Fisher scoring needed a ridge-damped solve.
    pub damped: bool,
}

impl FitFlags {
    /// Whether the fit is left out of candidate-matrix averages.
    pub fn excluded(&self) -> bool {
        self.degenerate || self.separated
    }
}

/// Local intercept and gradient at one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub anchor: usize,
    pub a: DVector<f64>,
    /// `q x (m-1)` gradient of the canonical parameter.
    pub b: DMatrix<f64>,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub converged: bool,
    pub objective: f64,
    pub flags: FitFlags,
}

impl LocalFit {
    pub fn a_param(&self) -> Result<CanonicalParam> {
        CanonicalParam::new(self.a.as_slice().to_vec())
    }
}

/// Weighted local negative log-likelihood in `(a, B)`, packed row-major as the
/// `(q+1) x k` matrix `[a'; B]`.
#[derive(Debug, Clone)]
pub struct LocalProblem {
    z: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    q: usize,
    k: usize,
    family: Family,
    ridge: f64,
}

impl LocalProblem {
    /// Problem on the differences `X_i - X_j` of the dataset's predictors.
    pub fn new(data: &LabeledDataset, anchor: usize, weights: &KernelWeights, ridge: f64) -> Self {
        Self::from_design(data.x(), data, anchor, weights, ridge)
    }

    /// Problem on the differences of arbitrary coordinates sharing the dataset's rows.
    pub(crate) fn from_design(
        coords: &DMatrix<f64>,
        data: &LabeledDataset,
        anchor: usize,
        weights: &KernelWeights,
        ridge: f64,
    ) -> Self {
        let (n, q) = coords.shape();
        let family = data.family();
        let k = family.dim();
        let w_all = weights.weights();
        let active = w_all.iter().filter(|v| **v > 0.0).count();
        let mut z = Vec::with_capacity(active * q);
        let mut y = Vec::with_capacity(active * k);
        let mut w = Vec::with_capacity(active);
        for i in 0..n {
            if w_all[i] > 0.0 {
                w.push(w_all[i]);
                for c in 0..q {
                    z.push(coords[(i, c)] - coords[(anchor, c)]);
                }
                y.extend_from_slice(data.encoded_row(i));
            }
        }
        Self {
            z,
            y,
            w,
            q,
            k,
            family,
            ridge,
        }
    }

    pub fn n_params(&self) -> usize {
        (self.q + 1) * self.k
    }

    pub fn pack(a: &DVector<f64>, b: &DMatrix<f64>) -> Vec<f64> {
        let k = a.len();
        let mut out = Vec::with_capacity((b.nrows() + 1) * k);
        out.extend(a.iter());
        for r in 0..b.nrows() {
            for c in 0..k {
                out.push(b[(r, c)]);
            }
        }
        out
    }

    pub fn unpack(&self, params: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k;
        let a = DVector::from_column_slice(&params[..k]);
        let b = DMatrix::from_row_slice(self.q, k, &params[k..]);
        (a, b)
    }

    fn eta(&self, params: &[f64], i: usize, eta: &mut [f64]) {
        let (q, k) = (self.q, self.k);
        let zi = &self.z[i * q..(i + 1) * q];
        eta.copy_from_slice(&params[..k]);
        for (r, zr) in zi.iter().enumerate() {
            let row = &params[(r + 1) * k..(r + 2) * k];
            for (e, b) in eta.iter_mut().zip(row) {
                *e += zr * b;
            }
        }
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        0.5 * self.ridge * params.iter().map(|v| v * v).sum::<f64>()
    }

    /// Weighted Fisher information plus the ridge, `sum_i w_i V_i (x) z_i z_i' + ridge I`.
    pub fn information(&self, params: &[f64]) -> DMatrix<f64> {
        let (q, k) = (self.q, self.k);
        let np = self.n_params();
        let mut h = DMatrix::zeros(np, np);
        let mut eta = vec![0.0; k];
        let mut mu = vec![0.0; k];
        let mut var = vec![0.0; k * k];
        let mut zt = vec![1.0; q + 1];
        for i in 0..self.w.len() {
            self.eta(params, i, &mut eta);
            self.family.mean_into(&eta, &mut mu);
            self.family.variance_from_mean(&mu, &mut var);
            zt[1..].copy_from_slice(&self.z[i * q..(i + 1) * q]);
            let wi = self.w[i];
            for p1 in 0..np {
                let (r1, c1) = (p1 / k, p1 % k);
                let s1 = wi * zt[r1];
                for p2 in p1..np {
                    let (r2, c2) = (p2 / k, p2 % k);
                    h[(p1, p2)] += s1 * zt[r2] * var[c1 * k + c2];
                }
            }
        }
        for p1 in 0..np {
            h[(p1, p1)] += self.ridge;
            for p2 in 0..p1 {
                h[(p1, p2)] = h[(p2, p1)];
            }
        }
        h
    }
}

impl Objective for LocalProblem {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn value(&self, params: &[f64]) -> f64 {
        let k = self.k;
        let mut eta = vec![0.0; k];
        let mut f = 0.0;
        for i in 0..self.w.len() {
            self.eta(params, i, &mut eta);
            let yi = &self.y[i * k..(i + 1) * k];
            let lin: f64 = eta.iter().zip(yi).map(|(e, y)| e * y).sum();
            f += self.w[i] * (self.family.cumulant(&eta) - lin);
        }
        f + self.penalty(params)
    }

    fn value_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let (q, k) = (self.q, self.k);
        let mut eta = vec![0.0; k];
        let mut mu = vec![0.0; k];
        for (g, p) in grad.iter_mut().zip(params) {
            *g = self.ridge * p;
        }
        let mut f = 0.0;
        for i in 0..self.w.len() {
            self.eta(params, i, &mut eta);
            let b = self.family.mean_into(&eta, &mut mu);
            let yi = &self.y[i * k..(i + 1) * k];
            let wi = self.w[i];
            let mut lin = 0.0;
            for c in 0..k {
                lin += eta[c] * yi[c];
                mu[c] = wi * (mu[c] - yi[c]);
            }
            f += wi * (b - lin);
            for (g, r) in grad[..k].iter_mut().zip(&mu) {
                *g += r;
            }
            let zi = &self.z[i * q..(i + 1) * q];
            for (row, zr) in zi.iter().enumerate() {
                let g_row = &mut grad[(row + 1) * k..(row + 2) * k];
                for (g, r) in g_row.iter_mut().zip(&mu) {
                    *g += zr * r;
                }
            }
        }
        f + self.penalty(params)
    }
}

/// `sum_i w_i [ -eta_i'Y_i + b(eta_i) ] + ridge/2 (|a|^2 + |B|_F^2)` with
/// `eta_i = a + B'(X_i - X_j)`.
pub fn local_negloglik(
    a: &DVector<f64>,
    b: &DMatrix<f64>,
    anchor: usize,
    weights: &KernelWeights,
    data: &LabeledDataset,
    ridge: f64,
) -> f64 {
    let prob = LocalProblem::new(data, anchor, weights, ridge);
    prob.value(&LocalProblem::pack(a, b))
}

/// Canonical link of the Laplace-smoothed weighted class frequencies.
pub fn initial_intercept(data: &LabeledDataset, weights: &KernelWeights) -> DVector<f64> {
    let m = data.m();
    let mut freq = vec![INIT_SMOOTHING / m as f64; m];
    for (w, &l) in weights.weights().iter().zip(data.labels()) {
        freq[l - 1] += w;
    }
    let total: f64 = freq.iter().sum();
    freq.iter_mut().for_each(|f| *f /= total);
    data.family()
        .link_from_probabilities(&freq)
        .map(|t| t.into_vector())
        .unwrap_or_else(|_| DVector::zeros(m - 1))
}

/// Minimizes the local objective with the hybrid conjugate gradient method.
pub fn fit_local(
    anchor: usize,
    weights: &KernelWeights,
    data: &LabeledDataset,
    config: &OptimizerConfig,
    init: Option<(&DVector<f64>, &DMatrix<f64>)>,
) -> Result<LocalFit> {
    fit_local_in(data.x(), anchor, weights, data, config, Solver::HybridCg, init)
}

/// Minimizes the local objective by damped Fisher scoring.
pub fn fisher_scoring_local(
    anchor: usize,
    weights: &KernelWeights,
    data: &LabeledDataset,
    config: &OptimizerConfig,
    init: Option<(&DVector<f64>, &DMatrix<f64>)>,
) -> Result<LocalFit> {
    fit_local_in(data.x(), anchor, weights, data, config, Solver::FisherScoring, init)
}

/// Local fit on the differences of `coords` (the predictors or a projection of them).
pub(crate) fn fit_local_in(
    coords: &DMatrix<f64>,
    anchor: usize,
    weights: &KernelWeights,
    data: &LabeledDataset,
    config: &OptimizerConfig,
    solver: Solver,
    init: Option<(&DVector<f64>, &DMatrix<f64>)>,
) -> Result<LocalFit> {
    let q = coords.ncols();
    let k = data.family().dim();
    if weights.weights().len() != data.n() || coords.nrows() != data.n() {
        return Err(SdrError::Parameter("weights and data disagree on n".into()));
    }
    if let Some((a, b)) = init {
        if a.len() != k || b.shape() != (q, k) {
            return Err(SdrError::Parameter("initial value has the wrong shape".into()));
        }
    }
    let prob = LocalProblem::from_design(coords, data, anchor, weights, config.ridge);
    let positive = prob.w.len();
    if weights.effective_sample_size() < data.m() as f64 || positive < q + 1 {
        let a = initial_intercept(data, weights);
        let b = DMatrix::zeros(q, k);
        let params = LocalProblem::pack(&a, &b);
        let mut g = vec![0.0; params.len()];
        let objective = prob.value_grad(&params, &mut g);
        return Ok(LocalFit {
            anchor,
            a,
            b,
            iterations: 0,
            final_gradient_norm: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
            converged: false,
            objective,
            flags: FitFlags {
                degenerate: true,
                ..FitFlags::default()
            },
        });
    }
    let x0 = match init {
        Some((a, b)) => LocalProblem::pack(a, b),
        None => LocalProblem::pack(&initial_intercept(data, weights), &DMatrix::zeros(q, k)),
    };
    let cg = config.cg_config(prob.n_params());
    let (params, value, gnorm, iterations, converged, damped) = match solver {
        Solver::HybridCg => {
            let r = hybrid_cg(&prob, x0, &cg)?;
            (r.x, r.value, r.grad_norm, r.iterations, r.converged, false)
        }
        Solver::FisherScoring => fisher_scoring(&prob, x0, &cg)?,
    };
    let (a, b) = prob.unpack(&params);
    let separated = a.amax() > SEPARATION_THRESHOLD;
    Ok(LocalFit {
        anchor,
        a,
        b,
        iterations,
        final_gradient_norm: gnorm,
        converged,
        objective: value,
        flags: FitFlags {
            degenerate: false,
            separated,
            damped,
        },
    })
}

type ScoringOutcome = (Vec<f64>, f64, f64, usize, bool, bool);

fn fisher_scoring(prob: &LocalProblem, x0: Vec<f64>, cg: &CgConfig) -> Result<ScoringOutcome> {
    let np = prob.n_params();
    let mut x = x0;
    let mut g = vec![0.0; np];
    let mut f = prob.value_grad(&x, &mut g);
    if !f.is_finite() {
        return Err(SdrError::Divergence(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iterations = 0;
    let mut damped = false;
    let mut trial = vec![0.0; np];
    let mut g_trial = vec![0.0; np];
    while iterations < cg.max_iters && gnorm > cg.grad_tol {
        let info = prob.information(&x);
        let rhs = DVector::from_iterator(np, g.iter().map(|v| -v));
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                damped = true;
                let scale = info.diagonal().amax().max(1.0);
                let mut delta = 1e-10 * scale;
                loop {
                    let shifted = &info + DMatrix::identity(np, np) * delta;
                    if let Some(ch) = shifted.cholesky() {
                        break ch.solve(&rhs);
                    }
                    delta *= 10.0;
                    if delta > 1e6 * scale {
                        return Err(SdrError::Divergence(
                            "information matrix is not positive definite".into(),
                        ));
                    }
                }
            }
        };
        let gd: f64 = step.iter().zip(&g).map(|(s, gi)| s * gi).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=60 {
            for ((tr, xi), s) in trial.iter_mut().zip(&x).zip(step.iter()) {
                *tr = xi + t * s;
            }
            let v = prob.value_grad(&trial, &mut g_trial);
            if v.is_finite() && v <= f + cg.armijo_c * t * gd && v < f {
                x.copy_from_slice(&trial);
                g.copy_from_slice(&g_trial);
                f = v;
                accepted = true;
                break;
            }
            t *= cg.backtrack_factor;
        }
        if !accepted {
            break;
        }
        iterations += 1;
        gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    Ok((x, f, gnorm, iterations, gnorm <= cg.grad_tol, damped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, p: usize, m: usize, ordinal: bool, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let mut labels: Vec<usize> = (0..n)
            .map(|i| {
                let s = x[(i, 0)] + 0.5 * x[(i, p - 1)] + 0.3 * (rng.random::<f64>() - 0.5);
                (((s + 1.5) / 3.0 * m as f64).floor() as usize).clamp(0, m - 1) + 1
            })
            .collect();
        for l in 1..=m {
            labels[l - 1] = l;
        }
        let fam = if ordinal {
            Family::ordinal(m)
        } else {
            Family::categorical(m)
        }
        .unwrap();
        LabeledDataset::new(x, labels, fam).unwrap()
    }

    #[test]
    fn weights_examples() {
        let x = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        let w = gaussian_weights(&x, 0, 1.0, None).unwrap();
        assert_eq!(w.weights(), &[0.5, 0.5]);

        let x = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let w = gaussian_weights(&x, 0, 2.0, None).unwrap();
        assert_relative_eq!(w.weights()[0] / w.weights()[1], 0.5f64.exp(), epsilon = 1e-12);

        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 5.0, 1.0, -3.0]);
        let beta = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let w = gaussian_weights(&x, 0, 1.0, Some(&beta)).unwrap();
        assert_eq!(w.weights()[0], w.weights()[1]);

        assert!(gaussian_weights(&x, 0, 0.0, None).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (m, ordinal) in [(2, false), (3, false), (5, false), (2, true), (3, true), (5, true)] {
            let data = random_data(40, 3, m, ordinal, 11 + m as u64);
            let w = gaussian_weights(data.x(), 4, 0.8, None).unwrap();
            let prob = LocalProblem::new(&data, 4, &w, 0.05);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let x: Vec<f64> = (0..prob.n_params()).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut g = vec![0.0; x.len()];
            prob.value_grad(&x, &mut g);
            for j in 0..x.len() {
                let h = 1e-5;
                let mut up = x.clone();
                let mut dn = x.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (prob.value(&up) - prob.value(&dn)) / (2.0 * h);
                assert!(
                    (fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-3),
                    "m={m} j={j} fd={fd} g={}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn intercept_only_value_is_weighted_entropy() {
        let data = random_data(30, 2, 3, false, 5);
        let w = gaussian_weights(data.x(), 0, 0.7, None).unwrap();
        let mut freq = [0.0; 3];
        for (wi, &l) in w.weights().iter().zip(data.labels()) {
            freq[l - 1] += wi;
        }
        let a = data.family().link_from_probabilities(&freq).unwrap().into_vector();
        let v = local_negloglik(&a, &DMatrix::zeros(2, 2), 0, &w, &data, 0.0);
        let entropy: f64 = -freq.iter().map(|p| p * p.ln()).sum::<f64>();
        assert_relative_eq!(v, entropy, epsilon = 1e-12);
    }

    #[test]
    fn solvers_agree_and_descend() {
        for ordinal in [false, true] {
            let data = random_data(80, 3, 3, ordinal, 21);
            let w = gaussian_weights(data.x(), 7, 1.0, None).unwrap();
            // parameter error is bounded by gradient norm / smallest curvature (~0.02 here)
            let cfg = OptimizerConfig {
                grad_tol: 1e-8,
                ..OptimizerConfig::default()
            };
            let cg = fit_local(7, &w, &data, &cfg, None).unwrap();
            let fs = fisher_scoring_local(7, &w, &data, &cfg, None).unwrap();
            assert!(cg.converged && fs.converged);
            assert!((&cg.b - &fs.b).amax() < 1e-5);
            assert!((&cg.a - &fs.a).amax() < 1e-5);

            let prob = LocalProblem::new(&data, 7, &w, cfg.ridge);
            let x0 = LocalProblem::pack(&initial_intercept(&data, &w), &DMatrix::zeros(3, 2));
            let rep = hybrid_cg(&prob, x0, &cfg.cg_config(prob.n_params())).unwrap();
            assert!(rep.history.windows(2).all(|h| h[1] < h[0]));
        }
    }

    #[test]
    fn binary_families_fit_identically() {
        let cat = random_data(60, 2, 2, false, 8);
        let ord = cat.with_kind(crate::links::FamilyKind::Ordinal).unwrap();
        let w = gaussian_weights(cat.x(), 3, 1.0, None).unwrap();
        let cfg = OptimizerConfig::default();
        let fc = fit_local(3, &w, &cat, &cfg, None).unwrap();
        let fo = fit_local(3, &w, &ord, &cfg, None).unwrap();
        // the ordinal encoding is 1 - S, so the canonical parameter flips sign
        assert!((&fc.a + &fo.a).amax() < 1e-5);
        assert!((&fc.b + &fo.b).amax() < 1e-5);
    }

    #[test]
    fn degenerate_neighborhoods_are_flagged() {
        let x = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        let data = LabeledDataset::new(x, vec![1, 2], Family::categorical(2).unwrap()).unwrap();
        for j in 0..2 {
            let w = gaussian_weights(data.x(), j, 1.0, None).unwrap();
            let f = fit_local(j, &w, &data, &OptimizerConfig::default(), None).unwrap();
            assert!(f.flags.degenerate);
            assert_eq!(f.b, DMatrix::zeros(3, 1));
        }
    }

    #[test]
    fn fisher_step_is_newton_fast() {
        let data = random_data(200, 2, 3, false, 2);
        let w = KernelWeights::uniform(200, 0);
        let cfg = OptimizerConfig::default();
        let exact = fisher_scoring_local(0, &w, &data, &cfg, None).unwrap();
        // start near the optimum and take one scoring step
        let a0 = exact.a.map(|v| v + 0.05);
        let b0 = exact.b.map(|v| v - 0.05);
        let prob = LocalProblem::new(&data, 0, &w, cfg.ridge);
        let mut g = vec![0.0; prob.n_params()];
        prob.value_grad(&LocalProblem::pack(&a0, &b0), &mut g);
        let g0 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let one = OptimizerConfig { max_iters: 1, ..cfg };
        let f1 = fisher_scoring_local(0, &w, &data, &one, Some((&a0, &b0))).unwrap();
        assert!(f1.final_gradient_norm * 10.0 <= g0);
    }
}
