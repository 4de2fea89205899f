//! Minimum average deviance estimation by alternating minimization.
//!
//! With `B_j = beta B~_j` the local linear GLMs share one `p x d` basis. The
//! local half-step fits `(a_j, B~_j)` on the projected predictors `X beta`; the
//! basis half-step minimizes the summed local deviances over `beta` with the
//! locals held fixed, after which `beta = Q R` is orthonormalized and `R` is
//! absorbed into every `B~_j`, leaving the objective unchanged.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Result, SdrError};
use crate::linalg::{orthonormalize, orthonormalize_with_r, projection_distance};
use crate::links::Family;
use crate::localglm::{
    fit_local_in, gaussian_weights_from_coords, initial_intercept, KernelWeights, OptimizerConfig, Solver,
};
use crate::opcg::{check_dimension, standardize, Diagnostics, SdrBasis, Standardization};
use crate::optim::{hybrid_cg, Objective};

#[derive(Debug, Clone, PartialEq)]
pub struct MadeConfig {
    pub optimizer: OptimizerConfig,
    pub solver: Solver,
    pub max_outer: usize,
    /// Stop when successive projections differ by less than this.
    pub tol: f64,
    /// Iteration cap for the conjugate-gradient basis half-step.
    pub beta_max_iters: usize,
    /// Recompute weights on the projected predictors once the basis settles.
    pub refine: bool,
    /// Projection change below which refined weights switch on.
    pub refine_threshold: f64,
    /// Use weights on the projected predictors from the first step; meant for
    /// starts that are already close, such as an OPCG basis.
    pub refine_from_start: bool,
    pub standardize: bool,
}

impl Default for MadeConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            solver: Solver::HybridCg,
            max_outer: 100,
            tol: 1e-4,
            beta_max_iters: 100,
            refine: true,
            refine_threshold: 0.1,
            refine_from_start: false,
            standardize: true,
        }
    }
}

/// Starting basis, in standardized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum MadeInit {
    /// The first `d` coordinate vectors.
    Coordinate,
    Basis(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MadeState {
    /// `p x d` orthonormal basis in standardized coordinates.
    pub beta: DMatrix<f64>,
    /// `(a_j, B~_j)` with `B~_j` of shape `d x (m-1)`.
    pub local: Vec<(DVector<f64>, DMatrix<f64>)>,
    /// Penalized objective after the last half-step.
    pub objective: f64,
    /// Penalized objective after every outer iteration, starting from the initial local step.
    pub history: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub standardization: Standardization,
    /// Number of anchors whose neighbourhood was too small for a gradient.
    pub degenerate_anchors: usize,
    pub refined: bool,
    pub h: f64,
}

impl MadeState {
    pub fn d(&self) -> usize {
        self.beta.ncols()
    }

    pub fn into_basis(self) -> SdrBasis {
        let mut diagnostics = Diagnostics {
            n_effective: self.local.len() - self.degenerate_anchors,
            n_flagged: self.degenerate_anchors,
            refinement_passes: self.outer_iterations,
            refinement_converged: self.converged,
            ..Diagnostics::default()
        };
        if !self.converged {
            diagnostics.warnings.push(format!(
                "no convergence after {} outer iterations",
                self.outer_iterations
            ));
        }
        SdrBasis::from_standardized(self.beta, DVector::zeros(0), self.standardization, diagnostics)
    }
}

struct Neighbourhoods {
    weights: Vec<KernelWeights>,
    /// Per anchor: `(i, w_ij)` for positive weights.
    active: Vec<Vec<(usize, f64)>>,
}

impl Neighbourhoods {
    fn new(coords: &DMatrix<f64>, h: f64) -> Result<Self> {
        let weights: Vec<KernelWeights> = (0..coords.nrows())
            .map(|j| gaussian_weights_from_coords(coords, j, h))
            .collect::<Result<_>>()?;
        let active = weights
            .iter()
            .map(|w| {
                w.weights()
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v > 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect()
            })
            .collect();
        Ok(Self { weights, active })
    }
}

/// The basis half-step objective in `vec(beta)` (row-major `p x d`).
struct BetaProblem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    family: Family,
    hood: &'a Neighbourhoods,
    local: &'a [(DVector<f64>, DMatrix<f64>)],
    /// `sum_j B~_j B~_j'`, for the penalty `ridge/2 sum_j |beta B~_j|_F^2`.
    gram: DMatrix<f64>,
    ridge: f64,
    p: usize,
    d: usize,
}

impl<'a> BetaProblem<'a> {
    fn project(&self, beta: &[f64]) -> Vec<f64> {
        let (n, p, d) = (self.x.nrows(), self.p, self.d);
        let mut z = vec![0.0; n * d];
        for i in 0..n {
            for r in 0..p {
                let xv = self.x[(i, r)];
                for c in 0..d {
                    z[i * d + c] += xv * beta[r * d + c];
                }
            }
        }
        z
    }

    fn penalty(&self, beta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (p, d) = (self.p, self.d);
        let mut pen = 0.0;
        let mut g_local = vec![0.0; p * d];
        for r in 0..p {
            for c in 0..d {
                let mut s = 0.0;
                for e in 0..d {
                    s += beta[r * d + e] * self.gram[(e, c)];
                }
                g_local[r * d + c] = self.ridge * s;
                pen += beta[r * d + c] * s;
            }
        }
        if let Some(g) = grad {
            for (gi, v) in g.iter_mut().zip(&g_local) {
                *gi += v;
            }
        }
        0.5 * self.ridge * pen
    }

    fn eval(&self, beta: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let n = self.x.nrows();
        let (p, d) = (self.p, self.d);
        let k = self.family.dim();
        let z = self.project(beta);
        let mut acc = vec![0.0; n * d];
        let mut eta = vec![0.0; k];
        let mut mu = vec![0.0; k];
        let mut u = vec![0.0; d];
        let mut f = 0.0;
        for (j, pairs) in self.hood.active.iter().enumerate() {
            let (a, bt) = &self.local[j];
            let bt_zero = bt.iter().all(|v| *v == 0.0);
            let mut cj = vec![0.0; d];
            for &(i, w) in pairs {
                for c in 0..d {
                    u[c] = z[i * d + c] - z[j * d + c];
                }
                for c in 0..k {
                    let mut s = a[c];
                    for r in 0..d {
                        s += bt[(r, c)] * u[r];
                    }
                    eta[c] = s;
                }
                let b = self.family.mean_into(&eta, &mut mu);
                let yi = &self.y[i * k..(i + 1) * k];
                let lin: f64 = eta.iter().zip(yi).map(|(e, y)| e * y).sum();
                f += w * (b - lin);
                if grad.is_some() && !bt_zero {
                    for r in 0..d {
                        let mut g = 0.0;
                        for c in 0..k {
                            g += bt[(r, c)] * (mu[c] - yi[c]);
                        }
                        acc[i * d + r] += w * g;
                        cj[r] += w * g;
                    }
                }
            }
            for r in 0..d {
                acc[j * d + r] -= cj[r];
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            // gradient X'(A - C)
            g.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                for r in 0..p {
                    let xv = self.x[(i, r)];
                    for c in 0..d {
                        g[r * d + c] += xv * acc[i * d + c];
                    }
                }
            }
        }
        f + self.penalty(beta, grad)
    }
}

impl Objective for BetaProblem<'_> {
    fn dim(&self) -> usize {
        self.p * self.d
    }

    fn value(&self, beta: &[f64]) -> f64 {
        self.eval(beta, None)
    }

    fn value_grad(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(beta, Some(grad))
    }
}

fn pack(beta: &DMatrix<f64>) -> Vec<f64> {
    let (p, d) = beta.shape();
    (0..p * d).map(|idx| beta[(idx / d, idx % d)]).collect()
}

fn local_step(
    data: &LabeledDataset,
    beta: &DMatrix<f64>,
    hood: &Neighbourhoods,
    warm: Option<&[(DVector<f64>, DMatrix<f64>)]>,
    config: &MadeConfig,
) -> Result<(Vec<(DVector<f64>, DMatrix<f64>)>, usize)> {
    let z = data.x() * beta;
    let fits: Vec<_> = (0..data.n())
        .into_par_iter()
        .map(|j| {
            let init = warm.map(|w| (&w[j].0, &w[j].1));
            fit_local_in(&z, j, &hood.weights[j], data, &config.optimizer, config.solver, init)
        })
        .collect::<Result<_>>()?;
    let degenerate = fits.iter().filter(|f| f.flags.degenerate).count();
    Ok((fits.into_iter().map(|f| (f.a, f.b)).collect(), degenerate))
}

fn penalized_objective(
    data: &LabeledDataset,
    beta: &DMatrix<f64>,
    hood: &Neighbourhoods,
    local: &[(DVector<f64>, DMatrix<f64>)],
    ridge: f64,
) -> f64 {
    let prob = beta_problem(data, hood, local, ridge, beta.ncols());
    let intercepts: f64 = local.iter().map(|(a, _)| a.norm_squared()).sum();
    prob.value(&pack(beta)) + 0.5 * ridge * intercepts
}

fn beta_problem<'a>(
    data: &'a LabeledDataset,
    hood: &'a Neighbourhoods,
    local: &'a [(DVector<f64>, DMatrix<f64>)],
    ridge: f64,
    d: usize,
) -> BetaProblem<'a> {
    let mut gram = DMatrix::zeros(d, d);
    for (_, bt) in local {
        gram += bt * bt.transpose();
    }
    BetaProblem {
        x: data.x(),
        y: data.encoded(),
        family: data.family(),
        hood,
        local,
        gram,
        ridge,
        p: data.p(),
        d,
    }
}

/// Alternating minimization of the shared-basis local deviance.
pub fn made_fit(data: &LabeledDataset, h: f64, d: usize, init: &MadeInit, config: &MadeConfig) -> Result<MadeState> {
    check_dimension(d, data.p())?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(SdrError::Parameter(format!("bandwidth must be positive, got {h}")));
    }
    config.optimizer.validate()?;
    let (work, record) = if config.standardize {
        standardize(data)?
    } else {
        (data.clone(), Standardization::identity(data.p()))
    };
    let p = work.p();
    let mut beta = match init {
        MadeInit::Coordinate => DMatrix::from_fn(p, d, |r, c| if r == c { 1.0 } else { 0.0 }),
        MadeInit::Basis(b) => {
            if b.shape() != (p, d) {
                return Err(SdrError::Parameter(format!(
                    "initial basis must be {p} x {d}, got {:?}",
                    b.shape()
                )));
            }
            orthonormalize(b)
        }
    };
    let ridge = config.optimizer.ridge;
    let mut refined = config.refine && config.refine_from_start;
    let mut hood = if refined {
        Neighbourhoods::new(&(work.x() * &beta), h)?
    } else {
        Neighbourhoods::new(work.x(), h)?
    };
    let (mut local, mut degenerate) = local_step(&work, &beta, &hood, None, config)?;
    let mut objective = penalized_objective(&work, &beta, &hood, &local, ridge);
    let mut history = vec![objective];
    let mut converged = false;
    let mut outer = 0;

    while outer < config.max_outer {
        outer += 1;
        let prob = beta_problem(&work, &hood, &local, ridge, d);
        let mut cg = config.optimizer.cg_config(p * d);
        cg.max_iters = config.beta_max_iters;
        cg.grad_tol *= work.n() as f64;
        let report = hybrid_cg(&prob, pack(&beta), &cg)?;
        let raw = DMatrix::from_row_slice(p, d, &report.x);
        let (q, r) = orthonormalize_with_r(&raw);
        if r.diagonal().iter().any(|v| v.abs() < 1e-12) {
            return Err(SdrError::EstimationFailed("basis update lost rank".into()));
        }
        for (_, bt) in local.iter_mut() {
            *bt = &r * &*bt;
        }
        let change = projection_distance(&q, &beta);
        beta = q;

        if config.refine && (refined || change < config.refine_threshold) {
            refined = true;
            hood = Neighbourhoods::new(&(work.x() * &beta), h)?;
        }
        let (next, deg) = local_step(&work, &beta, &hood, Some(&local), config)?;
        local = next;
        degenerate = deg;
        objective = penalized_objective(&work, &beta, &hood, &local, ridge);
        history.push(objective);
        if change < config.tol {
            converged = true;
            break;
        }
    }

    Ok(MadeState {
        beta,
        local,
        objective,
        history,
        outer_iterations: outer,
        converged,
        standardization: record,
        degenerate_anchors: degenerate,
        refined,
        h,
    })
}

/// Unpenalized summed local deviance of a state on the data it was fitted to.
pub fn made_objective(state: &MadeState, data: &LabeledDataset, h: f64) -> Result<f64> {
    if state.local.len() != data.n() || state.beta.nrows() != data.p() {
        return Err(SdrError::Parameter("state does not match the data".into()));
    }
    let work = data.with_x(state.standardization.apply(data.x())?)?;
    let coords = if state.refined {
        work.x() * &state.beta
    } else {
        work.x().clone()
    };
    let hood = Neighbourhoods::new(&coords, h)?;
    let prob = beta_problem(&work, &hood, &state.local, 0.0, state.d());
    Ok(prob.value(&pack(&state.beta)))
}

/// Intercept-only starting locals, for evaluating the objective at a fixed basis.
pub fn null_locals(data: &LabeledDataset, h: f64, d: usize) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    let hood = Neighbourhoods::new(data.x(), h)?;
    let k = data.family().dim();
    Ok(hood
        .weights
        .iter()
        .map(|w| (initial_intercept(data, w), DMatrix::zeros(d, k)))
        .collect())
}
