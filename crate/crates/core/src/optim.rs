//! Hybrid nonlinear conjugate gradient with an Armijo backtracking line search.

use crate::error::{Result, SdrError};

/// Smooth objective with an analytic gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the value.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Absolute tolerance on the Euclidean gradient norm.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
    /// Maximum secant refinements of an accepted step.
    pub max_expansions: usize,
    /// Refinement stops once `|g(t)'d| <= curvature * |g(0)'d|`.
    pub curvature: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iters: 500,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            max_backtracks: 60,
            max_expansions: 10,
            curvature: 0.1,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo_c > 0.0 && self.armijo_c < 0.5) {
            return Err(SdrError::Parameter(format!(
                "armijo_c must lie in (0, 0.5), got {}",
                self.armijo_c
            )));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(SdrError::Parameter(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if !(self.grad_tol > 0.0) || !(self.initial_step > 0.0) {
            return Err(SdrError::Parameter("grad_tol and initial_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CgReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn step_to(x: &[f64], d: &[f64], t: f64, out: &mut [f64]) {
    for ((o, xi), di) in out.iter_mut().zip(x).zip(d) {
        *o = xi + t * di;
    }
}

/// Minimizes `obj` from `x0`.
///
/// Directions use `beta = max(0, min(beta_HS, beta_DY))` and fall back to steepest
/// descent whenever the result is not a descent direction. The trial step is
/// shrunk by `backtrack_factor` until the Armijo condition holds and is then
/// refined by secant steps on the directional derivative.
pub fn hybrid_cg<O: Objective + ?Sized>(obj: &O, x0: Vec<f64>, cfg: &CgConfig) -> Result<CgReport> {
    let n = obj.dim();
    if x0.len() != n {
        return Err(SdrError::Parameter(format!(
            "starting point has length {}, objective expects {n}",
            x0.len()
        )));
    }
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = obj.value_grad(&x, &mut g);
    if !f.is_finite() {
        return Err(SdrError::Divergence(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut history = vec![f];
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut best = vec![0.0; n];
    let mut g_best = vec![0.0; n];
    let mut iterations = 0;
    let mut gnorm = dot(&g, &g).sqrt();
    let mut prev: Option<(f64, f64)> = None;

    while iterations < cfg.max_iters && gnorm > cfg.grad_tol {
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            gd = -gnorm * gnorm;
        }

        // first trial step: `initial_step` on the first iteration, afterwards the
        // previous step rescaled by the ratio of directional derivatives
        let t0 = match prev {
            Some((t_prev, gd_prev)) => (t_prev * gd_prev / gd).clamp(1e-10, 1e10),
            None => cfg.initial_step,
        };
        let mut t_acc = t0;
        let mut accepted = line_search(
            obj,
            &x,
            f,
            gd,
            &d,
            cfg,
            &mut trial,
            &mut g_new,
            &mut best,
            &mut g_best,
            t0,
            &mut t_acc,
        );
        if accepted.is_none() && d.iter().zip(&g).any(|(di, gi)| *di != -gi) {
            // conjugate direction failed; retry along the negative gradient
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            gd = -gnorm * gnorm;
            accepted = line_search(
                obj,
                &x,
                f,
                gd,
                &d,
                cfg,
                &mut trial,
                &mut g_new,
                &mut best,
                &mut g_best,
                cfg.initial_step,
                &mut t_acc,
            );
        }
        let Some(f_new) = accepted else {
            break;
        };
        iterations += 1;
        prev = Some((t_acc, gd));

        // y = g_new - g, stored in trial
        for ((t, gn), go) in trial.iter_mut().zip(&g_best).zip(&g) {
            *t = gn - go;
        }
        let dy = dot(&d, &trial);
        let beta = if dy > 0.0 {
            let hs = dot(&g_best, &trial) / dy;
            let dyk = dot(&g_best, &g_best) / dy;
            hs.min(dyk).max(0.0)
        } else {
            0.0
        };
        x.copy_from_slice(&best);
        g.copy_from_slice(&g_best);
        f = f_new;
        history.push(f);
        gnorm = dot(&g, &g).sqrt();
        for (di, gi) in d.iter_mut().zip(&g) {
            *di = -gi + beta * *di;
        }
    }

    Ok(CgReport {
        x,
        value: f,
        grad_norm: gnorm,
        iterations,
        converged: gnorm <= cfg.grad_tol,
        history,
    })
}

/// Returns the accepted value, with the point in `best` and its gradient in `g_best`.
#[allow(clippy::too_many_arguments)]
fn line_search<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    f: f64,
    gd: f64,
    d: &[f64],
    cfg: &CgConfig,
    trial: &mut [f64],
    g_trial: &mut [f64],
    best: &mut [f64],
    g_best: &mut [f64],
    t0: f64,
    t_out: &mut f64,
) -> Option<f64> {
    let armijo = |t: f64, v: f64| v.is_finite() && v <= f + cfg.armijo_c * t * gd && v < f;
    let mut t = t0;
    let mut found = None;
    for _ in 0..=cfg.max_backtracks {
        step_to(x, d, t, trial);
        let v = obj.value_grad(trial, g_trial);
        if armijo(t, v) {
            best.copy_from_slice(trial);
            g_best.copy_from_slice(g_trial);
            found = Some((t, v));
            break;
        }
        t *= cfg.backtrack_factor;
    }
    let (mut t, mut v) = found?;
    // Secant refinement on the directional derivative until the slope has
    // dropped to a fraction of its initial value; each trial must keep the
    // Armijo decrease and improve on the current point.
    for _ in 0..cfg.max_expansions {
        let slope = dot(g_best, d);
        if slope.abs() <= cfg.curvature * gd.abs() {
            break;
        }
        let t_new = if slope - gd > 0.0 {
            (t * gd / (gd - slope)).clamp(0.1 * t, 10.0 * t)
        } else {
            2.0 * t
        };
        step_to(x, d, t_new, trial);
        let v_new = obj.value_grad(trial, g_trial);
        if !(armijo(t_new, v_new) && v_new < v) {
            break;
        }
        best.copy_from_slice(trial);
        g_best.copy_from_slice(g_trial);
        t = t_new;
        v = v_new;
    }
    *t_out = t;
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Quadratic {
        diag: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.diag.len()
        }
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.diag).map(|(x, a)| 0.5 * a * (x - 1.0).powi(2)).sum()
        }
        fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            for ((g, xi), a) in grad.iter_mut().zip(x).zip(&self.diag) {
                *g = a * (xi - 1.0);
            }
            self.value(x)
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            grad[1] = 200.0 * (x[1] - x[0] * x[0]);
            self.value(x)
        }
    }

    #[test]
    fn solves_ill_conditioned_quadratic() {
        let q = Quadratic {
            diag: vec![1.0, 10.0, 100.0, 0.01],
        };
        let r = hybrid_cg(&q, vec![0.0; 4], &CgConfig::default()).unwrap();
        assert!(r.converged);
        for xi in &r.x {
            assert_relative_eq!(*xi, 1.0, epsilon = 1e-4);
        }
        assert!(r.history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn solves_rosenbrock() {
        let cfg = CgConfig {
            max_iters: 5000,
            ..CgConfig::default()
        };
        let r = hybrid_cg(&Rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        assert!(r.converged, "grad norm {}", r.grad_norm);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(r.x[1], 1.0, epsilon = 1e-4);
        assert!(r.history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = CgConfig {
            armijo_c: 1.5,
            ..CgConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stops_at_starting_minimum() {
        let q = Quadratic { diag: vec![1.0, 2.0] };
        let r = hybrid_cg(&q, vec![1.0, 1.0], &CgConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }
}
