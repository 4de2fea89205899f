//! Outer product of canonical gradients.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Result, SdrError};
use crate::linalg::{orthonormalize, projection_distance, top_eigenvectors};
use crate::links::{alt_link_transform, AltLink};
use crate::localglm::{fit_local_in, gaussian_weights_from_coords, LocalFit, OptimizerConfig, Solver};

/// Share of flagged local fits above which a warning is attached.
pub const FLAGGED_WARNING_FRACTION: f64 = 0.2;

/// Column centering and scaling applied before estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: DVector<f64>,
    pub sd: DVector<f64>,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Self {
            mean: DVector::zeros(p),
            sd: DVector::from_element(p, 1.0),
        }
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.mean.amax() <= tol && self.sd.iter().all(|s| (s - 1.0).abs() <= tol)
    }

    /// `(x - mean) / sd`, column by column.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.p() {
            return Err(SdrError::Data(format!(
                "expected {} predictors, got {}",
                self.p(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
            (x[(r, c)] - self.mean[c]) / self.sd[c]
        }))
    }

    /// Maps a basis in standardized coordinates back to the original predictors.
    ///
    /// `beta_std' z = (D^{-1} beta_std)' (x - mean)` with `D = diag(sd)`, so the
    /// original-space span is that of `D^{-1} beta_std`, re-orthonormalized.
    pub fn basis_to_original(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(basis.nrows(), basis.ncols(), |r, c| basis[(r, c)] / self.sd[r]);
        orthonormalize(&scaled)
    }
}

/// Centers each predictor and scales it to unit sample standard deviation.
pub fn standardize(data: &LabeledDataset) -> Result<(LabeledDataset, Standardization)> {
    let x = data.x();
    let (n, p) = x.shape();
    let mut mean = DVector::zeros(p);
    let mut sd = DVector::zeros(p);
    for c in 0..p {
        let col = x.column(c);
        let mu = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let s = var.sqrt();
        if !(s > 1e-12 * mu.abs().max(1.0)) {
            return Err(SdrError::ConstantPredictor(data.predictor_names()[c].clone()));
        }
        mean[c] = mu;
        sd[c] = s;
    }
    let record = Standardization { mean, sd };
    let z = record.apply(x)?;
    Ok((data.with_x(z)?, record))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpcgConfig {
    pub optimizer: OptimizerConfig,
    pub solver: Solver,
    /// Maximum refinement passes with weights on the projected predictors.
    pub refine: usize,
    /// Refinement stops when successive projections differ by less than this.
    pub refine_tol: f64,
    pub standardize: bool,
    /// Build the candidate matrix for an alternative link instead of the canonical one.
    pub alt_link: Option<AltLink>,
}

impl Default for OpcgConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            solver: Solver::HybridCg,
            refine: 5,
            refine_tol: 1e-4,
            standardize: true,
            alt_link: None,
        }
    }
}

impl OpcgConfig {
    pub fn unrefined() -> Self {
        Self {
            refine: 0,
            ..Self::default()
        }
    }
}

/// Averaged outer product of local gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMatrix {
    pub lambda: DMatrix<f64>,
    /// Number of unflagged fits that entered the average.
    pub n_effective: usize,
    pub n_flagged: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub warnings: Vec<String>,
    pub n_effective: usize,
    pub n_flagged: usize,
    pub refinement_passes: usize,
    pub refinement_converged: bool,
    pub unconverged_fits: usize,
}

/// Estimated basis of the dimension-reduction subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrBasis {
    /// `p x d` orthonormal basis in standardized coordinates.
    pub basis: DMatrix<f64>,
    /// `p x d` orthonormal basis in the original coordinates.
    pub original: DMatrix<f64>,
    /// Eigenvalues of the candidate matrix, descending (empty for estimators without one).
    pub eigenvalues: DVector<f64>,
    pub d: usize,
    pub standardization: Standardization,
    pub diagnostics: Diagnostics,
}

impl SdrBasis {
    pub(crate) fn from_standardized(
        basis: DMatrix<f64>,
        eigenvalues: DVector<f64>,
        standardization: Standardization,
        diagnostics: Diagnostics,
    ) -> Self {
        let original = standardization.basis_to_original(&basis);
        Self {
            d: basis.ncols(),
            basis,
            original,
            eigenvalues,
            standardization,
            diagnostics,
        }
    }

    /// Sufficient predictors `beta_std' z` for raw predictor rows `x`.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.standardization.apply(x)? * &self.basis)
    }
}

pub(crate) fn check_dimension(d: usize, p: usize) -> Result<()> {
    if d < 1 || d >= p {
        return Err(SdrError::Parameter(format!(
            "structural dimension must satisfy 1 <= d < p = {p}, got {d}"
        )));
    }
    Ok(())
}

/// One local fit per anchor, with weights on the given predictors.
pub fn canonical_gradients(data: &LabeledDataset, h: f64, config: &OptimizerConfig) -> Result<Vec<LocalFit>> {
    gradients(data, h, None, None, config, Solver::HybridCg)
}

/// Local fits on the full predictors; weights use `kernel_coords` when given.
pub(crate) fn gradients(
    data: &LabeledDataset,
    h: f64,
    kernel_coords: Option<&DMatrix<f64>>,
    warm: Option<&[LocalFit]>,
    config: &OptimizerConfig,
    solver: Solver,
) -> Result<Vec<LocalFit>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(SdrError::Parameter(format!("bandwidth must be positive, got {h}")));
    }
    config.validate()?;
    let coords = kernel_coords.unwrap_or(data.x());
    (0..data.n())
        .into_par_iter()
        .map(|j| {
            let w = gaussian_weights_from_coords(coords, j, h)?;
            let init = warm
                .map(|fits| &fits[j])
                .filter(|f| !f.flags.degenerate && f.b.nrows() == data.p())
                .map(|f| (&f.a, &f.b));
            fit_local_in(data.x(), j, &w, data, config, solver, init)
        })
        .collect()
}

/// Mean of `B_j B_j'` (or of the alternative-link gradients) over unflagged fits.
pub fn assemble_lambda(fits: &[LocalFit], psi: Option<AltLink>) -> Result<CandidateMatrix> {
    let Some(first) = fits.first() else {
        return Err(SdrError::EstimationFailed("no local fits".into()));
    };
    let p = first.b.nrows();
    let mut lambda = DMatrix::zeros(p, p);
    let mut used = 0;
    for fit in fits {
        if fit.flags.excluded() {
            continue;
        }
        let g = match psi {
            None => fit.b.clone(),
            Some(link) => match alt_link_transform(&fit.a_param()?, &fit.b, link) {
                Ok(g) => g,
                Err(SdrError::DegenerateLink(_)) => continue,
                Err(e) => return Err(e),
            },
        };
        lambda += &g * g.transpose();
        used += 1;
    }
    if used == 0 {
        return Err(SdrError::EstimationFailed(
            "every local fit was flagged degenerate or separated".into(),
        ));
    }
    lambda /= used as f64;
    let lambda = (&lambda + lambda.transpose()) * 0.5;
    Ok(CandidateMatrix {
        lambda,
        n_effective: used,
        n_flagged: fits.len() - used,
    })
}

/// Candidate matrix from a single unrefined pass on already prepared predictors.
pub fn candidate_matrix(data: &LabeledDataset, h: f64, config: &OpcgConfig) -> Result<CandidateMatrix> {
    let fits = gradients(data, h, None, None, &config.optimizer, config.solver)?;
    assemble_lambda(&fits, config.alt_link)
}

fn flag_warning(cand: &CandidateMatrix, warnings: &mut Vec<String>, pass: usize) {
    let total = cand.n_effective + cand.n_flagged;
    if cand.n_flagged as f64 > FLAGGED_WARNING_FRACTION * total as f64 {
        warnings.push(format!(
            "pass {pass}: {} of {total} local fits flagged and excluded",
            cand.n_flagged
        ));
    }
}

/// OPCG estimate of a `d`-dimensional basis.
pub fn opcg_fit(data: &LabeledDataset, h: f64, d: usize, config: &OpcgConfig) -> Result<SdrBasis> {
    check_dimension(d, data.p())?;
    let (work, record) = if config.standardize {
        standardize(data)?
    } else {
        (data.clone(), Standardization::identity(data.p()))
    };
    let opt = &config.optimizer;
    let mut diagnostics = Diagnostics::default();

    let mut fits = gradients(&work, h, None, None, opt, config.solver)?;
    let mut cand = assemble_lambda(&fits, config.alt_link)?;
    flag_warning(&cand, &mut diagnostics.warnings, 0);
    let (mut values, mut basis) = top_eigenvectors(&cand.lambda, d);

    diagnostics.refinement_converged = config.refine == 0;
    for pass in 1..=config.refine {
        let coords = work.x() * &basis;
        fits = gradients(&work, h, Some(&coords), Some(&fits), opt, config.solver)?;
        cand = assemble_lambda(&fits, config.alt_link)?;
        flag_warning(&cand, &mut diagnostics.warnings, pass);
        let (v, b) = top_eigenvectors(&cand.lambda, d);
        let change = projection_distance(&b, &basis);
        values = v;
        basis = b;
        diagnostics.refinement_passes = pass;
        if change < config.refine_tol {
            diagnostics.refinement_converged = true;
            break;
        }
    }
    diagnostics.n_effective = cand.n_effective;
    diagnostics.n_flagged = cand.n_flagged;
    diagnostics.unconverged_fits = fits.iter().filter(|f| !f.converged && !f.flags.degenerate).count();
    Ok(SdrBasis::from_standardized(basis, values, record, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_error;
    use crate::links::Family;
    use crate::localglm::FitFlags;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fit_with(b: DMatrix<f64>, flags: FitFlags) -> LocalFit {
        LocalFit {
            anchor: 0,
            a: DVector::zeros(b.ncols()),
            b,
            iterations: 0,
            final_gradient_norm: 0.0,
            converged: true,
            objective: 0.0,
            flags,
        }
    }

    fn single_index(n: usize, p: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let labels = (0..n)
            .map(|i| {
                let eta = 2.0 * (x[(i, 0)] - x[(i, 1)]);
                let prob = 1.0 / (1.0 + (-eta).exp());
                if rng.random::<f64>() < prob {
                    1
                } else {
                    2
                }
            })
            .collect();
        LabeledDataset::new(x, labels, Family::categorical(2).unwrap()).unwrap()
    }

    #[test]
    fn standardization_records() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 3.0, 2.0, 5.0, 4.0, 7.0, 6.0]);
        let data = LabeledDataset::new(x, vec![1, 2, 1, 2], Family::categorical(2).unwrap()).unwrap();
        let (std, rec) = standardize(&data).unwrap();
        assert_relative_eq!(rec.mean[0], 4.0);
        assert_relative_eq!(rec.sd[0], (20.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        let (_, again) = standardize(&std).unwrap();
        assert!(again.is_identity(1e-12));

        let rec = Standardization {
            mean: DVector::zeros(2),
            sd: DVector::from_vec(vec![2.0, 1.0]),
        };
        // the direction (1,1) in standardized space is (1/2, 1) in the original space
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]).normalize();
        let orig = rec.basis_to_original(&b);
        let expect = DMatrix::from_column_slice(2, 1, &[0.5, 1.0]).normalize();
        assert!(projection_distance(&orig, &expect) < 1e-12);
    }

    #[test]
    fn constant_column_is_named() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let data = LabeledDataset::new(x, vec![1, 2, 1], Family::categorical(2).unwrap()).unwrap();
        match standardize(&data) {
            Err(SdrError::ConstantPredictor(name)) => assert_eq!(name, "x2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn assembly_rules() {
        let mut b = DMatrix::zeros(3, 2);
        b[(0, 0)] = 1.0;
        b[(0, 1)] = 2.0;
        let cand = assemble_lambda(&[fit_with(b.clone(), FitFlags::default())], None).unwrap();
        assert_eq!(cand.lambda.rank(1e-12), 1);

        let fits = vec![
            fit_with(b.clone(), FitFlags::default()),
            fit_with(DMatrix::from_element(3, 2, 0.3), FitFlags::default()),
            fit_with(
                DMatrix::from_element(3, 2, 9.0),
                FitFlags {
                    separated: true,
                    ..FitFlags::default()
                },
            ),
        ];
        let plain = assemble_lambda(&fits, None).unwrap();
        assert_eq!(plain.n_effective, 2);
        assert_eq!(plain.n_flagged, 1);
        let ident = assemble_lambda(&fits, Some(AltLink::Identity)).unwrap();
        assert!((&plain.lambda - &ident.lambda).amax() < 1e-15);

        let flagged = vec![fit_with(
            b,
            FitFlags {
                degenerate: true,
                ..FitFlags::default()
            },
        )];
        assert!(matches!(
            assemble_lambda(&flagged, None),
            Err(SdrError::EstimationFailed(_))
        ));
    }

    #[test]
    fn two_observations_are_degenerate() {
        let x = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 2.0]);
        let data = LabeledDataset::new(x, vec![1, 2], Family::categorical(2).unwrap()).unwrap();
        let fits = canonical_gradients(&data, 1.0, &OptimizerConfig::default()).unwrap();
        assert!(fits.iter().all(|f| f.flags.degenerate));
        assert!(opcg_fit(&data, 1.0, 1, &OpcgConfig::default()).is_err());
    }

    #[test]
    fn recovers_single_index() {
        let data = single_index(300, 4, 1);
        let truth = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 0.0, 0.0]).normalize();
        let fit = opcg_fit(&data, 2.0, 1, &OpcgConfig::default()).unwrap();
        assert!(orthonormality_error(&fit.basis) < 1e-10);
        assert!(projection_distance(&fit.original, &truth) < 0.3);
        assert!(fit.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_rank_reproduces_eigenvectors() {
        let data = single_index(80, 3, 2);
        let cfg = OpcgConfig::unrefined();
        let fit = opcg_fit(&data, 1.5, 2, &cfg).unwrap();
        let (std, _) = standardize(&data).unwrap();
        let cand = candidate_matrix(&std, 1.5, &cfg).unwrap();
        let (_, vecs) = top_eigenvectors(&cand.lambda, 2);
        assert!((&vecs - &fit.basis).amax() < 1e-12);
        assert!(opcg_fit(&data, 1.5, 3, &cfg).is_err());
        assert!(opcg_fit(&data, 1.5, 0, &cfg).is_err());
    }
}
