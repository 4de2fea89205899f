//! Multivariate canonical links for categorical and ordinal-categorical responses.
//!
//! A response with `m` categories is carried as an `(m-1)`-vector. Categorical
//! responses use the indicator vector `S` with the last category as baseline and
//! the multivariate logistic link. Ordinal responses use the survivor indicators
//! `T^j = 1{Y > j}`, whose canonical link is the adjacent-categories logit
//! `theta^j = log(p^{j+1} / p^j)`.
//!
//! Every exp/log composition is evaluated in shifted log-sum-exp form. For the
//! ordinal family the entries of `P L exp(L theta)` are exponentials of prefix
//! sums of `theta`, so the cumulant is a log-sum-exp over `(0, c_1, ..., c_{m-1})`
//! with `c_r = theta^1 + ... + theta^r`.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Result, SdrError};

/// Probabilities are kept at least this far from 0 and 1 before a forward link.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Categorical,
    Ordinal,
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FamilyKind::Categorical => f.write_str("categorical"),
            FamilyKind::Ordinal => f.write_str("ordinal"),
        }
    }
}

/// Response family: encoding kind plus number of categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Family {
    kind: FamilyKind,
    m: usize,
}

/// Probabilities of categories `1..m-1`; category `m` is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(DVector<f64>);

/// Canonical parameter of length `m-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalParam(DVector<f64>);

/// Survivor probabilities `tau^j = P(Y > j)`, `j = 1..m-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivorVector(DVector<f64>);

/// Binary `(m-1)`-vector representation of a label.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedResponse {
    values: Vec<f64>,
    kind: FamilyKind,
}

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(SdrError::Domain("probability vector is empty".into()));
        }
        if let Some(bad) = p.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(SdrError::Domain(format!(
                "probability {bad} outside the open unit interval"
            )));
        }
        let total: f64 = p.iter().sum();
        if total >= 1.0 {
            return Err(SdrError::Domain(format!(
                "probabilities sum to {total}; the baseline category needs positive mass"
            )));
        }
        Ok(Self(DVector::from_vec(p)))
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    /// All `m` category probabilities, including the implied baseline.
    pub fn full(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.0.iter().copied().collect();
        out.push(1.0 - self.0.sum());
        out
    }
}

impl CanonicalParam {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(SdrError::Domain("canonical parameter is empty".into()));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(SdrError::Domain("canonical parameter has non-finite entries".into()));
        }
        Ok(Self(DVector::from_vec(theta)))
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

impl SurvivorVector {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(SdrError::Domain("survivor vector is empty".into()));
        }
        if tau.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(SdrError::Domain("survivor probabilities must lie in (0,1)".into()));
        }
        if tau.windows(2).any(|w| w[1] >= w[0]) {
            return Err(SdrError::Domain("survivor probabilities must strictly decrease".into()));
        }
        Ok(Self(DVector::from_vec(tau)))
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

impl EncodedResponse {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }
}

impl Family {
    pub fn new(kind: FamilyKind, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(SdrError::Parameter(format!(
                "a response family needs at least 2 categories, got {m}"
            )));
        }
        Ok(Self { kind, m })
    }

    pub fn categorical(m: usize) -> Result<Self> {
        Self::new(FamilyKind::Categorical, m)
    }

    pub fn ordinal(m: usize) -> Result<Self> {
        Self::new(FamilyKind::Ordinal, m)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Number of categories.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Length of the encoded response and canonical parameter.
    pub fn dim(&self) -> usize {
        self.m - 1
    }

    pub fn encode(&self, label: usize) -> Result<EncodedResponse> {
        if label < 1 || label > self.m {
            return Err(SdrError::Domain(format!("label {label} outside 1..={}", self.m)));
        }
        let mut values = vec![0.0; self.dim()];
        self.encode_into(label, &mut values);
        Ok(EncodedResponse {
            values,
            kind: self.kind,
        })
    }

    /// Writes the encoding of a label known to be in `1..=m`.
    pub(crate) fn encode_into(&self, label: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            FamilyKind::Categorical => {
                if label < self.m {
                    out[label - 1] = 1.0;
                }
            }
            FamilyKind::Ordinal => {
                // T^j = 1{Y > j}
                for v in out.iter_mut().take(label - 1) {
                    *v = 1.0;
                }
            }
        }
    }

    pub fn decode(&self, encoded: &EncodedResponse) -> Result<usize> {
        let v = encoded.values();
        if v.len() != self.dim() || encoded.kind != self.kind {
            return Err(SdrError::Domain("encoding does not match the family".into()));
        }
        if v.iter().any(|x| *x != 0.0 && *x != 1.0) {
            return Err(SdrError::Domain("encoding must be binary".into()));
        }
        match self.kind {
            FamilyKind::Categorical => {
                let ones: Vec<usize> = (0..v.len()).filter(|&j| v[j] == 1.0).collect();
                match ones.as_slice() {
                    [] => Ok(self.m),
                    [j] => Ok(j + 1),
                    _ => Err(SdrError::Domain("categorical encoding has several ones".into())),
                }
            }
            FamilyKind::Ordinal => {
                let count = v.iter().take_while(|x| **x == 1.0).count();
                if v[count..].contains(&1.0) {
                    return Err(SdrError::Domain("ordinal encoding is not monotone".into()));
                }
                Ok(count + 1)
            }
        }
    }

    /// Cumulant generating function `b(theta)`.
    pub fn cumulant(&self, theta: &[f64]) -> f64 {
        match self.kind {
            FamilyKind::Categorical => cat_cumulant_slice(theta),
            FamilyKind::Ordinal => ord_cumulant_slice(theta),
        }
    }

    /// Writes `grad b(theta)` (the mean: `p` or `tau`) and returns `b(theta)`.
    pub fn mean_into(&self, theta: &[f64], mean: &mut [f64]) -> f64 {
        match self.kind {
            FamilyKind::Categorical => cat_mean_into(theta, mean),
            FamilyKind::Ordinal => ord_mean_into(theta, mean),
        }
    }

    /// Inverse canonical link: the mean of the encoded response.
    pub fn inverse_link(&self, theta: &[f64]) -> DVector<f64> {
        let mut mean = vec![0.0; theta.len()];
        self.mean_into(theta, &mut mean);
        DVector::from_vec(mean)
    }

    /// Writes the variance function (Hessian of the cumulant) into a row-major
    /// `(m-1) x (m-1)` buffer, given the mean already evaluated at `theta`.
    pub(crate) fn variance_from_mean(&self, mean: &[f64], out: &mut [f64]) {
        let k = mean.len();
        match self.kind {
            FamilyKind::Categorical => {
                for r in 0..k {
                    for c in 0..k {
                        out[r * k + c] = -mean[r] * mean[c];
                    }
                    out[r * k + r] += mean[r];
                }
            }
            FamilyKind::Ordinal => {
                for r in 0..k {
                    for c in 0..k {
                        out[r * k + c] = mean[r.max(c)] - mean[r] * mean[c];
                    }
                }
            }
        }
    }

    /// Variance function of the encoded response at `theta`.
    pub fn variance(&self, theta: &[f64]) -> DMatrix<f64> {
        let k = theta.len();
        let mut mean = vec![0.0; k];
        self.mean_into(theta, &mut mean);
        let mut out = vec![0.0; k * k];
        self.variance_from_mean(&mean, &mut out);
        DMatrix::from_row_slice(k, k, &out)
    }

    /// Canonical link applied to all `m` category probabilities.
    pub fn link_from_probabilities(&self, probs: &[f64]) -> Result<CanonicalParam> {
        if probs.len() != self.m {
            return Err(SdrError::Domain(format!(
                "expected {} category probabilities, got {}",
                self.m,
                probs.len()
            )));
        }
        let p = ProbabilityVector::new(probs[..self.m - 1].to_vec())?;
        match self.kind {
            FamilyKind::Categorical => cat_link(&p),
            FamilyKind::Ordinal => adcat_link(&p),
        }
    }
}

fn cat_cumulant_slice(theta: &[f64]) -> f64 {
    let mx = theta.iter().copied().fold(0.0_f64, f64::max);
    let s = (-mx).exp() + theta.iter().map(|t| (t - mx).exp()).sum::<f64>();
    mx + s.ln()
}

fn cat_mean_into(theta: &[f64], mean: &mut [f64]) -> f64 {
    let b = cat_cumulant_slice(theta);
    for (m, t) in mean.iter_mut().zip(theta) {
        *m = (t - b).exp();
    }
    b
}

fn ord_cumulant_slice(theta: &[f64]) -> f64 {
    let mut c = 0.0;
    let mut mx = 0.0_f64;
    for t in theta {
        c += t;
        mx = mx.max(c);
    }
    let mut s = (-mx).exp();
    c = 0.0;
    for t in theta {
        c += t;
        s += (c - mx).exp();
    }
    mx + s.ln()
}

fn ord_mean_into(theta: &[f64], mean: &mut [f64]) -> f64 {
    let k = theta.len();
    // prefix sums first, stored in `mean`
    let mut c = 0.0;
    let mut mx = 0.0_f64;
    for (m, t) in mean.iter_mut().zip(theta) {
        c += t;
        *m = c;
        mx = mx.max(c);
    }
    let s = (-mx).exp() + mean.iter().map(|c| (c - mx).exp()).sum::<f64>();
    let b = mx + s.ln();
    // tau^j = sum_{r >= j} exp(c_r - b)
    let mut acc = 0.0;
    for j in (0..k).rev() {
        acc += (mean[j] - b).exp();
        mean[j] = acc;
    }
    b
}

/// Multivariate logistic link `theta^j = log(p^j / p^m)`.
pub fn cat_link(p: &ProbabilityVector) -> Result<CanonicalParam> {
    let clamped: Vec<f64> = p.as_slice().iter().map(|v| v.max(PROB_CLAMP)).collect();
    let base = (1.0 - clamped.iter().sum::<f64>()).max(PROB_CLAMP);
    CanonicalParam::new(clamped.iter().map(|v| (v / base).ln()).collect())
}

/// Inverse logistic link `p = e^theta / (1 + 1'e^theta)`.
pub fn cat_inverse_link(theta: &CanonicalParam) -> ProbabilityVector {
    let mut p = vec![0.0; theta.as_slice().len()];
    cat_mean_into(theta.as_slice(), &mut p);
    ProbabilityVector(DVector::from_vec(p))
}

/// `b(theta) = log(1 + 1'e^theta)`.
pub fn cat_cumulant(theta: &CanonicalParam) -> f64 {
    cat_cumulant_slice(theta.as_slice())
}

/// `Var(S) = Diag(p) - p p'`.
pub fn cat_variance(theta: &CanonicalParam) -> DMatrix<f64> {
    Family {
        kind: FamilyKind::Categorical,
        m: theta.as_slice().len() + 1,
    }
    .variance(theta.as_slice())
}

/// Adjacent-categories link `theta^j = log(p^{j+1} / p^j)`.
pub fn adcat_link(p: &ProbabilityVector) -> Result<CanonicalParam> {
    let full: Vec<f64> = p.full().into_iter().map(|v| v.max(PROB_CLAMP)).collect();
    CanonicalParam::new(full.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Inverse adjacent-categories link, mapping `theta` to the survivor vector.
pub fn adcat_inverse_link(theta: &CanonicalParam) -> SurvivorVector {
    let mut tau = vec![0.0; theta.as_slice().len()];
    ord_mean_into(theta.as_slice(), &mut tau);
    SurvivorVector(DVector::from_vec(tau))
}

/// Category probabilities `1..m-1` under the adjacent-categories model,
/// `p^k = exp(c_{k-1} - b(theta))`, computed without differencing survivors.
pub fn adcat_probabilities(theta: &CanonicalParam) -> ProbabilityVector {
    let t = theta.as_slice();
    let b = ord_cumulant_slice(t);
    let mut p = Vec::with_capacity(t.len());
    let mut c = 0.0;
    p.push((-b).exp());
    for v in &t[..t.len() - 1] {
        c += v;
        p.push((c - b).exp());
    }
    ProbabilityVector(DVector::from_vec(p))
}

/// Or-Cat cumulant `b(theta) = log(1 + e_1' P L exp(L theta))`.
pub fn ord_cumulant(theta: &CanonicalParam) -> f64 {
    ord_cumulant_slice(theta.as_slice())
}

/// `Var(T) = Gamma - tau tau'` with `Gamma_{jk} = tau^{max(j,k)}`.
pub fn ord_variance(theta: &CanonicalParam) -> DMatrix<f64> {
    Family {
        kind: FamilyKind::Ordinal,
        m: theta.as_slice().len() + 1,
    }
    .variance(theta.as_slice())
}

/// Category probabilities `1..m-1` from survivor probabilities.
pub fn survivor_to_prob(tau: &SurvivorVector) -> Result<ProbabilityVector> {
    let t = tau.as_slice();
    let mut p = Vec::with_capacity(t.len());
    p.push(1.0 - t[0]);
    for w in t.windows(2) {
        p.push(w[0] - w[1]);
    }
    ProbabilityVector::new(p)
}

/// Survivor probabilities `tau^j = sum_{k > j} p^k`.
pub fn prob_to_survivor(p: &ProbabilityVector) -> Result<SurvivorVector> {
    let full = p.full();
    let k = full.len() - 1;
    let mut tau = vec![0.0; k];
    let mut acc = 0.0;
    for j in (0..k).rev() {
        acc += full[j + 1];
        tau[j] = acc;
    }
    SurvivorVector::new(tau)
}

/// Link functions on the ordinal survivor mean, applied after a canonical fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltLink {
    /// `psi(theta) = theta`; reproduces the canonical candidate matrix.
    Identity,
    /// `psi(tau) = log{(1 - tau) / tau}`.
    CumulativeLogit,
    /// `psi(tau) = Phi^{-1}(1 - tau)`.
    CumulativeProbit,
}

impl AltLink {
    fn check_tau(tau: &[f64]) -> Result<()> {
        if let Some(t) = tau.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(SdrError::DegenerateLink(format!(
                "survivor probability {t} is not strictly inside (0,1)"
            )));
        }
        Ok(())
    }

    /// `psi(tau(theta))`.
    pub fn psi(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let tau = ord_tau(theta);
        match self {
            AltLink::Identity => Ok(DVector::from_column_slice(theta)),
            AltLink::CumulativeLogit => {
                Self::check_tau(&tau)?;
                Ok(DVector::from_iterator(
                    tau.len(),
                    tau.iter().map(|t| ((1.0 - t) / t).ln()),
                ))
            }
            AltLink::CumulativeProbit => {
                Self::check_tau(&tau)?;
                let normal = Normal::standard();
                Ok(DVector::from_iterator(
                    tau.len(),
                    tau.iter().map(|t| normal.inverse_cdf(1.0 - t)),
                ))
            }
        }
    }

    /// Jacobian `d psi / d theta' = (d psi / d tau') (Gamma - tau tau')`.
    ///
    /// The diagonal factors carry their exact (negative) sign; candidate matrices
    /// only use `J'J`, where the sign cancels.
    pub fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let k = theta.len();
        if let AltLink::Identity = self {
            return Ok(DMatrix::identity(k, k));
        }
        let tau = ord_tau(theta);
        Self::check_tau(&tau)?;
        let var = ord_variance(&CanonicalParam(DVector::from_column_slice(theta)));
        let dpsi: Vec<f64> = match self {
            AltLink::CumulativeLogit => tau.iter().map(|t| -1.0 / (t * (1.0 - t))).collect(),
            AltLink::CumulativeProbit => {
                let normal = Normal::standard();
                tau.iter()
                    .map(|t| -1.0 / normal.pdf(normal.inverse_cdf(1.0 - t)))
                    .collect()
            }
            AltLink::Identity => unreachable!(),
        };
        Ok(DMatrix::from_fn(k, k, |r, c| dpsi[r] * var[(r, c)]))
    }
}

fn ord_tau(theta: &[f64]) -> Vec<f64> {
    let mut tau = vec![0.0; theta.len()];
    ord_mean_into(theta, &mut tau);
    tau
}

/// Gradient of an alternative link in `x`: `B (d psi / d theta')'` evaluated at `a`.
pub fn alt_link_transform(a: &CanonicalParam, b: &DMatrix<f64>, psi: AltLink) -> Result<DMatrix<f64>> {
    if b.ncols() != a.as_slice().len() {
        return Err(SdrError::Parameter(format!(
            "gradient matrix has {} columns but the canonical parameter has length {}",
            b.ncols(),
            a.as_slice().len()
        )));
    }
    let jac = psi.jacobian(a.as_slice())?;
    Ok(b * jac.transpose())
}

/// The matrices of the verbatim inverse Ad-Cat formula. These are only
/// materialized for verification; the estimators use prefix sums.
pub mod matrix_form {
    use nalgebra::{DMatrix, DVector};

    #[derive(Debug, Clone)]
    pub struct OrdinalMatrices {
        /// Lower-triangular matrix of ones.
        pub l: DMatrix<f64>,
        /// Cyclic permutation `(a^1, ..., a^k) -> (a^k, a^1, ..., a^{k-1})`.
        pub p: DMatrix<f64>,
        /// `-I + 1 e_1' + e_1 e_1'`.
        pub q: DMatrix<f64>,
        pub e1: DVector<f64>,
    }

    pub fn ordinal_matrices(m: usize) -> OrdinalMatrices {
        let k = m - 1;
        let l = DMatrix::from_fn(k, k, |r, c| if c <= r { 1.0 } else { 0.0 });
        let p = DMatrix::from_fn(k, k, |r, c| if c == (r + k - 1) % k { 1.0 } else { 0.0 });
        let mut e1 = DVector::zeros(k);
        e1[0] = 1.0;
        let ones = DVector::from_element(k, 1.0);
        let q = -DMatrix::identity(k, k) + &ones * e1.transpose() + &e1 * e1.transpose();
        OrdinalMatrices { l, p, q, e1 }
    }

    /// `tau(theta) = Q P L exp(L theta) / (1 + e_1' P L exp(L theta))`, evaluated literally.
    pub fn adcat_inverse_link_matrix(theta: &[f64]) -> DVector<f64> {
        let mats = ordinal_matrices(theta.len() + 1);
        let theta = DVector::from_column_slice(theta);
        let phi = &mats.l * (&mats.l * theta).map(f64::exp);
        let pphi = &mats.p * phi;
        let denom = 1.0 + mats.e1.dot(&pphi);
        (&mats.q * pphi) / denom
    }
}
