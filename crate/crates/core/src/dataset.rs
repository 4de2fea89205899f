use nalgebra::DMatrix;

use crate::error::{Result, SdrError};
use crate::links::{Family, FamilyKind};

/// Predictor matrix with class labels `1..=m` and the response family.
///
/// The `(m-1)`-dimensional response encodings are computed once and cached in
/// row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: DMatrix<f64>,
    labels: Vec<usize>,
    family: Family,
    names: Vec<String>,
    label_names: Vec<String>,
    encoded: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(x: DMatrix<f64>, labels: Vec<usize>, family: Family) -> Result<Self> {
        let p = x.ncols();
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        let label_names = (1..=family.m()).map(|l| l.to_string()).collect();
        Self::with_names(x, labels, family, names, label_names)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        labels: Vec<usize>,
        family: Family,
        names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(SdrError::Data(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(SdrError::Data("need at least one predictor".into()));
        }
        if labels.len() != n {
            return Err(SdrError::Data(format!("{} labels for {n} rows", labels.len())));
        }
        if names.len() != p || label_names.len() != family.m() {
            return Err(SdrError::Data("name vectors do not match the data shape".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SdrError::Data("predictors contain non-finite values".into()));
        }
        let m = family.m();
        let mut counts = vec![0usize; m];
        for &l in &labels {
            if l < 1 || l > m {
                return Err(SdrError::Data(format!("label {l} outside 1..={m}")));
            }
            counts[l - 1] += 1;
        }
        if let Some(empty) = counts.iter().position(|c| *c == 0) {
            return Err(SdrError::Data(format!("class {} has no observations", empty + 1)));
        }
        let k = family.dim();
        let mut encoded = vec![0.0; n * k];
        for (i, &l) in labels.iter().enumerate() {
            family.encode_into(l, &mut encoded[i * k..(i + 1) * k]);
        }
        Ok(Self {
            x,
            labels,
            family,
            names,
            label_names,
            encoded,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.family.m()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.names
    }

    /// Raw label value behind each class index.
    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Row-major `n x (m-1)` response encodings.
    pub fn encoded(&self) -> &[f64] {
        &self.encoded
    }

    pub fn encoded_row(&self, i: usize) -> &[f64] {
        let k = self.family.dim();
        &self.encoded[i * k..(i + 1) * k]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.m()];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    /// Same labels, different predictors (e.g. standardized or augmented).
    pub fn with_x(&self, x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != self.n() {
            return Err(SdrError::Data("replacement predictors have the wrong row count".into()));
        }
        let names = if x.ncols() == self.p() {
            self.names.clone()
        } else {
            let mut names = self.names.clone();
            names.truncate(x.ncols());
            names.extend((names.len() + 1..=x.ncols()).map(|j| format!("x{j}")));
            names
        };
        Self::with_names(x, self.labels.clone(), self.family, names, self.label_names.clone())
    }

    /// Same data under a different response encoding.
    pub fn with_kind(&self, kind: FamilyKind) -> Result<Self> {
        let family = Family::new(kind, self.m())?;
        Self::with_names(
            self.x.clone(),
            self.labels.clone(),
            family,
            self.names.clone(),
            self.label_names.clone(),
        )
    }

    /// Rows at `indices`, keeping the class coding. Fails if a class disappears.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(SdrError::Data(format!("row index {bad} out of range")));
        }
        let x = self.x.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::with_names(x, labels, self.family, self.names.clone(), self.label_names.clone())
    }

    /// Binary subproblem: `positive` rows get label 1, the rest label 2.
    pub(crate) fn binary_subset(&self, indices: &[usize], positive: &dyn Fn(usize) -> bool) -> Result<Self> {
        let x = self.x.select_rows(indices);
        let labels = indices
            .iter()
            .map(|&i| if positive(self.labels[i]) { 1 } else { 2 })
            .collect();
        Self::with_names(
            x,
            labels,
            Family::categorical(2)?,
            self.names.clone(),
            vec!["positive".into(), "negative".into()],
        )
    }

    /// Row indices grouped by class, ascending within each class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.m()];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l - 1].push(i);
        }
        groups
    }
}
