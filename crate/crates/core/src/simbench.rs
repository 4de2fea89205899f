//! Five-cluster simulation design, subspace distances and a small classifier.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baselines::{fit_method, Method, MethodConfig};
use crate::dataset::LabeledDataset;
use crate::error::{Result, SdrError};
use crate::linalg::{orthonormality_error, orthonormalize};
use crate::links::Family;

/// Predictor columns (0-based) carrying the two-dimensional signal.
pub const SIGNAL_COLUMNS: [usize; 2] = [2, 6];
pub const SIM_P: usize = 10;

/// Cluster means and the class each cluster belongs to.
pub const CLUSTERS: [((f64, f64), usize); 5] = [
    ((-2.0, 2.0), 1),
    ((2.0, -2.0), 1),
    ((3.0, 3.0), 2),
    ((-3.0, -3.0), 2),
    ((0.0, 0.0), 3),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_per_cluster_train: usize,
    pub n_per_cluster_tune: usize,
    pub n_per_cluster_test: usize,
    pub cluster_sd: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_per_cluster_train: 50,
            n_per_cluster_tune: 30,
            n_per_cluster_test: 30,
            cluster_sd: 0.5,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Training set of total size `n`, spread evenly over the five clusters.
    pub fn with_train_size(seed: u64, n: usize) -> Self {
        Self {
            n_per_cluster_train: n / CLUSTERS.len(),
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub train: LabeledDataset,
    pub tune: LabeledDataset,
    pub test: LabeledDataset,
    /// `10 x 2` basis with ones at the signal coordinates.
    pub beta_true: DMatrix<f64>,
}

pub fn true_basis() -> DMatrix<f64> {
    let mut b = DMatrix::zeros(SIM_P, 2);
    b[(SIGNAL_COLUMNS[0], 0)] = 1.0;
    b[(SIGNAL_COLUMNS[1], 1)] = 1.0;
    b
}

fn draw_split(per_cluster: usize, sd: f64, rng: &mut ChaCha8Rng) -> Result<LabeledDataset> {
    let n = per_cluster * CLUSTERS.len();
    let mut x = DMatrix::zeros(n, SIM_P);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for &((m1, m2), class) in &CLUSTERS {
        for _ in 0..per_cluster {
            for c in 0..SIM_P {
                let z: f64 = StandardNormal.sample(rng);
                x[(row, c)] = if c == SIGNAL_COLUMNS[0] {
                    m1 + sd * z
                } else if c == SIGNAL_COLUMNS[1] {
                    m2 + sd * z
                } else {
                    z
                };
            }
            labels.push(class);
            row += 1;
        }
    }
    LabeledDataset::new(x, labels, Family::categorical(3)?)
}

/// Draws the training, tuning and test sets from one seeded stream.
pub fn generate_simulation(config: &SimConfig) -> Result<Simulation> {
    if config.n_per_cluster_train == 0 || config.n_per_cluster_tune == 0 || config.n_per_cluster_test == 0 {
        return Err(SdrError::Parameter(
            "every split needs at least one draw per cluster".into(),
        ));
    }
    if !(config.cluster_sd > 0.0) {
        return Err(SdrError::Parameter("cluster_sd must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = draw_split(config.n_per_cluster_train, config.cluster_sd, &mut rng)?;
    let tune = draw_split(config.n_per_cluster_tune, config.cluster_sd, &mut rng)?;
    let test = draw_split(config.n_per_cluster_test, config.cluster_sd, &mut rng)?;
    Ok(Simulation {
        train,
        tune,
        test,
        beta_true: true_basis(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceDistance {
    pub value: f64,
    /// An input was not orthonormal and had to be re-orthonormalized.
    pub reorthonormalized: bool,
}

/// `|| A A' - B B' ||_F`, re-orthonormalizing inputs that are not orthonormal.
pub fn projection_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SubspaceDistance> {
    if a.shape() != b.shape() {
        return Err(SdrError::Parameter(format!(
            "bases have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut fixed = false;
    let mut prep = |m: &DMatrix<f64>| {
        if orthonormality_error(m) > 1e-8 {
            fixed = true;
            orthonormalize(m)
        } else {
            m.clone()
        }
    };
    let (a, b) = (prep(a), prep(b));
    Ok(SubspaceDistance {
        value: crate::linalg::projection_distance(&a, &b),
        reorthonormalized: fixed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classifier {
    NearestCentroid,
    Knn(usize),
}

impl Default for Classifier {
    fn default() -> Self {
        Classifier::Knn(5)
    }
}

/// Predicted labels for `test` rows given labelled `train` rows.
pub fn classify(
    train: &DMatrix<f64>,
    train_labels: &[usize],
    test: &DMatrix<f64>,
    method: Classifier,
) -> Result<Vec<usize>> {
    if train.ncols() != test.ncols() {
        return Err(SdrError::Parameter(
            "train and test projections differ in dimension".into(),
        ));
    }
    if train.nrows() != train_labels.len() || train.nrows() == 0 {
        return Err(SdrError::Data("training labels do not match the training rows".into()));
    }
    let m = *train_labels.iter().max().unwrap();
    let mut counts = vec![0usize; m];
    for &l in train_labels {
        if l == 0 {
            return Err(SdrError::Data("labels start at 1".into()));
        }
        counts[l - 1] += 1;
    }
    if let Some(c) = counts.iter().position(|c| *c == 0) {
        return Err(SdrError::Data(format!("class {} has no training points", c + 1)));
    }
    let dist2 = |i: usize, j: usize| -> f64 { (0..test.ncols()).map(|c| (test[(i, c)] - train[(j, c)]).powi(2)).sum() };
    match method {
        Classifier::NearestCentroid => {
            let d = train.ncols();
            let mut centers: DMatrix<f64> = DMatrix::zeros(m, d);
            for (j, &l) in train_labels.iter().enumerate() {
                for c in 0..d {
                    centers[(l - 1, c)] += train[(j, c)] / counts[l - 1] as f64;
                }
            }
            Ok((0..test.nrows())
                .map(|i| {
                    (0..m)
                        .map(|l| {
                            let s: f64 = (0..d).map(|c| (test[(i, c)] - centers[(l, c)]).powi(2)).sum();
                            (s, l)
                        })
                        .min_by(|a, b| a.partial_cmp(b).unwrap())
                        .unwrap()
                        .1
                        + 1
                })
                .collect())
        }
        Classifier::Knn(k) => {
            if k == 0 {
                return Err(SdrError::Parameter("k must be positive".into()));
            }
            let k = k.min(train.nrows());
            Ok((0..test.nrows())
                .map(|i| {
                    let mut nb: Vec<(f64, usize)> = (0..train.nrows()).map(|j| (dist2(i, j), j)).collect();
                    nb.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let mut votes = vec![0usize; m];
                    for &(_, j) in &nb[..k] {
                        votes[train_labels[j] - 1] += 1;
                    }
                    let top = *votes.iter().max().unwrap();
                    // ties go to the class of the nearest tied neighbour
                    nb[..k]
                        .iter()
                        .map(|&(_, j)| train_labels[j])
                        .find(|&l| votes[l - 1] == top)
                        .unwrap()
                })
                .collect())
        }
    }
}

/// Fraction of misclassified test rows.
pub fn evaluate_classifier(
    train: &DMatrix<f64>,
    train_labels: &[usize],
    test: &DMatrix<f64>,
    test_labels: &[usize],
    method: Classifier,
) -> Result<f64> {
    if test.nrows() != test_labels.len() {
        return Err(SdrError::Data("test labels do not match the test rows".into()));
    }
    let pred = classify(train, train_labels, test, method)?;
    let wrong = pred.iter().zip(test_labels).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / test_labels.len().max(1) as f64)
}

/// Per-method distances over a set of seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodComparison {
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// `distances[method][seed]`; `None` where the fit failed.
    pub distances: Vec<Vec<Option<f64>>>,
    pub failures: Vec<String>,
}

impl MethodComparison {
    pub fn mean(&self, method: Method) -> Option<f64> {
        let idx = self.methods.iter().position(|m| *m == method)?;
        let vals: Vec<f64> = self.distances[idx].iter().flatten().copied().collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Fits every method on each seeded simulation and records the distance to the truth.
pub fn compare_methods(seeds: &[u64], h: f64, d: usize, methods: &[Method], config: &MethodConfig) -> Result<MethodComparison> {
    let mut distances = vec![Vec::with_capacity(seeds.len()); methods.len()];
    let mut failures = Vec::new();
    for &seed in seeds {
        let sim = generate_simulation(&SimConfig::with_seed(seed))?;
        for (mi, &method) in methods.iter().enumerate() {
            match fit_method(method, &sim.train, h, d, config) {
                Ok(fit) => {
                    let dist = projection_distance(&fit.original, &sim.beta_true)?;
                    distances[mi].push(Some(dist.value));
                }
                Err(e) => {
                    failures.push(format!("seed {seed}, {method}: {e}"));
                    distances[mi].push(None);
                }
            }
        }
    }
    Ok(MethodComparison {
        seeds: seeds.to_vec(),
        methods: methods.to_vec(),
        distances,
        failures,
    })
}
