//! Bandwidth selection by k-means separation of the sufficient predictors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Result, SdrError};
use crate::opcg::{check_dimension, opcg_fit, OpcgConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    /// `k x d` cluster centres.
    pub centers: DMatrix<f64>,
    pub assignment: Vec<usize>,
    pub wss: f64,
    pub bss: f64,
}

impl KmeansResult {
    pub fn total_ss(&self) -> f64 {
        self.wss + self.bss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningMethod {
    Km,
    Skm,
    Wkm,
    Kfold,
}

impl TuningMethod {
    pub fn name(&self) -> &'static str {
        match self {
            TuningMethod::Km => "km",
            TuningMethod::Skm => "skm",
            TuningMethod::Wkm => "wkm",
            TuningMethod::Kfold => "kfold",
        }
    }
}

impl fmt::Display for TuningMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TuningMethod {
    type Err = SdrError;

    fn from_str(s: &str) -> Result<Self> {
        [
            TuningMethod::Km,
            TuningMethod::Skm,
            TuningMethod::Wkm,
            TuningMethod::Kfold,
        ]
        .into_iter()
        .find(|m| m.name() == s.trim().to_ascii_lowercase())
        .ok_or_else(|| SdrError::Parameter(format!("unknown tuning method `{s}`")))
    }
}

/// Separation ratios over a bandwidth grid. Lower is better; `+inf` marks a failed grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    pub grid: Vec<f64>,
    /// `NaN` where the criterion was not computed.
    pub ratio_km: Vec<f64>,
    pub ratio_skm: Vec<f64>,
    /// Average of the standardized km and skm curves, so it can be negative.
    pub ratio_weighted: Vec<f64>,
    pub h_selected: f64,
    pub method: TuningMethod,
    pub warnings: Vec<String>,
}

impl TuningCurve {
    pub fn selected_curve(&self) -> &[f64] {
        match self.method {
            TuningMethod::Km => &self.ratio_km,
            TuningMethod::Skm => &self.ratio_skm,
            TuningMethod::Wkm | TuningMethod::Kfold => &self.ratio_weighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningConfig {
    /// OPCG settings used at every grid point.
    pub opcg: OpcgConfig,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            opcg: OpcgConfig::unrefined(),
            restarts: 10,
            max_iters: 100,
            seed: 0,
        }
    }
}

/// `count` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(SdrError::Parameter(format!(
            "bad grid [{lo}, {hi}] with {count} points"
        )));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

pub fn default_grid() -> Vec<f64> {
    log_grid(0.3, 10.0, 20).expect("static grid")
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|j| (points[(i, j)] - centers[(c, j)]).powi(2))
        .sum()
}

fn seed_centers(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (n, d) = points.shape();
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from(&points.row(pick));
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min(sq_dist(points, i, &centers, c));
        }
    }
    centers
}

fn lloyd(points: &DMatrix<f64>, mut centers: DMatrix<f64>, max_iters: usize) -> (DMatrix<f64>, Vec<usize>) {
    let (n, d) = points.shape();
    let k = centers.nrows();
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for i in 0..n {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(points, i, &centers, a).total_cmp(&sq_dist(points, i, &centers, b)))
                .unwrap_or(0);
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut sums = DMatrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for j in 0..d {
                sums[(assignment[i], j)] += points[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            } else {
                // empty cluster takes the point farthest from its centre
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points, a, &centers, assignment[a]).total_cmp(&sq_dist(
                            points,
                            b,
                            &centers,
                            assignment[b],
                        ))
                    })
                    .unwrap_or(0);
                centers.row_mut(c).copy_from(&points.row(far));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (centers, assignment)
}

fn summarize(points: &DMatrix<f64>, assignment: Vec<usize>, k: usize) -> KmeansResult {
    let (n, d) = points.shape();
    let mut centers = DMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for i in 0..n {
        counts[assignment[i]] += 1;
        for j in 0..d {
            centers[(assignment[i], j)] += points[(i, j)];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..d {
                centers[(c, j)] /= counts[c] as f64;
            }
        }
    }
    let grand: DVector<f64> = points.row_mean().transpose();
    let wss = (0..n).map(|i| sq_dist(points, i, &centers, assignment[i])).sum();
    let bss = (0..k)
        .map(|c| counts[c] as f64 * (0..d).map(|j| (centers[(c, j)] - grand[j]).powi(2)).sum::<f64>())
        .sum();
    KmeansResult {
        centers,
        assignment,
        wss,
        bss,
    }
}

/// Lloyd's algorithm from k-means++ seeds; the restart with the smallest WSS wins.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, max_iters: usize, seed: u64) -> Result<KmeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(SdrError::Parameter(format!("k-means needs 1 <= k <= n = {n}, got {k}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(SdrError::Data("k-means input contains non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KmeansResult> = None;
    for _ in 0..restarts.max(1) {
        let start = seed_centers(points, k, &mut rng);
        let (_, assignment) = lloyd(points, start, max_iters);
        let fit = summarize(points, assignment, k);
        if best.as_ref().is_none_or(|b| fit.wss < b.wss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn ratio(wss: f64, bss: f64) -> f64 {
    if bss > 0.0 {
        wss / bss
    } else {
        f64::INFINITY
    }
}

/// Unsupervised WSS/BSS with `k_total` clusters.
pub fn km_ratio(points: &DMatrix<f64>, k_total: usize, config: &TuningConfig, seed: u64) -> Result<f64> {
    let fit = kmeans(
        points,
        k_total.min(points.nrows()),
        config.restarts,
        config.max_iters,
        seed,
    )?;
    Ok(ratio(fit.wss, fit.bss))
}

/// Supervised SWSS/SBSS: k-means within each class.
pub fn skm_ratio(
    points: &DMatrix<f64>,
    labels: &[usize],
    m: usize,
    clusters_per_class: &[usize],
    config: &TuningConfig,
    seed: u64,
    warnings: &mut Vec<String>,
) -> Result<f64> {
    check_clusters(clusters_per_class, m)?;
    let d = points.ncols();
    let mut swss = 0.0;
    let mut sbss = 0.0;
    let mut means = Vec::with_capacity(m);
    for l in 1..=m {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == l).collect();
        if rows.is_empty() {
            return Err(SdrError::Data(format!("class {l} has no tuning observations")));
        }
        let sub = points.select_rows(&rows);
        let mut c = clusters_per_class[l - 1];
        if c > rows.len() {
            warnings.push(format!("class {l}: {c} clusters lowered to {}", rows.len()));
            c = rows.len();
        }
        let fit = kmeans(&sub, c, config.restarts, config.max_iters, seed.wrapping_add(l as u64))?;
        swss += fit.wss;
        sbss += fit.bss;
        means.push((rows.len() as f64, sub.row_mean()));
    }
    if clusters_per_class.iter().all(|&c| c == 1) {
        let total: f64 = means.iter().map(|(w, _)| w).sum();
        let mut grand = nalgebra::RowDVector::zeros(d);
        for (w, mu) in &means {
            grand += mu * (*w / total);
        }
        sbss = means.iter().map(|(w, mu)| w * (mu - &grand).norm_squared()).sum();
    }
    Ok(ratio(swss, sbss))
}

fn check_clusters(clusters_per_class: &[usize], m: usize) -> Result<()> {
    if clusters_per_class.len() != m {
        return Err(SdrError::Parameter(format!(
            "need one cluster count per class ({m}), got {}",
            clusters_per_class.len()
        )));
    }
    if clusters_per_class.contains(&0) {
        return Err(SdrError::Parameter("clusters per class must be at least 1".into()));
    }
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(SdrError::Parameter("bandwidth grid is empty".into()));
    }
    if grid.iter().any(|h| !(*h > 0.0) || !h.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SdrError::Parameter(
            "bandwidth grid must be positive and strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Z-scores the finite entries; infinite entries stay `+inf`.
pub fn standardize_curve(curve: &[f64]) -> Vec<f64> {
    let finite: Vec<f64> = curve.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return curve.to_vec();
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / finite.len() as f64;
    let sd = var.sqrt();
    curve
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                f64::INFINITY
            } else if sd > 0.0 {
                (v - mean) / sd
            } else {
                0.0
            }
        })
        .collect()
}

fn weighted(km: &[f64], skm: &[f64]) -> Vec<f64> {
    let (a, b) = (standardize_curve(km), standardize_curve(skm));
    a.iter().zip(&b).map(|(x, y)| 0.5 * x + 0.5 * y).collect()
}

fn argmin(grid: &[f64], curve: &[f64]) -> f64 {
    let mut best = 0;
    for (i, v) in curve.iter().enumerate() {
        if v.total_cmp(&curve[best]).is_lt() {
            best = i;
        }
    }
    grid[best]
}

struct PointScores {
    km: f64,
    skm: f64,
    warnings: Vec<String>,
}

fn score_grid(
    train: &LabeledDataset,
    tune: &LabeledDataset,
    grid: &[f64],
    d: usize,
    k_total: Option<usize>,
    clusters_per_class: Option<&[usize]>,
    config: &TuningConfig,
    seed: u64,
) -> Result<Vec<PointScores>> {
    check_grid(grid)?;
    check_dimension(d, train.p())?;
    if tune.p() != train.p() || tune.m() != train.m() {
        return Err(SdrError::Data("training and tuning sets disagree in shape".into()));
    }
    if let Some(c) = clusters_per_class {
        check_clusters(c, train.m())?;
    }
    grid.par_iter()
        .enumerate()
        .map(|(g, &h)| {
            let mut warnings = Vec::new();
            let point_seed = seed.wrapping_mul(0x9E37_79B9).wrapping_add(g as u64);
            let z = match opcg_fit(train, h, d, &config.opcg).and_then(|fit| fit.project(tune.x())) {
                Ok(z) => z,
                Err(e) => {
                    warnings.push(format!("h = {h}: {e}"));
                    return Ok(PointScores {
                        km: f64::INFINITY,
                        skm: f64::INFINITY,
                        warnings,
                    });
                }
            };
            let km = match k_total {
                Some(k) => km_ratio(&z, k, config, point_seed)?,
                None => f64::NAN,
            };
            let skm = match clusters_per_class {
                Some(c) => skm_ratio(&z, tune.labels(), tune.m(), c, config, point_seed, &mut warnings)?,
                None => f64::NAN,
            };
            Ok(PointScores { km, skm, warnings })
        })
        .collect()
}

fn curve_from(grid: &[f64], scores: Vec<PointScores>, method: TuningMethod) -> TuningCurve {
    let ratio_km: Vec<f64> = scores.iter().map(|s| s.km).collect();
    let ratio_skm: Vec<f64> = scores.iter().map(|s| s.skm).collect();
    let warnings = scores.into_iter().flat_map(|s| s.warnings).collect();
    let ratio_weighted = weighted(&ratio_km, &ratio_skm);
    let mut curve = TuningCurve {
        grid: grid.to_vec(),
        ratio_km,
        ratio_skm,
        ratio_weighted,
        h_selected: grid[0],
        method,
        warnings,
    };
    curve.h_selected = argmin(grid, curve.selected_curve());
    curve
}

/// Bandwidth minimizing WSS/BSS of `k_total` clusters on the projected tuning set.
pub fn tune_unsupervised(
    train: &LabeledDataset,
    tune: &LabeledDataset,
    grid: &[f64],
    d: usize,
    k_total: usize,
    config: &TuningConfig,
) -> Result<TuningCurve> {
    let scores = score_grid(train, tune, grid, d, Some(k_total), None, config, config.seed)?;
    Ok(curve_from(grid, scores, TuningMethod::Km))
}

/// Bandwidth minimizing the class-wise SWSS/SBSS.
pub fn tune_supervised(
    train: &LabeledDataset,
    tune: &LabeledDataset,
    grid: &[f64],
    d: usize,
    clusters_per_class: &[usize],
    config: &TuningConfig,
) -> Result<TuningCurve> {
    let scores = score_grid(
        train,
        tune,
        grid,
        d,
        None,
        Some(clusters_per_class),
        config,
        config.seed,
    )?;
    Ok(curve_from(grid, scores, TuningMethod::Skm))
}

/// Bandwidth minimizing the average of the standardized km and skm curves.
pub fn tune_weighted(
    train: &LabeledDataset,
    tune: &LabeledDataset,
    grid: &[f64],
    d: usize,
    k_total: usize,
    clusters_per_class: &[usize],
    config: &TuningConfig,
) -> Result<TuningCurve> {
    let scores = score_grid(
        train,
        tune,
        grid,
        d,
        Some(k_total),
        Some(clusters_per_class),
        config,
        config.seed,
    )?;
    Ok(curve_from(grid, scores, TuningMethod::Wkm))
}

/// Class-stratified fold index for every observation.
pub fn stratified_folds(labels: &[usize], m: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(SdrError::Parameter(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut offset = 0;
    for l in 1..=m {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == l).collect();
        if rows.len() < folds {
            return Err(SdrError::Parameter(format!(
                "class {l} has {} observations, fewer than {folds} folds",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        for (r, &i) in rows.iter().enumerate() {
            assignment[i] = (offset + r) % folds;
        }
        // carry the rotation so small classes do not all start in fold 0
        offset = (offset + rows.len()) % folds;
    }
    Ok(assignment)
}

/// k-fold weighted k-means: curves from each held-out fold, averaged.
#[allow(clippy::too_many_arguments)]
pub fn tune_kfold(
    train: &LabeledDataset,
    grid: &[f64],
    d: usize,
    k_total: usize,
    clusters_per_class: &[usize],
    folds: usize,
    config: &TuningConfig,
    seed: u64,
) -> Result<TuningCurve> {
    check_grid(grid)?;
    let assignment = stratified_folds(train.labels(), train.m(), folds, seed)?;
    let mut km = vec![0.0; grid.len()];
    let mut skm = vec![0.0; grid.len()];
    let mut wkm = vec![0.0; grid.len()];
    let mut warnings = Vec::new();
    for f in 0..folds {
        let held: Vec<usize> = (0..train.n()).filter(|&i| assignment[i] == f).collect();
        let rest: Vec<usize> = (0..train.n()).filter(|&i| assignment[i] != f).collect();
        let fit_set = train.subset(&rest)?;
        let eval_set = train.subset(&held)?;
        let scores = score_grid(
            &fit_set,
            &eval_set,
            grid,
            d,
            Some(k_total),
            Some(clusters_per_class),
            config,
            seed.wrapping_add(f as u64 + 1),
        )?;
        let fold = curve_from(grid, scores, TuningMethod::Wkm);
        for g in 0..grid.len() {
            km[g] += fold.ratio_km[g] / folds as f64;
            skm[g] += fold.ratio_skm[g] / folds as f64;
            wkm[g] += fold.ratio_weighted[g] / folds as f64;
        }
        warnings.extend(fold.warnings.into_iter().map(|w| format!("fold {f}: {w}")));
    }
    let h_selected = argmin(grid, &wkm);
    Ok(TuningCurve {
        grid: grid.to_vec(),
        ratio_km: km,
        ratio_skm: skm,
        ratio_weighted: wkm,
        h_selected,
        method: TuningMethod::Kfold,
        warnings,
    })
}
