//! CSV ingestion and output, quantile discretization and train/test splits.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! file read back with the matching reader reproduces the values exactly.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::error::{Result, SdrError};
use crate::links::{Family, FamilyKind};
use crate::opcg::{SdrBasis, Standardization};
use crate::order::OrderEstimate;
use crate::tuning::{TuningCurve, TuningMethod};

/// How to read a labeled dataset from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub label_column: String,
    pub kind: FamilyKind,
    /// Raw label values merged into one class each, in class order.
    pub merge: Option<Vec<Vec<String>>>,
    /// Cut a numeric label column into this many quantile bins instead.
    pub quantile_bins: Option<usize>,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>, kind: FamilyKind) -> Self {
        Self {
            label_column: label_column.into(),
            kind,
            merge: None,
            quantile_bins: None,
        }
    }
}

/// Parses a merge map such as `3,4,5;6;7,8`.
pub fn parse_merge(spec: &str) -> Result<Vec<Vec<String>>> {
    let groups: Vec<Vec<String>> = spec
        .split(';')
        .map(|g| {
            g.split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect()
        })
        .collect();
    if groups.len() < 2 || groups.iter().any(|g: &Vec<String>| g.is_empty()) {
        return Err(SdrError::Parameter(format!("bad merge map `{spec}`")));
    }
    Ok(groups)
}

fn label_order(raw: &[String]) -> Vec<String> {
    let distinct: BTreeSet<&String> = raw.iter().collect();
    let mut values: Vec<String> = distinct.into_iter().cloned().collect();
    let numeric: Option<Vec<f64>> = values.iter().map(|v| v.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(values).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        values = paired.into_iter().map(|(_, v)| v).collect();
    }
    values
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<LabeledDataset> {
    read_csv(File::open(path.as_ref())?, options)
}

pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_idx = header.iter().position(|h| *h == options.label_column).ok_or_else(|| {
        SdrError::Data(format!(
            "label column `{}` not found; available columns: {}",
            options.label_column,
            header.join(", ")
        ))
    })?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let p = names.len();
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v = cell.parse::<f64>().map_err(|e| SdrError::Parse {
                row,
                column: header[c].clone(),
                message: format!("`{cell}`: {e}"),
            })?;
            values.push(v);
        }
    }
    let n = raw_labels.len();
    let x = DMatrix::from_row_slice(n, p, &values);

    let (labels, label_names) = if let Some(bins) = options.quantile_bins {
        let numeric = raw_labels
            .iter()
            .enumerate()
            .map(|(r, v)| {
                v.parse::<f64>().map_err(|e| SdrError::Parse {
                    row: r + 1,
                    column: options.label_column.clone(),
                    message: format!("`{v}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let labels = discretize_quantiles(&numeric, bins)?;
        (labels, (1..=bins).map(|b| format!("q{b}")).collect())
    } else if let Some(groups) = &options.merge {
        let labels = raw_labels
            .iter()
            .enumerate()
            .map(|(r, v)| {
                groups
                    .iter()
                    .position(|g| g.contains(v))
                    .map(|g| g + 1)
                    .ok_or_else(|| SdrError::Parse {
                        row: r + 1,
                        column: options.label_column.clone(),
                        message: format!("label `{v}` is not in the merge map"),
                    })
            })
            .collect::<Result<Vec<usize>>>()?;
        (labels, groups.iter().map(|g| g.join("|")).collect())
    } else {
        let order = label_order(&raw_labels);
        let labels = raw_labels
            .iter()
            .map(|v| order.iter().position(|o| o == v).expect("label is in its own order") + 1)
            .collect();
        (labels, order)
    };
    let m = label_names.len();
    if m < 2 {
        return Err(SdrError::Data(format!(
            "label column `{}` has a single distinct value",
            options.label_column
        )));
    }
    let family = Family::new(options.kind, m)?;
    LabeledDataset::with_names(x, labels, family, names, label_names)
}

/// Labels `1..=bins` from cuts at the empirical `j / bins` quantiles; ties go to the lower bin.
pub fn discretize_quantiles(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(SdrError::Parameter(format!("need at least 2 bins, got {bins}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SdrError::Data("values to discretize must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    if sorted.len() < bins {
        return Err(SdrError::Data(format!(
            "{} distinct values cannot fill {bins} bins",
            sorted.len()
        )));
    }
    let mut all = values.to_vec();
    all.sort_by(|a, b| a.total_cmp(b));
    let quantile = |q: f64| {
        let pos = q * (all.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        all[lo] + (pos - lo as f64) * (all[hi] - all[lo])
    };
    let cuts: Vec<f64> = (1..bins).map(|j| quantile(j as f64 / bins as f64)).collect();
    Ok(values
        .iter()
        .map(|v| 1 + cuts.iter().filter(|&&c| *v > c).count())
        .collect())
}

/// Seeded split into `(train, test)`, optionally stratified by class.
pub fn split(
    data: &LabeledDataset,
    train_fraction: f64,
    stratified: bool,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = split_indices(data, train_fraction, stratified, seed)?;
    Ok((data.subset(&train)?, data.subset(&test)?))
}

/// Row indices of a seeded split, each side sorted ascending.
pub fn split_indices(
    data: &LabeledDataset,
    train_fraction: f64,
    stratified: bool,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SdrError::Parameter(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = if stratified {
        data.indices_by_class()
    } else {
        vec![(0..data.n()).collect()]
    };
    for (g, rows) in groups.iter().enumerate() {
        if stratified && rows.len() < 2 {
            return Err(SdrError::Data(format!(
                "class {} has a single observation; cannot stratify",
                g + 1
            )));
        }
    }
    // largest-remainder allocation keeps the overall size at round(n * fraction)
    let total = ((data.n() as f64 * train_fraction).round() as usize).clamp(1, data.n() - 1);
    let exact: Vec<f64> = groups.iter().map(|g| g.len() as f64 * train_fraction).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let mut missing = total.saturating_sub(take.iter().sum());
    for &g in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if take[g] < groups[g].len() {
            take[g] += 1;
            missing -= 1;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (g, mut rows) in groups.into_iter().enumerate() {
        rows.shuffle(&mut rng);
        let k = if stratified {
            take[g].clamp(1, rows.len() - 1)
        } else {
            take[g]
        };
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn writer(path: impl AsRef<Path>) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn parse_num(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|e| SdrError::Parse {
        row,
        column: column.to_string(),
        message: format!("`{cell}`: {e}"),
    })
}

/// Header plus rows of numbers.
pub fn write_matrix_csv(path: impl AsRef<Path>, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| num(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut n = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (c, cell) in rec.iter().enumerate() {
            values.push(parse_num(cell, r + 1, &header[c])?);
        }
        n += 1;
    }
    Ok((header.clone(), DMatrix::from_row_slice(n, header.len(), &values)))
}

/// Dataset with predictor columns and a trailing `label` column of label names.
pub fn write_dataset_csv(path: impl AsRef<Path>, data: &LabeledDataset, label_column: &str) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = data.predictor_names().to_vec();
    header.push(label_column.to_string());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.x().row(i).iter().map(|v| num(*v)).collect();
        rec.push(data.label_names()[data.labels()[i] - 1].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per predictor: name, standardized and original coordinates, mean and sd.
pub fn write_basis_csv(path: impl AsRef<Path>, basis: &SdrBasis, names: &[String]) -> Result<()> {
    let (p, d) = basis.basis.shape();
    if names.len() != p {
        return Err(SdrError::Data(format!("{} names for {p} predictors", names.len())));
    }
    let mut w = writer(path)?;
    let mut header = vec!["variable".to_string()];
    header.extend((1..=d).map(|k| format!("std_{k}")));
    header.extend((1..=d).map(|k| format!("orig_{k}")));
    header.push("mean".into());
    header.push("sd".into());
    w.write_record(&header)?;
    for j in 0..p {
        let mut rec = vec![names[j].clone()];
        rec.extend((0..d).map(|k| num(basis.basis[(j, k)])));
        rec.extend((0..d).map(|k| num(basis.original[(j, k)])));
        rec.push(num(basis.standardization.mean[j]));
        rec.push(num(basis.standardization.sd[j]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A basis file read back: predictor names, both bases and the standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFile {
    pub names: Vec<String>,
    pub basis: DMatrix<f64>,
    pub original: DMatrix<f64>,
    pub standardization: Standardization,
}

impl BasisFile {
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.standardization.apply(x)? * &self.basis)
    }
}

pub fn read_basis_csv(path: impl AsRef<Path>) -> Result<BasisFile> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 5 || (header.len() - 3) % 2 != 0 || header[0] != "variable" {
        return Err(SdrError::Data("not a basis file".into()));
    }
    let d = (header.len() - 3) / 2;
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        names.push(rec[0].to_string());
        let vals = (1..header.len())
            .map(|c| parse_num(&rec[c], r + 1, &header[c]))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    let p = rows.len();
    let basis = DMatrix::from_fn(p, d, |j, k| rows[j][k]);
    let original = DMatrix::from_fn(p, d, |j, k| rows[j][d + k]);
    let mean = DVector::from_fn(p, |j, _| rows[j][2 * d]);
    let sd = DVector::from_fn(p, |j, _| rows[j][2 * d + 1]);
    Ok(BasisFile {
        names,
        basis,
        original,
        standardization: Standardization { mean, sd },
    })
}

pub fn write_eigenvalues_csv(path: impl AsRef<Path>, values: &DVector<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["index", "eigenvalue"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tuning_csv(path: impl AsRef<Path>, curve: &TuningCurve) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["h", "ratio_km", "ratio_skm", "ratio_weighted"])?;
    for g in 0..curve.grid.len() {
        w.write_record([
            num(curve.grid[g]),
            num(curve.ratio_km[g]),
            num(curve.ratio_skm[g]),
            num(curve.ratio_weighted[g]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a tuning curve; the selection is recomputed from the curve for `method`.
pub fn read_tuning_csv(path: impl AsRef<Path>, method: TuningMethod) -> Result<TuningCurve> {
    let (header, m) = read_matrix_csv(path)?;
    if header != ["h", "ratio_km", "ratio_skm", "ratio_weighted"] {
        return Err(SdrError::Data("not a tuning curve file".into()));
    }
    let col = |c: usize| m.column(c).iter().copied().collect::<Vec<f64>>();
    let mut curve = TuningCurve {
        grid: col(0),
        ratio_km: col(1),
        ratio_skm: col(2),
        ratio_weighted: col(3),
        h_selected: 0.0,
        method,
        warnings: Vec::new(),
    };
    let sel = curve.selected_curve();
    let best = (0..sel.len())
        .min_by(|&a, &b| sel[a].total_cmp(&sel[b]))
        .ok_or_else(|| SdrError::Data("empty tuning curve".into()))?;
    curve.h_selected = curve.grid[best];
    Ok(curve)
}

pub fn write_order_csv(path: impl AsRef<Path>, est: &OrderEstimate) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["k", "objective", "eigenvalue_component", "eigenvector_component"])?;
    for k in 0..est.objective_curve.len() {
        w.write_record([
            k.to_string(),
            num(est.objective_curve[k]),
            num(est.eigenvalue_component[k]),
            num(est.eigenvector_component[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain `key = value` lines, in the given order.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[(String, String)]) -> Result<()> {
    let mut f = File::create(path)?;
    for (k, v) in entries {
        writeln!(f, "{k} = {v}")?;
    }
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| SdrError::Parse {
            row: i + 1,
            column: "config".into(),
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
