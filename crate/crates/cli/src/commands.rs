use std::fs;
use std::path::Path;

use catsdr::baselines::{fit_method, Method, MethodConfig};
use catsdr::io::{self, CsvOptions};
use catsdr::order::{default_augment, default_d_max, predictor_augmentation};
use catsdr::simbench::{generate_simulation, compare_methods, SimConfig};
use catsdr::tuning::{self, TuningConfig, TuningMethod};
use catsdr::{FamilyKind, LabeledDataset, OpcgConfig, SdrError, Solver};
use nalgebra::DMatrix;

use crate::args::*;
use crate::CliError;

type Manifest = [(String, String)];

pub fn dispatch(command: &Command, manifest: &Manifest) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => simulate(a, manifest),
        Command::Estimate(a) => estimate(a, manifest),
        Command::Tune(a) => tune(a, manifest),
        Command::Order(a) => order(a, manifest),
        Command::Bench(a) => bench(a, manifest),
        Command::Project(a) => project(a, manifest),
        Command::Prepare(a) => prepare(a, manifest),
    }
}

fn out_dir(dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(SdrError::from)?;
    io::write_manifest(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

fn csv_options(d: &DataArgs) -> Result<CsvOptions, CliError> {
    let kind = match d.family {
        FamilyArg::Categorical => FamilyKind::Categorical,
        FamilyArg::Ordinal => FamilyKind::Ordinal,
    };
    let mut opts = CsvOptions::new(d.label.clone(), kind);
    if d.merge.is_some() && d.quantile_bins.is_some() {
        return Err(CliError::Usage("--merge and --quantile-bins are exclusive".into()));
    }
    if let Some(m) = &d.merge {
        opts.merge = Some(io::parse_merge(m)?);
    }
    opts.quantile_bins = d.quantile_bins;
    Ok(opts)
}

fn load(d: &DataArgs) -> Result<LabeledDataset, CliError> {
    if !d.input.is_file() {
        return Err(SdrError::Data(format!("cannot read `{}`", d.input.display())).into());
    }
    Ok(io::load_csv(&d.input, &csv_options(d)?)?)
}

fn opcg_config(f: &FitArgs) -> OpcgConfig {
    let mut cfg = OpcgConfig {
        refine: f.refine,
        standardize: !f.raw,
        solver: solver(f.solver),
        ..OpcgConfig::default()
    };
    cfg.optimizer.ridge = f.ridge;
    cfg
}

fn solver(s: SolverArg) -> Solver {
    match s {
        SolverArg::Cg => Solver::HybridCg,
        SolverArg::Fisher => Solver::FisherScoring,
    }
}

fn method_config(f: &FitArgs, tikhonov: f64) -> MethodConfig {
    let mut cfg = MethodConfig {
        opcg: opcg_config(f),
        tikhonov,
        ..MethodConfig::default()
    };
    cfg.made.solver = solver(f.solver);
    cfg.made.optimizer.ridge = f.ridge;
    cfg.made.standardize = !f.raw;
    cfg
}

fn simulate(a: &SimulateArgs, manifest: &Manifest) -> Result<(), CliError> {
    let cfg = SimConfig {
        n_per_cluster_train: a.per_cluster,
        seed: a.seed,
        ..SimConfig::default()
    };
    let sim = generate_simulation(&cfg)?;
    out_dir(&a.out_dir, manifest)?;
    io::write_dataset_csv(a.out_dir.join("train.csv"), &sim.train, "label")?;
    io::write_dataset_csv(a.out_dir.join("tune.csv"), &sim.tune, "label")?;
    io::write_dataset_csv(a.out_dir.join("test.csv"), &sim.test, "label")?;
    io::write_matrix_csv(a.out_dir.join("truth.csv"), &["b1".into(), "b2".into()], &sim.beta_true)?;
    println!("wrote {} training rows to {}", sim.train.n(), a.out_dir.display());
    Ok(())
}

fn estimate(a: &EstimateArgs, manifest: &Manifest) -> Result<(), CliError> {
    let method: Method = a.method.parse()?;
    let h = match (a.h, method.needs_bandwidth()) {
        (Some(h), _) => h,
        (None, false) => 1.0,
        (None, true) => return Err(CliError::Usage(format!("--h is required for {method}"))),
    };
    let data = load(&a.data)?;
    let fit = fit_method(method, &data, h, a.d, &method_config(&a.fit, a.tikhonov))?;
    out_dir(&a.out_dir, manifest)?;
    io::write_basis_csv(a.out_dir.join("basis.csv"), &fit, data.predictor_names())?;
    io::write_eigenvalues_csv(a.out_dir.join("eigenvalues.csv"), &fit.eigenvalues)?;
    let z = fit.project(data.x())?;
    write_projection(&a.out_dir.join("projected.csv"), &z, &data)?;
    for w in &fit.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{method}: d = {}, basis written to {}",
        a.d,
        a.out_dir.join("basis.csv").display()
    );
    Ok(())
}

fn write_projection(path: &Path, z: &DMatrix<f64>, data: &LabeledDataset) -> Result<(), CliError> {
    let mut header: Vec<String> = (1..=z.ncols()).map(|k| format!("z{k}")).collect();
    header.push("label".into());
    let mut m = DMatrix::zeros(z.nrows(), z.ncols() + 1);
    m.columns_mut(0, z.ncols()).copy_from(z);
    for (i, &l) in data.labels().iter().enumerate() {
        m[(i, z.ncols())] = l as f64;
    }
    io::write_matrix_csv(path, &header, &m)?;
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("bad grid `{s}`"));
    if let [lo, hi, n] = s.split(':').collect::<Vec<_>>()[..] {
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        let n = n.trim().parse().map_err(|_| bad())?;
        return Ok(tuning::log_grid(lo, hi, n)?);
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

fn parse_clusters(s: &str, m: usize) -> Result<Vec<usize>, CliError> {
    let vals: Vec<usize> = s
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad cluster counts `{s}`")))?;
    match vals.len() {
        1 => Ok(vec![vals[0]; m]),
        n if n == m => Ok(vals),
        n => Err(CliError::Usage(format!("{n} cluster counts for {m} classes"))),
    }
}

fn tune(a: &TuneArgs, manifest: &Manifest) -> Result<(), CliError> {
    let criterion: TuningMethod = a.criterion.parse()?;
    let train = load(&a.data)?;
    let grid = parse_grid(&a.grid)?;
    let clusters = parse_clusters(&a.clusters_per_class, train.m())?;
    let k_total = a.k_total.unwrap_or(clusters.iter().sum());
    let config = TuningConfig {
        opcg: OpcgConfig {
            refine: 0,
            ..opcg_config(&a.fit)
        },
        seed: a.seed,
        ..TuningConfig::default()
    };
    let curve = if criterion == TuningMethod::Kfold {
        tuning::tune_kfold(&train, &grid, a.d, k_total, &clusters, a.folds, &config, a.seed)?
    } else {
        let path = a
            .tune_input
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("--tune-input is required for --criterion {criterion}")))?;
        let held = io::load_csv(path, &csv_options(&a.data)?)?;
        match criterion {
            TuningMethod::Km => tuning::tune_unsupervised(&train, &held, &grid, a.d, k_total, &config)?,
            TuningMethod::Skm => tuning::tune_supervised(&train, &held, &grid, a.d, &clusters, &config)?,
            _ => tuning::tune_weighted(&train, &held, &grid, a.d, k_total, &clusters, &config)?,
        }
    };
    out_dir(&a.out_dir, manifest)?;
    io::write_tuning_csv(a.out_dir.join("tuning.csv"), &curve)?;
    for w in &curve.warnings {
        eprintln!("warning: {w}");
    }
    println!("h_selected={}", curve.h_selected);
    Ok(())
}

fn order(a: &OrderArgs, manifest: &Manifest) -> Result<(), CliError> {
    let data = load(&a.data)?;
    let d_max = a.d_max.unwrap_or(default_d_max(data.p()));
    let r = a.r.unwrap_or(default_augment(data.p()));
    let cfg = OpcgConfig {
        refine: 0,
        ..opcg_config(&a.fit)
    };
    let est = predictor_augmentation(&data, a.h, d_max, r, a.reps, a.seed, &cfg)?;
    out_dir(&a.out_dir, manifest)?;
    io::write_order_csv(a.out_dir.join("order.csv"), &est)?;
    println!("d_hat={}", est.d_hat);
    Ok(())
}

fn bench(a: &BenchArgs, manifest: &Manifest) -> Result<(), CliError> {
    let methods: Vec<Method> = a
        .methods
        .split(',')
        .map(|m| m.parse())
        .collect::<Result<_, SdrError>>()?;
    let seeds: Vec<u64> = (a.first_seed..a.first_seed + a.seeds).collect();
    let table = compare_methods(&seeds, a.h, a.d, &methods, &method_config(&a.fit, a.tikhonov))?;
    out_dir(&a.out_dir, manifest)?;
    let mut w = csv_writer(&a.out_dir.join("distances.csv"))?;
    w.write_record(["seed", "method", "distance"]).map_err(SdrError::from)?;
    for (mi, m) in table.methods.iter().enumerate() {
        for (si, seed) in table.seeds.iter().enumerate() {
            let v = table.distances[mi][si]
                .map(|v| v.to_string())
                .unwrap_or_else(|| "NaN".into());
            w.write_record([seed.to_string(), m.to_string(), v])
                .map_err(SdrError::from)?;
        }
    }
    w.flush().map_err(SdrError::from)?;
    let mut w = csv_writer(&a.out_dir.join("summary.csv"))?;
    w.write_record(["method", "mean_distance", "failures"])
        .map_err(SdrError::from)?;
    for (mi, m) in table.methods.iter().enumerate() {
        let failed = table.distances[mi].iter().filter(|v| v.is_none()).count();
        let mean = table.mean(*m).map(|v| v.to_string()).unwrap_or_else(|| "NaN".into());
        println!("{m:<10} {mean}");
        w.write_record([m.to_string(), mean, failed.to_string()])
            .map_err(SdrError::from)?;
    }
    w.flush().map_err(SdrError::from)?;
    for f in &table.failures {
        eprintln!("warning: {f}");
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    Ok(csv::Writer::from_path(path).map_err(SdrError::from)?)
}

fn project(a: &ProjectArgs, manifest: &Manifest) -> Result<(), CliError> {
    let basis = io::read_basis_csv(&a.basis)?;
    let data = load(&a.data)?;
    if basis.names != data.predictor_names() {
        return Err(SdrError::Data("predictor columns differ from those the basis was fitted on".into()).into());
    }
    let z = basis.project(data.x())?;
    out_dir(&a.out_dir, manifest)?;
    write_projection(&a.out_dir.join("projected.csv"), &z, &data)?;
    println!("projected {} rows onto {} directions", z.nrows(), z.ncols());
    Ok(())
}

fn prepare(a: &PrepareArgs, manifest: &Manifest) -> Result<(), CliError> {
    let data = load(&a.data)?;
    let (train, test) = io::split(&data, a.train_fraction, a.stratified, a.seed)?;
    out_dir(&a.out_dir, manifest)?;
    io::write_dataset_csv(a.out_dir.join("train.csv"), &train, &a.data.label)?;
    io::write_dataset_csv(a.out_dir.join("test.csv"), &test, &a.data.label)?;
    println!("train {} rows, test {} rows, {} classes", train.n(), test.n(), data.m());
    Ok(())
}
