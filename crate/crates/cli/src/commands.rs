use std::path::{Path, PathBuf};
use std::time::Instant;

use ckb_core::alignment::{self, AlignmentConfig, LossRecord, Variant};
use ckb_core::datagen::{self, CsvSchema, DomainPair, LabeledDataset, ShiftConfig};
use ckb_core::discrepancy::{self, DiscrepancyReport};
use ckb_core::kernels::KernelSpec;
use ckb_core::oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::args::{
    AdaptArgs, BenchmarkArg, ConvergeArgs, Fault, GenerateArgs, KernelArg, MetricArg, MetricArgs,
    VerifyArgs,
};
use crate::error::CliError;
use crate::report::{
    io_error, AdaptConfig, AdaptOutcome, Config, ConvergeOutcome, ConvergeRow, GenerateOutcome,
    Outcome, RunReport, VerifyInstance, VerifyOutcome, OUT_DIR_ENV,
};

/// Largest relative deviation `verify` accepts.
pub const VERIFY_TOLERANCE: f64 = 1e-6;

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn kernel_spec(kind: KernelArg, sigma2: Option<f64>) -> Result<KernelSpec, CliError> {
    Ok(match (kind, sigma2) {
        (KernelArg::Linear, _) => KernelSpec::linear(),
        (KernelArg::Gaussian, None) => KernelSpec::gaussian_adaptive(),
        (KernelArg::Gaussian, Some(s)) => KernelSpec::gaussian(s)?,
    })
}

/// Loads two CSV files, agreeing on the number of classes when both carry labels.
pub fn load_pair(
    source: &Path,
    target: &Path,
) -> Result<(LabeledDataset, LabeledDataset), CliError> {
    let schema = CsvSchema::default();
    let ds = datagen::load_csv(source, &schema)?;
    let dt = datagen::load_csv(target, &schema)?;
    match (ds.n_classes(), dt.n_classes()) {
        (Some(a), Some(b)) if a != b => {
            let schema = CsvSchema {
                n_classes: Some(a.max(b)),
                ..CsvSchema::default()
            };
            Ok((
                datagen::load_csv(source, &schema)?,
                datagen::load_csv(target, &schema)?,
            ))
        }
        _ => Ok((ds, dt)),
    }
}

pub fn compute_metric(
    args: &MetricArgs,
    ds: &LabeledDataset,
    dt: &LabeledDataset,
) -> Result<DiscrepancyReport, CliError> {
    let spec_x = kernel_spec(args.kernel_x, args.sigma2)?;
    let spec_y = kernel_spec(args.kernel_y, args.sigma2_y)?;
    let report = match args.metric {
        MetricArg::Bures => {
            if ds.dim() != dt.dim() {
                return Err(CliError::Input(format!(
                    "feature dimensions differ: {} vs {}",
                    ds.dim(),
                    dt.dim()
                )));
            }
            let cs = oracle::feature_covariance(ds);
            let ct = oracle::feature_covariance(dt);
            let mut r = discrepancy::bures_sq(&cs.view(), &ct.view())?;
            r.n = ds.len();
            r.m = dt.len();
            r
        }
        MetricArg::KernelBures => discrepancy::kernel_bures_sq(ds, dt, &spec_x)?,
        MetricArg::Ckb => discrepancy::ckb_sq_with(
            ds,
            dt,
            &spec_x,
            &spec_y,
            args.epsilon,
            args.factorization.into(),
        )?,
        MetricArg::Mmd => {
            discrepancy::label_mmd_sq(&ds.require_labels()?, &dt.require_labels()?, &spec_y)?
        }
    };
    Ok(report)
}

pub fn run_metric(args: &MetricArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let (ds, dt) = load_pair(&args.source, &args.target)?;
    let report = compute_metric(args, &ds, &dt)?;
    Ok(RunReport::new(
        "metric",
        None,
        elapsed_ms(start),
        Config::Metric(args.clone()),
        Outcome::Metric(report),
    ))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    if jobs == 0 {
        return Err(CliError::Input("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

fn verify_instance(args: &VerifyArgs, seed: u64) -> Result<VerifyInstance, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = pick(&mut rng, &args.dims.0);
    let classes = pick(&mut rng, &args.classes.0);
    let n = pick(&mut rng, &args.sizes.0);
    let m = pick(&mut rng, &args.sizes.0);
    let epsilon = pick(&mut rng, &args.epsilons.0);
    let ds = datagen::random_labeled(&mut rng, "source", dim, classes, n)?;
    let dt = datagen::random_labeled(&mut rng, "target", dim, classes, m)?;
    let lin = KernelSpec::linear();
    let r = discrepancy::ckb_sq(&ds, &dt, &lin, &lin, epsilon)?;
    let kernel_value = match args.fault {
        None => r.value,
        Some(Fault::CrossSign) => r.trace_source + r.trace_target + 2.0 * r.cross_term,
    };
    let primal_value = oracle::ckb_sq_primal(&ds, &dt, epsilon)?.value;
    Ok(VerifyInstance {
        seed,
        dim,
        classes,
        n,
        m,
        epsilon,
        kernel_value,
        primal_value,
        deviation: (kernel_value - primal_value).abs() / primal_value.abs().max(1.0),
    })
}

pub fn run_verify(args: &VerifyArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    if args.seeds == 0 {
        return Err(CliError::Input("--seeds must be at least 1".into()));
    }
    if args.sizes.0.iter().any(|&s| s < 2) {
        return Err(CliError::Input("every size must be at least 2".into()));
    }
    let instances = pool(args.jobs)?.install(|| {
        (0..args.seeds)
            .into_par_iter()
            .map(|i| verify_instance(args, args.seed.wrapping_add(i)))
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let worst = instances
        .iter()
        .max_by(|a, b| a.deviation.total_cmp(&b.deviation))
        .expect("at least one instance");
    let outcome = VerifyOutcome {
        tolerance: VERIFY_TOLERANCE,
        max_deviation: worst.deviation,
        worst_seed: worst.seed,
        passed: worst.deviation <= VERIFY_TOLERANCE,
        instances: instances.clone(),
    };
    Ok(RunReport::new(
        "verify",
        Some(args.seed),
        elapsed_ms(start),
        Config::Verify(args.clone()),
        Outcome::Verify(outcome),
    ))
}

/// Exit status implied by a finished report.
pub fn report_status(report: &RunReport) -> Result<(), CliError> {
    match &report.result {
        Outcome::Verify(v) if !v.passed => Err(CliError::Verification(format!(
            "max relative deviation {:e} exceeds {:e} (seed {})",
            v.max_deviation, v.tolerance, v.worst_seed
        ))),
        _ => Ok(()),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn converge_estimate(args: &ConvergeArgs, size: usize, seed: u64) -> Result<f64, CliError> {
    let cfg = ShiftConfig::no_shift(args.classes, size / args.classes, seed);
    let pair = datagen::synth_conditional_shift(&cfg)?;
    let spec = KernelSpec::gaussian_adaptive();
    let eps = args.epsilon_schedule.at(size);
    let r = discrepancy::ckb_sq_with(
        &pair.source,
        &pair.target,
        &spec,
        &spec,
        eps,
        args.factorization.into(),
    )?;
    Ok(r.value.abs())
}

pub fn run_converge(args: &ConvergeArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    if args.seeds == 0 {
        return Err(CliError::Input("--seeds must be at least 1".into()));
    }
    if args.sizes.0.len() < 2 {
        return Err(CliError::Input("need at least two sizes".into()));
    }
    for &size in &args.sizes.0 {
        if args.classes < 2 || size % args.classes != 0 || size / args.classes < 2 {
            return Err(CliError::Input(format!(
                "size {size} must be a multiple of --classes {} with at least 2 samples per class",
                args.classes
            )));
        }
        let eps = args.epsilon_schedule.at(size);
        if !(eps.is_finite() && eps > 0.0) {
            return Err(CliError::Input(format!(
                "epsilon schedule gives {eps} at n = {size}"
            )));
        }
    }
    let tasks: Vec<(usize, u64)> = args
        .sizes
        .0
        .iter()
        .flat_map(|&size| (0..args.seeds).map(move |i| (size, i)))
        .collect();
    let estimates = pool(args.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(size, i)| {
                let seed = args.seed.wrapping_add(i) ^ ((size as u64) << 32);
                converge_estimate(args, size, seed)
            })
            .collect::<Result<Vec<f64>, CliError>>()
    })?;
    let per_size = args.seeds as usize;
    let rows: Vec<ConvergeRow> = args
        .sizes
        .0
        .iter()
        .zip(estimates.chunks(per_size))
        .map(|(&size, chunk)| {
            let mut v = chunk.to_vec();
            let med = median(&mut v);
            ConvergeRow {
                size,
                epsilon: args.epsilon_schedule.at(size),
                median: med,
                min: v[0],
                max: v[v.len() - 1],
            }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| (r.size as f64).ln()).collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|r| r.median.max(f64::MIN_POSITIVE).ln())
        .collect();
    let slope = ols_slope(&xs, &ys);
    let inversions = rows
        .windows(2)
        .filter(|w| w[1].median >= w[0].median)
        .count();
    if let Some(path) = &args.csv {
        write_converge_csv(path, &rows)?;
    }
    Ok(RunReport::new(
        "converge",
        Some(args.seed),
        elapsed_ms(start),
        Config::Converge(args.clone()),
        Outcome::Converge(ConvergeOutcome {
            rows,
            slope,
            inversions,
        }),
    ))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(parent) => std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e)),
        None => Ok(()),
    }
}

pub fn write_converge_csv(path: &Path, rows: &[ConvergeRow]) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn write_curves_csv(
    path: &Path,
    history: &[LossRecord],
    variant: Variant,
) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let with_mmd = variant == Variant::CkbPlusMmd;
    let mut header = vec!["step", "epoch", "ce", "ent", "ckb"];
    if with_mmd {
        header.push("mmd");
    }
    header.extend(["total", "lambda_align"]);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in history {
        let mut rec = vec![
            r.step.to_string(),
            r.epoch.to_string(),
            format!("{:?}", r.ce),
            format!("{:?}", r.ent),
            format!("{:?}", r.ckb),
        ];
        if with_mmd {
            rec.push(format!("{:?}", r.mmd.unwrap_or(0.0)));
        }
        rec.push(format!("{:?}", r.total));
        rec.push(format!("{:?}", r.lambda_align));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn benchmark_config(b: BenchmarkArg, seed: u64) -> ShiftConfig {
    match b {
        BenchmarkArg::Default => ShiftConfig::default_benchmark(seed),
        BenchmarkArg::Swap => ShiftConfig::antipodal_swap(seed),
        BenchmarkArg::NoShift => ShiftConfig::no_shift(3, 100, seed),
    }
}

pub fn benchmark_pair(b: BenchmarkArg, seed: u64) -> Result<DomainPair, CliError> {
    Ok(datagen::synth_conditional_shift(&benchmark_config(
        b, seed,
    ))?)
}

pub fn trainer_config(args: &AdaptArgs) -> AlignmentConfig {
    AlignmentConfig {
        lambda1: args.lambda1,
        lambda2: args.lambda2,
        epsilon: args.epsilon,
        variant: args.variant.into(),
        feature_dim_out: args.feature_dim,
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        batch_size: args.batch_size,
        warmup_epochs: args.warmup_epochs,
        seed: args.seed,
        reduction: args.reduction.into(),
        ..AlignmentConfig::default()
    }
}

pub fn run_adapt(args: &AdaptArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let (source, target) = match (&args.source, &args.target) {
        (Some(s), Some(t)) => load_pair(s, t)?,
        (None, None) => {
            let pair = benchmark_pair(args.benchmark, args.seed)?;
            (pair.source, pair.target)
        }
        _ => return Err(CliError::Input("--source and --target go together".into())),
    };
    source.require_labels()?;
    let cfg = trainer_config(args);
    cfg.validate()?;
    // target labels are handed over only as evaluation data
    let eval = target.class_indices();
    let target_x = target.features();
    let (state, train) = alignment::train(&source, &target_x, eval.as_deref(), &cfg)?;
    let baseline = if args.baseline {
        let base = AlignmentConfig {
            lambda2: 0.0,
            ..cfg.clone()
        };
        Some(alignment::train(&source, &target_x, eval.as_deref(), &base)?.1)
    } else {
        None
    };
    let gain_points = match (&baseline, train.after.target) {
        (Some(b), Some(after)) => b.after.target.map(|base| 100.0 * (after - base)),
        _ => None,
    };
    if let Some(path) = &args.curves {
        write_curves_csv(path, &state.loss_history, cfg.variant)?;
    }
    Ok(RunReport::new(
        "adapt",
        Some(args.seed),
        elapsed_ms(start),
        Config::Adapt(Box::new(AdaptConfig {
            args: args.clone(),
            trainer: cfg,
        })),
        Outcome::Adapt(Box::new(AdaptOutcome {
            train,
            history: state.loss_history,
            baseline,
            gain_points,
        })),
    ))
}

pub fn run_generate(args: &GenerateArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut cfg = benchmark_config(args.benchmark, args.seed);
    cfg.samples_per_class = args.samples_per_class;
    let pair = datagen::synth_conditional_shift(&cfg)?;
    let dir = args
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let source = dir.join("source.csv");
    let target = dir.join("target.csv");
    datagen::write_csv(&source, &pair.source)?;
    datagen::write_csv(&target, &pair.target)?;
    Ok(RunReport::new(
        "generate",
        Some(args.seed),
        elapsed_ms(start),
        Config::Generate(args.clone()),
        Outcome::Generate(GenerateOutcome {
            source,
            target,
            n_source: pair.source.len(),
            n_target: pair.target.len(),
        }),
    ))
}

/// One-line human summary printed alongside the JSON report.
pub fn summary(report: &RunReport) -> String {
    match &report.result {
        Outcome::Metric(r) => format!(
            "{:?}: value {:e} (source {:e}, target {:e}, cross {:e}; epsilon {})",
            r.metric_kind,
            r.value,
            r.trace_source,
            r.trace_target,
            r.cross_term,
            r.epsilon.map_or("n/a".to_string(), |e| e.to_string())
        ),
        Outcome::Verify(v) => format!(
            "verify: {} instances, max deviation {:e} (seed {}), {}",
            v.instances.len(),
            v.max_deviation,
            v.worst_seed,
            if v.passed { "pass" } else { "FAIL" }
        ),
        Outcome::Converge(c) => format!(
            "converge: slope {:.3}, {} inversion(s) over {} sizes",
            c.slope,
            c.inversions,
            c.rows.len()
        ),
        Outcome::Adapt(a) => {
            let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:.4}", v));
            let mut s = format!(
                "adapt: target accuracy {} -> {}",
                fmt(a.train.before.target),
                fmt(a.train.after.target)
            );
            if let Some(g) = a.gain_points {
                s += &format!(", gain over lambda2 = 0: {g:+.2} points");
            }
            s
        }
        Outcome::Generate(g) => format!(
            "generate: wrote {} and {}",
            g.source.display(),
            g.target.display()
        ),
    }
}
