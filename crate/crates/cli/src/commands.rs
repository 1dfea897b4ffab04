use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use pilae::bench::{
    baseline_report, scaling_probe, split_hash, sweep_width_param, BaselineConfig, RunReport,
    SweepParam,
};
use pilae::data::{kfold_split, load_csv, load_idx, load_model, save_model, Dataset, LabelColumn};
use pilae::layer::LayerConfig;
use pilae::pipeline::{evaluate_with, fit_head, train_model, TrainConfig, TrainOutcome};
use pilae::readout::{
    fit_width_regression_with, leave_one_out, load_width_records, HeadKind, LambdaChoice,
    SoftmaxOptions,
};
use pilae::stack::{transform, StackConfig, StackedNetwork};
use pilae::PilaeError;
use serde_json::json;

use crate::args::{
    BenchArgs, DataArgs, DataFormat, EvalArgs, FitWidthArgs, ModelArgs, SweepArgs, SweepTarget,
    TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<PilaeError> for CliError {
    fn from(e: PilaeError) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<pilae::data::DataError> for CliError {
    fn from(e: pilae::data::DataError) -> Self {
        CliError::Failure(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub struct Splits {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

fn idx_dir(name: &str, data_dir: &Path) -> CliResult<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.is_dir() {
        return Ok(direct);
    }
    let named = data_dir.join(name);
    if named.is_dir() {
        return Ok(named);
    }
    Err(CliError::Failure(format!(
        "no IDX directory {name:?} (also looked in {}); scripts/fetch_data.py downloads MNIST and Fashion-MNIST",
        named.display()
    )))
}

fn load_idx_pair(dir: &Path, prefix: &str) -> CliResult<Dataset> {
    let mut ds = load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )?;
    if let Some(name) = dir.file_name() {
        ds.name = name.to_string_lossy().into_owned();
    }
    Ok(ds)
}

pub fn load_data(args: &DataArgs, data_dir: &Path) -> CliResult<Splits> {
    let mut splits = match args.data_format {
        DataFormat::Idx => {
            let dir = idx_dir(&args.train, data_dir)?;
            let train = load_idx_pair(&dir, "train")?;
            let test = match &args.test {
                Some(t) => Some(load_idx_pair(&idx_dir(t, data_dir)?, "t10k")?),
                None if dir.join("t10k-images-idx3-ubyte").exists() => {
                    Some(load_idx_pair(&dir, "t10k")?)
                }
                None => None,
            };
            Splits { train, test }
        }
        DataFormat::Csv => {
            if args.test.is_some() {
                return Err(CliError::Usage(
                    "CSV data is split internally (--folds, --seed); pass a single file".into(),
                ));
            }
            let col: LabelColumn = args.label_column.parse().expect("infallible");
            let all = load_csv(Path::new(&args.train), &col, !args.no_header)?;
            if args.folds < 2 || args.folds > all.len() {
                return Err(CliError::Usage(format!(
                    "--folds must lie in 2..={} for this file",
                    all.len()
                )));
            }
            let fold = kfold_split(all.len(), args.folds, args.seed)?.swap_remove(0);
            Splits {
                train: all.subset(&fold.train),
                test: Some(all.subset(&fold.test)),
            }
        }
    };
    if let Some(n) = args.limit {
        splits.train = splits.train.head(n);
    }
    if let (Some(n), Some(t)) = (args.test_limit, splits.test.as_mut()) {
        *t = t.head(n);
    }
    log::info!(
        "loaded {}: {} x {} train{}",
        splits.train.name,
        splits.train.dim(),
        splits.train.len(),
        splits
            .test
            .as_ref()
            .map(|t| format!(", {} test", t.len()))
            .unwrap_or_default()
    );
    Ok(splits)
}

pub fn train_config(m: &ModelArgs) -> CliResult<TrainConfig> {
    let lambda = match m.lambda.trim() {
        "auto" => LambdaChoice::Auto {
            val_fraction: m.val_fraction,
        },
        v => match v.parse::<f64>() {
            Ok(l) if l > 0.0 && l.is_finite() => LambdaChoice::Fixed(l),
            _ => {
                return Err(CliError::Usage(format!(
                    "--lambda must be 'auto' or a positive number, got {v:?}"
                )))
            }
        },
    };
    if !(m.val_fraction > 0.0 && m.val_fraction < 1.0) {
        return Err(CliError::Usage("--val-fraction must lie in (0, 1)".into()));
    }
    let cfg = TrainConfig {
        stack: StackConfig {
            layer: LayerConfig {
                width_rule: m.width_rule,
                activation: m.activation,
                lambda1: m.lambda1,
                tie_weights: !m.no_tie,
                bias: m.bias,
                fallback_beta: m.fallback_beta,
                keep_decoder: false,
            },
            epsilon: m.epsilon,
            max_depth: m.max_depth,
            min_width: m.min_width,
        },
        head: m.head,
        lambda,
        softmax: SoftmaxOptions {
            step: m.softmax_step,
            epochs: m.softmax_epochs,
            backtrack: true,
        },
    };
    cfg.stack
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn config_echo(m: &ModelArgs, d: &DataArgs) -> serde_json::Value {
    json!({
        "train": d.train,
        "test": d.test,
        "limit": d.limit,
        "seed": d.seed,
        "width_rule": m.width_rule.to_string(),
        "activation": m.activation.to_string(),
        "lambda1": m.lambda1,
        "tie_weights": !m.no_tie,
        "bias": m.bias,
        "fallback_beta": m.fallback_beta,
        "epsilon": m.epsilon,
        "max_depth": m.max_depth,
        "min_width": m.min_width,
        "head": m.head.to_string(),
        "lambda": m.lambda,
        "val_fraction": m.val_fraction,
    })
}

fn pilae_report(
    net: &StackedNetwork,
    outcome: &TrainOutcome,
    splits: &Splits,
    head: HeadKind,
    test_accuracy: Option<f64>,
) -> RunReport {
    let mut r = RunReport::new("pilae", &splits.train.name);
    r.architecture = std::iter::once(splits.train.dim())
        .chain(net.widths())
        .chain(net.readout.as_ref().map(|h| h.classes))
        .collect();
    r.layer_seconds = outcome.layer_seconds.clone();
    r.total_seconds = outcome.total_seconds;
    r.head = head.to_string();
    r.train_accuracy = Some(outcome.train_accuracy);
    r.test_accuracy = test_accuracy;
    r.rank_ratios = net.rank_ratios().unwrap_or_default();
    r.stop_reason = net.growth.as_ref().map(|g| {
        serde_json::to_value(g.stop_reason)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default()
    });
    r.lambda = outcome.lambda;
    r.lambda_hat = outcome.search.as_ref().map(|s| s.lambda_hat);
    r.train_split = Some(split_hash(&splits.train));
    r.test_split = splits.test.as_ref().map(split_hash);
    r
}

fn write_reports(path: Option<&Path>, reports: &[serde_json::Value]) -> CliResult {
    let Some(path) = path else { return Ok(()) };
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Failure(format!("cannot open report {}: {e}", path.display())))?;
    for r in reports {
        writeln!(f, "{r}")
            .map_err(|e| CliError::Failure(format!("cannot write report {}: {e}", path.display())))?;
    }
    Ok(())
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn report_table(reports: &[RunReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<9} {:<8} {:<22} {:>10} {:>9} {:>9} {:>11}",
        "method", "head", "architecture", "seconds", "train", "test", "lambda"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<9} {:<8} {:<22} {:>10.3} {:>9} {:>9} {:>11}",
            r.method,
            r.head,
            r.architecture_string(),
            r.total_seconds,
            fmt_acc(r.train_accuracy),
            fmt_acc(r.test_accuracy),
            r.lambda.map(|l| format!("{l:.3e}")).unwrap_or_else(|| "-".into())
        );
        if let Some(e) = &r.error {
            let _ = writeln!(s, "          failed: {e}");
        }
    }
    s
}

fn layer_table(net: &StackedNetwork) -> String {
    let mut s = String::new();
    if let Some(g) = &net.growth {
        let _ = writeln!(
            s,
            "{:>5} {:>6} {:>6} {:>6} {:>11} {:>7} {:>12}",
            "layer", "in", "rank", "width", "recon", "ratio", "id-distance"
        );
        for (i, l) in g.layers.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>5} {:>6} {:>6} {:>6} {:>11.4e} {:>7.4} {:>12.4e}",
                i, l.input_dim, l.input_rank, l.width, l.recon_error, l.rank_ratio, l.identity_distance
            );
        }
        let _ = writeln!(s, "stopped: {:?}", g.stop_reason);
    }
    s
}

pub fn train(args: &TrainArgs, data_dir: &Path) -> CliResult {
    let cfg = train_config(&args.model)?;
    let splits = load_data(&args.data, data_dir)?;
    let (net, outcome) = train_model(&splits.train, &cfg)?;
    let head = net.readout.clone().expect("train_model attaches a head");
    let test_accuracy = match &splits.test {
        Some(t) => Some(evaluate_with(&net, &head, t)?.accuracy),
        None => None,
    };
    save_model(&net, Some(&head), &args.out)?;

    let mut report = pilae_report(&net, &outcome, &splits, cfg.head, test_accuracy);
    report.config = config_echo(&args.model, &args.data);
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.jsonl", args.out.display())));
    let mut line = serde_json::to_value(&report).expect("report serializes");
    if let Some(s) = &outcome.search {
        line["lambda_grid"] = json!(s.evaluated);
    }
    write_reports(Some(&report_path), &[line])?;

    print!("{}", layer_table(&net));
    println!("architecture {}", net.architecture());
    if let Some(s) = &outcome.search {
        println!("lambda estimate {:.4e}", s.lambda_hat);
        for (l, a) in &s.evaluated {
            println!("  lambda {l:.4e}  validation accuracy {a:.4}");
        }
    }
    print!("{}", report_table(&[report]));
    println!("model written to {}", args.out.display());
    Ok(())
}

pub fn eval(args: &EvalArgs, data_dir: &Path) -> CliResult {
    let (net, head) = load_model(&args.model)?;
    let head = head.ok_or_else(|| CliError::Failure("model file has no readout head".into()))?;
    let splits = load_data(&args.data, data_dir)?;
    let data = if args.on_train {
        &splits.train
    } else {
        splits
            .test
            .as_ref()
            .ok_or_else(|| CliError::Usage("no test data; pass --test or --on-train".into()))?
    };
    let ev = evaluate_with(&net, &head, data)?;

    let mut r = RunReport::new("eval", &data.name);
    r.architecture = std::iter::once(net.input_dim().unwrap_or(0))
        .chain(net.widths())
        .chain(std::iter::once(head.classes))
        .collect();
    r.head = head.kind.to_string();
    r.test_accuracy = Some(ev.accuracy);
    r.lambda = head.lambda;
    r.test_split = Some(split_hash(data));
    let mut line = serde_json::to_value(&r).expect("report serializes");
    line["confusion"] = json!(ev.confusion);
    write_reports(args.report.as_deref(), &[line])?;

    println!("accuracy {:.4} on {} samples", ev.accuracy, data.len());
    println!("confusion (rows: true class, columns: predicted)");
    for (i, row) in ev.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        println!("{i:>4} {}", cells.join(""));
    }
    Ok(())
}

pub fn bench(args: &BenchArgs, data_dir: &Path) -> CliResult {
    let mut cfg = train_config(&args.model)?;
    cfg.head = HeadKind::Shln;
    let baseline_cfg = BaselineConfig {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.data.seed,
        ..BaselineConfig::default()
    };
    baseline_cfg
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let splits = load_data(&args.data, data_dir)?;
    let test = splits.test.as_ref();

    let (mut net, outcome) = train_model(&splits.train, &cfg)?;
    let echo = config_echo(&args.model, &args.data);
    let stack_seconds: f64 = outcome.layer_seconds.iter().sum();
    let mut reports = Vec::new();
    let shln = net.readout.clone().expect("head attached");
    let mut r = pilae_report(
        &net,
        &outcome,
        &splits,
        HeadKind::Shln,
        test.map(|t| evaluate_with(&net, &shln, t).map(|e| e.accuracy)).transpose()?,
    );
    r.config = echo.clone();
    reports.push(r);

    let features = transform(&net, &splits.train.x)?;
    let started = std::time::Instant::now();
    let soft_cfg = TrainConfig {
        head: HeadKind::Softmax,
        ..cfg.clone()
    };
    let (soft, _, _) = fit_head(&features, &splits.train.labels, splits.train.classes, &soft_cfg)?;
    let soft_outcome = TrainOutcome {
        head_seconds: started.elapsed().as_secs_f64(),
        total_seconds: stack_seconds + started.elapsed().as_secs_f64(),
        train_accuracy: pilae::readout::accuracy(&soft.predict(&features)?, &splits.train.labels),
        lambda: None,
        search: None,
        layer_seconds: outcome.layer_seconds.clone(),
    };
    net.readout = Some(soft.clone());
    let mut r = pilae_report(
        &net,
        &soft_outcome,
        &splits,
        HeadKind::Softmax,
        test.map(|t| evaluate_with(&net, &soft, t).map(|e| e.accuracy)).transpose()?,
    );
    r.config = echo;
    reports.push(r);

    if !args.skip_baseline {
        let bc = BaselineConfig {
            hidden: net.widths(),
            ..baseline_cfg
        };
        reports.push(baseline_report(&splits.train, test, &bc));
    }

    let mut lines: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| serde_json::to_value(r).expect("report serializes"))
        .collect();
    print!("{}", layer_table(&net));
    print!("{}", report_table(&reports));
    if let Some(base) = reports.iter().find(|r| r.method == "baseline" && r.error.is_none()) {
        println!(
            "pilae stack+shln {:.3} s vs baseline {:.3} s (x{:.1})",
            reports[0].total_seconds,
            base.total_seconds,
            base.total_seconds / reports[0].total_seconds.max(1e-12)
        );
    }

    if !args.scaling.is_empty() {
        let mut sizes = args.scaling.clone();
        sizes.sort_unstable();
        let probe = scaling_probe(&splits.train, &cfg.stack, &sizes)?;
        println!("scaling probe (d = {})", splits.train.dim());
        for p in &probe.points {
            println!("  N {:>7}  {:>9.3} s", p.n, p.seconds);
        }
        for (w, r) in probe.points.windows(2).zip(&probe.ratios) {
            println!("  time({})/time({}) = {r:.2}", w[1].n, w[0].n);
        }
        println!("  empirical exponent {:.2}", probe.exponent);
        lines.push(json!({"method": "scaling", "probe": probe}));
    }
    write_reports(args.report.as_deref(), &lines)?;
    Ok(())
}

pub fn fit_width(args: &FitWidthArgs) -> CliResult {
    let mut records = load_width_records(&args.records)?;
    if records.len() < 5 {
        return Err(CliError::Usage(format!(
            "width regression needs at least 5 records, {} given",
            records.len()
        )));
    }
    if args.n_scale.is_nan() || args.n_scale <= 0.0 {
        return Err(CliError::Usage("--n-scale must be positive".into()));
    }
    for r in &mut records {
        r.n = ((r.n as f64 * args.n_scale).round() as usize).max(1);
    }
    let reg = fit_width_regression_with(&records, args.alpha_fallback).map_err(|e| match e {
        PilaeError::InvalidArgument(m) => CliError::Usage(m),
        e => CliError::Failure(e.to_string()),
    })?;
    println!("theta");
    for (name, t) in pilae::readout::BASIS_NAMES.iter().zip(reg.theta) {
        println!("  {name:<4} {t:.9e}");
    }
    println!("residual {:.6e}", reg.residual);
    if records.len() < 6 {
        println!("leave-one-out skipped: needs at least 6 records");
        return Ok(());
    }
    println!("{:>6} {:>8} {:>7} {:>10} {:>7}  branch", "r", "n", "p*", "P(r,N)", "width");
    for l in leave_one_out(&records, args.alpha_fallback)? {
        println!(
            "{:>6} {:>8} {:>7} {:>10} {:>7}  {}",
            l.record.r,
            l.record.n,
            l.record.p_star,
            l.estimate.predicted,
            l.estimate.width,
            if l.estimate.fallback { "fallback" } else { "regression" }
        );
    }
    Ok(())
}

pub fn sweep(args: &SweepArgs, data_dir: &Path) -> CliResult {
    let cfg = train_config(&args.model)?;
    let param = match args.param {
        SweepTarget::Alpha => SweepParam::Alpha,
        SweepTarget::Beta => SweepParam::Beta,
    };
    if args.values.is_empty() {
        return Err(CliError::Usage("--values is empty".into()));
    }
    for &v in &args.values {
        if !(0.0..=1.0).contains(&v) || (param == SweepParam::Beta && v == 0.0) {
            return Err(CliError::Usage(format!("sweep value {v} out of range")));
        }
    }
    let splits = load_data(&args.data, data_dir)?;
    let rows = sweep_width_param(&splits.train.x, &cfg.stack.layer, param, &args.values)?;
    let name = if param == SweepParam::Alpha { "alpha" } else { "beta" };
    println!("{name:>7} {:>7} {:>13} {:>13}", "width", "recon", "recon-pre-tie");
    for r in &rows {
        println!(
            "{:>7.3} {:>7} {:>13.6e} {:>13.6e}",
            r.value, r.width, r.recon_error, r.recon_error_pre_tie
        );
    }
    Ok(())
}
