//! `interp3d`: generate synthetic corpora, train and fine-tune networks, run the
//! optimization baseline, evaluate, export wireframes and plot curves.

mod plot;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use interp3d::dataset::{write_atomic, Dataset};
use interp3d::eval::{self, Method, Predictor};
use interp3d::fit::{fit_from_heatmaps, Descent, FitConfig};
use interp3d::net::{self, TrainConfig, TrainReport, WeightsFile};
use interp3d::skeleton::compose_skeleton;
use interp3d::synth::generate_dataset;
use interp3d::wireframe::write_obj;
use interp3d::{load_base_shapes, BaseShapeSet, ParamVector, SamplerConfig, StructuralParams};

#[derive(Debug, Parser, Serialize)]
#[command(name = "interp3d", version, about = "3D skeleton recovery from keypoint heatmaps")]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for data generation and evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Skeleton model: a JSON file or a bundled name (`chair`, `car`).
    #[arg(long, global = true, default_value = "chair")]
    model: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Generate a synthetic dataset file.
    Gen(GenArgs),
    /// Train the interpreter, the heatmap refiner, or fine-tune through the projection.
    Train(TrainArgs),
    /// Run the optimization baseline on every sample of a dataset.
    Fit(FitArgs),
    /// Score the baseline and/or the interpreter.
    Eval(EvalArgs),
    /// Write the composed skeleton as a wireframe OBJ.
    ExportObj(ExportArgs),
    /// Render curve files as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long)]
    out: PathBuf,
    /// JSON file with sampler settings; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Salt-and-pepper level baked into the heatmaps.
    #[arg(long)]
    noise: Option<f64>,
    /// Upper end of the inverse focal length range.
    #[arg(long)]
    inv_f_max: Option<f64>,
    /// Keypoint perturbation as a fraction of the diagonal.
    #[arg(long)]
    perturbation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum Stage {
    Interp,
    Refine,
    Finetune,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long, value_enum)]
    stage: Stage,
    /// Training dataset (interp, refine).
    #[arg(long)]
    data: Option<PathBuf>,
    /// 2D-only dataset for fine-tuning; only heatmaps and 2D keypoints are read.
    #[arg(long)]
    data2d: Option<PathBuf>,
    /// Interpreter weights to fine-tune.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Refiner weights; the interpreter then trains on refined heatmaps.
    #[arg(long)]
    refiner: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss CSV (default: `<out>.loss.csv`).
    #[arg(long)]
    loss_log: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    noise_levels: Option<Vec<f64>>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Use the large layer widths instead of the desk-scale defaults.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum DescentArg {
    Lm,
    Gd,
}

#[derive(Debug, Args, Serialize)]
struct FitFlags {
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, value_enum, default_value = "lm")]
    descent: DescentArg,
}

impl FitFlags {
    fn config(&self, seed: u64) -> FitConfig {
        FitConfig {
            restarts: self.restarts,
            max_iters: self.max_iters,
            descent: match self.descent {
                DescentArg::Lm => Descent::LevenbergMarquardt,
                DescentArg::Gd => Descent::GradientDescent,
            },
            seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Salt-and-pepper level applied before fitting.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Evaluate the optimization baseline.
    #[arg(long)]
    fit: bool,
    /// Evaluate the interpreter (requires --weights).
    #[arg(long)]
    net: bool,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Refiner applied to heatmaps before either method.
    #[arg(long)]
    refiner: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Also run the noise sweep over these levels (needs both methods).
    #[arg(long, value_delimiter = ',')]
    noise_levels: Option<Vec<f64>>,
    /// Output prefix; files are `<out>.report.csv`, `<out>.curve.csv`, ...
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    fit_flags: FitFlags,
}

#[derive(Debug, Args, Serialize)]
struct ExportArgs {
    /// Free structural weights; default is the mean shape.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["params", "data"])]
    alpha: Option<Vec<f64>>,
    /// A full comma-separated parameter vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "data")]
    params: Option<Vec<f64>>,
    /// Take the ground-truth parameters of a dataset sample.
    #[arg(long, requires = "index")]
    data: Option<PathBuf>,
    #[arg(long)]
    index: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PlotArgs {
    #[arg(required = true)]
    curves: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "")]
    title: String,
}

enum CliError {
    Usage(String),
    Run(String),
}

impl From<interp3d::Error> for CliError {
    fn from(e: interp3d::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: serde_json::Value,
    seed: u64,
    inputs: Vec<String>,
    outputs: Vec<String>,
    tool_version: &'static str,
    wall_clock_seconds: f64,
}

struct Run<'a> {
    cli: &'a Cli,
    name: &'static str,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    resolved: serde_json::Map<String, serde_json::Value>,
}

impl Run<'_> {
    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        write_atomic(path, |w| Ok(w.write_all(bytes)?))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn resolve(&mut self, key: &str, value: String) {
        self.resolved.insert(key.into(), serde_json::Value::String(value));
    }

    /// Writes `<first output>.manifest.json`.
    fn finish(self) -> CliResult<()> {
        let Some(primary) = self.outputs.first() else {
            return Ok(());
        };
        let mut config = serde_json::to_value(self.cli).map_err(|e| CliError::Run(e.to_string()))?;
        if let serde_json::Value::Object(m) = &mut config {
            m.insert("resolved".into(), serde_json::Value::Object(self.resolved.clone()));
        }
        let manifest = RunManifest {
            command: self.name,
            config,
            seed: self.cli.seed,
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = sibling(primary, "manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Run(e.to_string()))?;
        write_atomic(&path, |w| Ok(w.write_all(text.as_bytes())?))?;
        Ok(())
    }
}

/// `dir/name.ext` → `dir/name.ext.<suffix>`
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn load_model(spec: &str) -> CliResult<BaseShapeSet> {
    let path = Path::new(spec);
    if path.is_file() {
        return Ok(load_base_shapes(path)?);
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    BaseShapeSet::bundled(name)
        .map_err(|_| CliError::Run(format!("model `{spec}` is neither a readable file nor a bundled model")))
}

fn load_dataset(path: &Path, bases: &BaseShapeSet, limit: Option<usize>) -> CliResult<Dataset> {
    let mut ds = Dataset::load(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    ds.check_model(bases)?;
    if let Some(n) = limit {
        ds.samples.truncate(n);
    }
    if ds.is_empty() {
        return Err(CliError::Run(format!("{}: dataset is empty", path.display())));
    }
    Ok(ds)
}

fn load_weights(path: &Path) -> CliResult<WeightsFile> {
    WeightsFile::load(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

fn cmd_gen(run: &mut Run, args: &GenArgs, bases: &BaseShapeSet) -> CliResult<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            run.input(p);
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str::<SamplerConfig>(&text)
                .map_err(|e| CliError::Run(format!("{}: {e}", p.display())))?
        }
        None => SamplerConfig::default(),
    };
    cfg.seed = run.cli.seed;
    if let Some(p) = args.noise {
        cfg.noise = p;
    }
    if let Some(m) = args.inv_f_max {
        cfg.inv_f.hi = m;
    }
    if let Some(r) = args.perturbation {
        cfg.perturbation = r;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let samples = generate_dataset(&cfg, bases, args.count as usize)?;
    let ds = Dataset::new(bases, cfg.clone(), samples);
    let mut bytes = Vec::new();
    ds.write_to(&mut bytes)?;
    run.resolve("sampler", serde_json::to_string(&cfg).unwrap_or_default());
    run.write(&args.out, &bytes)?;
    println!("wrote {} samples to {}", ds.len(), args.out.display());
    Ok(())
}

fn loss_log(report: &TrainReport) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,skipped\n");
    for (e, t) in report.train_loss.iter().enumerate() {
        let v = report.val_loss.get(e).map_or(String::new(), |v| format!("{v:.9e}"));
        let k = report.skipped.get(e).map_or(String::new(), |k| k.to_string());
        s.push_str(&format!("{e},{t:.9e},{v},{k}\n"));
    }
    s
}

fn train_config(args: &TrainArgs, seed: u64) -> CliResult<TrainConfig> {
    let mut cfg = match (args.stage, args.paper_scale) {
        (Stage::Interp, false) => TrainConfig::interpreter(),
        (Stage::Interp, true) => TrainConfig::interpreter_paper_scale(),
        (Stage::Refine, false) => TrainConfig::refiner(),
        (Stage::Refine, true) => TrainConfig::refiner_paper_scale(),
        (Stage::Finetune, _) => TrainConfig::finetune(),
    };
    cfg.seed = seed;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(h) = &args.hidden {
        cfg.hidden = h.clone();
    }
    if let Some(n) = &args.noise_levels {
        cfg.noise_levels = n.clone();
    }
    if let Some(v) = args.validation_fraction {
        cfg.validation_fraction = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_train(run: &mut Run, args: &TrainArgs, bases: &BaseShapeSet) -> CliResult<()> {
    let cfg = train_config(args, run.cli.seed)?;
    let require = |p: &Option<PathBuf>, flag: &str| {
        p.clone()
            .ok_or_else(|| CliError::Usage(format!("--stage {:?} requires {flag}", args.stage).to_lowercase()))
    };
    let (weights, report) = match args.stage {
        Stage::Interp => {
            let data = require(&args.data, "--data")?;
            let refiner = match &args.refiner {
                Some(p) => {
                    run.input(p);
                    Some(load_weights(p)?.into_refiner(bases)?)
                }
                None => None,
            };
            run.input(&data);
            let ds = load_dataset(&data, bases, None)?;
            let (model, report) = net::train_interpreter(&ds.samples, &cfg, refiner.as_ref())?;
            (WeightsFile::from_interpreter(&model, bases), report)
        }
        Stage::Refine => {
            let data = require(&args.data, "--data")?;
            run.input(&data);
            let ds = load_dataset(&data, bases, None)?;
            let (model, report) = net::train_refiner(&ds.samples, &cfg)?;
            (WeightsFile::from_refiner(&model, bases), report)
        }
        Stage::Finetune => {
            let prior = require(&args.weights, "--weights")?;
            let data2d = require(&args.data2d, "--data2d")?;
            run.input(&prior);
            run.input(&data2d);
            let model = load_weights(&prior)?.into_interpreter(bases)?;
            let ds = load_dataset(&data2d, bases, None)?;
            let (model, report) = net::finetune_through_projection(&model, &ds.samples, bases, &cfg)?;
            (WeightsFile::from_interpreter(&model, bases), report)
        }
    };
    run.resolve("train", format!("{cfg:?}"));
    let mut bytes = Vec::new();
    weights.write_to(&mut bytes)?;
    run.write(&args.out, &bytes)?;
    let log_path = args.loss_log.clone().unwrap_or_else(|| sibling(&args.out, "loss.csv"));
    run.write(&log_path, loss_log(&report).as_bytes())?;
    println!(
        "trained {} epochs; kept epoch {}; final train loss {:.6e}",
        report.train_loss.len(),
        report.best_epoch,
        report.train_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_fit(run: &mut Run, args: &FitArgs, bases: &BaseShapeSet) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(CliError::Usage(format!("--noise {} outside [0, 1]", args.noise)));
    }
    let cfg = args.fit.config(run.cli.seed);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    run.input(&args.data);
    let ds = load_dataset(&args.data, bases, args.limit)?;
    use rayon::prelude::*;
    let rows = ds
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let h = eval::corrupt_for_eval(&s.heatmaps, args.noise, run.cli.seed, i);
            let r = fit_from_heatmaps(&h, bases, &cfg)?;
            let e = eval::score(&r.s_hat, s, bases)?;
            let params: Vec<String> = r.s_hat.to_vec().iter().map(|v| format!("{v:.9}")).collect();
            Ok(format!(
                "{i},{},{:.9e},{},{:.9},{:.9},{:.9}\n",
                params.join(","),
                r.final_cost,
                r.converged,
                e.rmse_3d,
                e.azimuth_deg,
                e.reproj_2d
            ))
        })
        .collect::<interp3d::Result<Vec<String>>>()?;
    let mut out = format!(
        "index,{},final_cost,converged,rmse_3d,azimuth_deg,reproj_2d\n",
        ParamVector::component_names(bases.num_bases()).join(",")
    );
    out.extend(rows);
    run.resolve("fit", format!("{cfg:?}"));
    run.write(&args.out, out.as_bytes())?;
    println!("fitted {} samples", ds.len());
    Ok(())
}

fn cmd_eval(run: &mut Run, args: &EvalArgs, bases: &BaseShapeSet) -> CliResult<()> {
    if !args.fit && !args.net {
        return Err(CliError::Usage("select at least one method with --fit and/or --net".into()));
    }
    if args.net && args.weights.is_none() {
        return Err(CliError::Usage("--net requires --weights".into()));
    }
    if args.noise_levels.is_some() && !(args.fit && args.net) {
        return Err(CliError::Usage("--noise-levels compares both methods; pass --fit and --net".into()));
    }
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(CliError::Usage(format!("--noise {} outside [0, 1]", args.noise)));
    }
    let fit_cfg = args.fit_flags.config(run.cli.seed);
    fit_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    run.input(&args.data);
    let ds = load_dataset(&args.data, bases, args.limit)?;
    let model = match &args.weights {
        Some(p) if args.net => {
            run.input(p);
            Some(load_weights(p)?.into_interpreter(bases)?)
        }
        _ => None,
    };
    let refiner = match &args.refiner {
        Some(p) => {
            run.input(p);
            Some(load_weights(p)?.into_refiner(bases)?)
        }
        None => None,
    };

    let mut predictors = Vec::new();
    if args.fit {
        predictors.push(Predictor::Fit(&fit_cfg));
    }
    if let Some(m) = &model {
        predictors.push(Predictor::Net(m));
    }
    let mut reports = Vec::new();
    for p in predictors {
        reports.push(eval::evaluate(&ds.samples, bases, p, refiner.as_ref(), args.noise, run.cli.seed)?);
    }

    let mut report_csv = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        r.write_csv(&mut report_csv, i == 0)?;
    }
    let rmse: Vec<(&str, &eval::RecallCurve)> = reports.iter().map(|r| (r.method.name(), &r.rmse_curve)).collect();
    let az: Vec<(&str, &eval::RecallCurve)> = reports.iter().map(|r| (r.method.name(), &r.azimuth_curve)).collect();
    let mut curve = Vec::new();
    eval::write_curves_csv(&mut curve, "threshold", &rmse)?;
    let mut az_curve = Vec::new();
    eval::write_curves_csv(&mut az_curve, "threshold", &az)?;
    run.resolve("fit", format!("{fit_cfg:?}"));
    run.write(&sibling(&args.out, "report.csv"), &report_csv)?;
    run.write(&sibling(&args.out, "curve.csv"), &curve)?;
    run.write(&sibling(&args.out, "azimuth.csv"), &az_curve)?;
    for r in &reports {
        println!(
            "average recall ({}): {:.4}  mean 3D RMSE {:.4}  mean azimuth error {:.2} deg",
            r.method.name(),
            r.rmse_curve.average_recall,
            r.mean_rmse_3d(),
            r.mean_azimuth_deg()
        );
    }

    if let (Some(levels), Some(m)) = (&args.noise_levels, &model) {
        let sweep = eval::noise_sweep(&ds.samples, bases, &fit_cfg, m, levels, run.cli.seed)
            .map_err(|e| match e {
                interp3d::Error::InvalidConfig(s) => CliError::Usage(s),
                other => other.into(),
            })?;
        let mut table = Vec::new();
        sweep.write_csv(&mut table)?;
        let mut plot = Vec::new();
        sweep.write_plot_csv(&mut plot)?;
        run.write(&sibling(&args.out, "noise.csv"), &table)?;
        run.write(&sibling(&args.out, "noise_plot.csv"), &plot)?;
        println!("{:>6}  {:>12}  {:>12}", "noise", "fit RMSE", "net RMSE");
        for &p in levels {
            let get = |method| sweep.row(p, method).map_or(f64::NAN, |r| r.mean_rmse_3d);
            println!("{p:>6}  {:>12.4}  {:>12.4}", get(Method::Fit), get(Method::Net));
        }
        for v in &sweep.violations {
            println!("monotonicity violation: {v}");
        }
    }
    Ok(())
}

fn cmd_export(run: &mut Run, args: &ExportArgs, bases: &BaseShapeSet) -> CliResult<()> {
    let k = bases.num_bases();
    let alpha = if let Some(a) = &args.alpha {
        if a.len() != k - 1 {
            return Err(CliError::Run(format!("--alpha needs {} values, got {}", k - 1, a.len())));
        }
        StructuralParams::from_free(a)
    } else if let Some(p) = &args.params {
        ParamVector::from_slice(p, k)?.decode()?.0
    } else if let Some(d) = &args.data {
        run.input(d);
        let ds = load_dataset(d, bases, None)?;
        let i = args.index.unwrap_or(0);
        let s = ds
            .samples
            .get(i)
            .ok_or_else(|| CliError::Run(format!("index {i} out of range for {} samples", ds.len())))?;
        s.s_true.decode()?.0
    } else {
        StructuralParams::mean(k)
    };
    if alpha.alpha().iter().any(|a| !a.is_finite()) {
        return Err(CliError::Run("structural weights must be finite".into()));
    }
    let shape = compose_skeleton(&alpha, bases)?;
    let mut bytes = Vec::new();
    write_obj(&mut bytes, &shape, &bases.spec)?;
    run.write(&args.out, &bytes)?;
    println!("wrote {} vertices and {} lines to {}", shape.num_keypoints(), bases.spec.edges.len(), args.out.display());
    Ok(())
}

fn cmd_plot(run: &mut Run, args: &PlotArgs) -> CliResult<()> {
    let mut curves = Vec::new();
    for p in &args.curves {
        run.input(p);
        let c = plot::parse_curve_file(p).map_err(CliError::Run)?;
        let label = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        curves.push((label, c));
    }
    let svg = plot::render_svg(&curves, &args.title);
    run.write(&args.out, svg.as_bytes())?;
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Run(e.to_string()))?;
    }
    let name = match &cli.command {
        Command::Gen(_) => "gen",
        Command::Train(_) => "train",
        Command::Fit(_) => "fit",
        Command::Eval(_) => "eval",
        Command::ExportObj(_) => "export-obj",
        Command::Plot(_) => "plot",
    };
    let mut run = Run {
        cli,
        name,
        started: Instant::now(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        resolved: serde_json::Map::new(),
    };
    match &cli.command {
        Command::Plot(a) => cmd_plot(&mut run, a)?,
        other => {
            let bases = load_model(&cli.model)?;
            match other {
                Command::Gen(a) => cmd_gen(&mut run, a, &bases)?,
                Command::Train(a) => cmd_train(&mut run, a, &bases)?,
                Command::Fit(a) => cmd_fit(&mut run, a, &bases)?,
                Command::Eval(a) => cmd_eval(&mut run, a, &bases)?,
                Command::ExportObj(a) => cmd_export(&mut run, a, &bases)?,
                Command::Plot(_) => unreachable!(),
            }
        }
    }
    run.finish()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
