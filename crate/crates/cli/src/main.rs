//! `msda`: simulate, fit, predict and plot from the command line.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! run fails after the configuration was accepted.

mod config;
mod dataset;
mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use msda::ensemble::{fit_target_ensemble, predict_ensemble, EnsembleModel, Scheme};
use msda::sim::{read_results_csv, run_experiment, write_results_csv, Convention, Method, Scenario};
use serde::{Deserialize, Serialize};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "msda", version, about = "Domain adaptation for regression under target shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation study and write per-replicate log RMSE ratios.
    Simulate(SimulateArgs),
    /// Fit a target ensemble from labeled source CSVs and an unlabeled target CSV.
    Fit(FitArgs),
    /// Apply a fitted model to a feature CSV.
    Predict(PredictArgs),
    /// Draw a boxplot of the log ratios in a results CSV.
    Plot(PlotArgs),
}

/// Overrides shared by the commands that train models.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML configuration file; flags below take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Adversarial weight λ.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Outer iterations T.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Band half-width ε on the weight normalization.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Spline knots J.
    #[arg(long)]
    knots: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Study heterogeneity σ (msda-hier).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    num_sources: Option<usize>,
    /// Rows per domain.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated methods; merged_ols is always added as the reference.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Outcome categories L for every weight estimate.
    #[arg(long)]
    categories: Option<usize>,
    /// Whether N(a, b) in the scenarios means sd (`sd`) or variance (`variance`).
    #[arg(long, value_parser = parse_convention)]
    convention: Option<Convention>,
    /// Run replicates one after another.
    #[arg(long)]
    serial: bool,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Labeled source CSV; repeat once per source domain.
    #[arg(long = "source", required = true)]
    sources: Vec<PathBuf>,
    /// Target feature CSV.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Outcome categories L.
    #[arg(long)]
    categories: Option<usize>,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV with the same columns the model was fitted on.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Results CSV written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "plot.svg")]
    out: PathBuf,
}

fn parse_convention(s: &str) -> Result<Convention, String> {
    match s {
        "sd" => Ok(Convention::Sd),
        "variance" => Ok(Convention::Variance),
        other => Err(format!("unknown convention `{other}` (expected sd or variance)")),
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Fitted model plus everything needed to reproduce it.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    config: RunConfig,
    sources: Vec<String>,
    target: String,
    feature_names: Vec<String>,
    model: EnsembleModel,
}

const MODEL_FORMAT: &str = "msda-model/1";

fn resolve(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(common.config.as_deref()).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.lambda {
        cfg.adv.lambda = v;
    }
    if let Some(v) = common.epochs {
        cfg.adv.epochs = v;
    }
    if let Some(v) = common.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = common.epsilon {
        cfg.bbse.epsilon = v;
    }
    if let Some(v) = common.knots {
        cfg.bbse.num_knots = v;
    }
    Ok(cfg)
}

fn validated(cfg: RunConfig) -> Result<RunConfig, Failure> {
    cfg.validate().map_err(|e| Failure::Config(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

/// Writes `bytes` only once the whole artifact is ready.
fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = resolve(&args.common)?;
    let sim = &mut cfg.simulate;
    if let Some(v) = args.scenario {
        sim.scenario = v;
    }
    if let Some(v) = args.sigma {
        sim.sigma = v;
    }
    if let Some(v) = args.num_sources {
        sim.num_sources = v;
    }
    if let Some(v) = args.n {
        sim.n = v;
    }
    if let Some(v) = args.replicates {
        sim.replicates = v;
    }
    if let Some(v) = args.methods {
        sim.methods = v;
    }
    if let Some(v) = args.categories {
        sim.num_categories = v;
    }
    if let Some(v) = args.convention {
        sim.convention = v;
    }
    if args.serial {
        sim.parallel = false;
    }
    let cfg = validated(cfg)?;
    let exp = cfg.experiment();
    info!("running {} replicates of {}", exp.replicates, exp.scenario.scenario);
    let res = run_experiment(&exp).map_err(runtime)?;

    let mut buf = Vec::new();
    write_results_csv(&mut buf, &res.rows, &cfg.to_json()).map_err(runtime)?;
    write_file(&args.out, &buf)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:+.4}"));
    let _ = writeln!(
        out,
        "{:<14} {:>5} {:>6} {:>9} {:>9} {:>9} {:>8}",
        "method", "ok", "failed", "median", "q25", "q75", "iqr"
    );
    for s in res.summary() {
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>6} {:>9} {:>9} {:>9} {:>8}",
            s.method,
            s.replicates - s.failures,
            s.failures,
            fmt(s.median),
            fmt(s.q25),
            fmt(s.q75),
            s.iqr().map_or_else(|| "-".to_string(), |x| format!("{x:.4}")),
        );
    }
    let method_reads: usize = res.audits.iter().map(|a| a.by_methods).sum();
    let _ = writeln!(
        out,
        "label audit: {} target-outcome reads by methods, {} by the evaluator ({})",
        method_reads,
        res.audits.iter().map(|a| a.by_evaluator).sum::<usize>(),
        if res.audit_clean() { "clean" } else { "VIOLATION" }
    );
    let _ = writeln!(out, "wrote {}", args.out.display());
    if !res.audit_clean() {
        return Err(Failure::Runtime("methods read target outcomes".into()));
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<(), Failure> {
    let mut cfg = resolve(&args.common)?;
    if let Some(v) = args.scheme {
        cfg.scheme = v;
    }
    if let Some(v) = args.categories {
        cfg.bbse.num_categories = Some(v);
    }
    let cfg = validated(cfg)?;

    let mut names: Option<Vec<String>> = None;
    let mut check_names = |path: &Path, cols: Vec<String>| -> Result<(), Failure> {
        match &names {
            None => names = Some(cols),
            Some(n) if *n != cols => {
                return Err(Failure::Runtime(format!(
                    "{}: feature columns [{}] differ from [{}]",
                    path.display(),
                    cols.join(", "),
                    n.join(", ")
                )))
            }
            _ => {}
        }
        Ok(())
    };
    let mut sources = Vec::new();
    for p in &args.sources {
        let (cols, d) = dataset::load_source(p).map_err(Failure::Runtime)?;
        check_names(p, cols)?;
        sources.push(d);
    }
    let (cols, target) = dataset::load_features(&args.target).map_err(Failure::Runtime)?;
    check_names(&args.target, cols)?;

    let model = fit_target_ensemble(&sources, &target, cfg.scheme, &cfg.ensemble()).map_err(runtime)?;
    for d in &model.diagnostics {
        log::warn!("{d}");
    }
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        config: cfg,
        sources: args.sources.iter().map(|p| p.display().to_string()).collect(),
        target: args.target.display().to_string(),
        feature_names: names.unwrap_or_default(),
        model,
    };
    let json = serde_json::to_string_pretty(&file).map_err(runtime)?;
    write_file(&args.out, format!("{json}\n").as_bytes())?;
    println!("weights {}  (scheme {:?}, gamma {:?})", file.model.weights, file.model.scheme, file.model.gamma);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn predict(args: PredictArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", args.model.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Runtime(format!("{}: not a model file: {e}", args.model.display())))?;
    if file.format != MODEL_FORMAT {
        return Err(Failure::Runtime(format!("{}: unsupported model format `{}`", args.model.display(), file.format)));
    }
    let (cols, x) = dataset::load_features(&args.input).map_err(Failure::Runtime)?;
    if cols.len() != file.feature_names.len() {
        return Err(Failure::Runtime(format!(
            "{}: model expects {} feature columns, found {}",
            args.input.display(),
            file.feature_names.len(),
            cols.len()
        )));
    }
    if cols != file.feature_names {
        log::warn!("feature names [{}] differ from the fitted [{}]", cols.join(", "), file.feature_names.join(", "));
    }
    let pred = predict_ensemble(&file.model, x.x()).map_err(runtime)?;
    let provenance = serde_json::json!({ "model": args.model.display().to_string(), "config": file.config });
    let mut buf = Vec::new();
    dataset::write_predictions(&mut buf, pred.view(), &provenance.to_string()).map_err(runtime)?;
    write_file(&args.out, &buf)?;
    Ok(())
}

fn plot(args: PlotArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", args.input.display())))?;
    let provenance = text.lines().next().and_then(|l| l.strip_prefix("# config: ")).unwrap_or("{}");
    let rows =
        read_results_csv(text.as_bytes()).map_err(|e| Failure::Runtime(format!("{}: {e}", args.input.display())))?;
    let svg = plot::render_svg(&plot::box_stats(&rows), provenance)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", args.input.display())))?;
    write_file(&args.out, svg.as_bytes())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(m) | Failure::Runtime(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
