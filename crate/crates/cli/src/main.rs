//! `mixlen`: generate synthetic pipeline data, train and evaluate the
//! interval predictor, query the mechanism formulas, verify gradients, and
//! run the benchmark protocol.
//!
//! Exit codes: 0 success, 1 check failure, 2 input error, 3 numerical
//! failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mixlen_core::data::{
    self, generate_synthetic, kfold_split, load_csv, make_batch, read_features_csv,
};
use mixlen_core::error::Error;
use mixlen_core::eval::{
    metrics, run_experiment, variant_model_config, variant_train_config, violation_rate, Limit,
    MetricSet, Variant,
};
use mixlen_core::gradsuite;
use mixlen_core::mechanism::{
    austin_length, critical_reynolds, interval_gap, FlowState, OperationPlan, PipeSpec,
};
use mixlen_core::model::{Checkpoint, ModalityManifest, Provenance, TrainMeta};
use mixlen_core::optim::{train, write_history_csv};
use mixlen_core::tape::Mode;
use mixlen_core::{Model64, Result, Tape64};

use config::{EffectiveConfig, FileConfig, Overrides};

/// Environment variable that redirects relative output paths.
const OUT_DIR_ENV: &str = "MIXLEN_OUT_DIR";

#[derive(Parser)]
#[command(name = "mixlen", version, about = "Pipeline contamination-length interval prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a physics-consistent synthetic dataset (CSV + manifest).
    Generate(GenerateArgs),
    /// Train one model on a fold rotation and write checkpoint + history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a fold's test split.
    Evaluate(EvaluateArgs),
    /// Map feature rows to predicted (lower, upper) limits.
    Predict(PredictArgs),
    /// Evaluate the mechanism formulas from flags.
    Mech(MechArgs),
    /// Run the finite-difference gradient suite; nonzero exit on failure.
    Gradcheck(GradcheckArgs),
    /// Run the benchmark protocol over variants and seeds.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of rows.
    #[arg(long, default_value_t = 350)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise level in [0, 0.5].
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Manifest JSON path (defaults to `<out>.manifest.json`).
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    None,
    NoFusion,
    NoMechanism,
    NoPhysicsLoss,
    Plain,
}

impl Ablation {
    fn variant(self) -> Variant {
        match self {
            Ablation::None => Variant::Full,
            Ablation::NoFusion => Variant::NoModule1,
            Ablation::NoMechanism => Variant::NoModule2,
            Ablation::NoPhysicsLoss => Variant::NoModule3,
            Ablation::Plain => Variant::PlainDnn,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training data CSV.
    #[arg(long)]
    data: PathBuf,
    /// Manifest JSON (defaults to the built-in 16-feature schema).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// JSON config file; flags override it, it overrides built-ins.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "none")]
    ablate: Ablation,
    /// Fold rotation (0..9).
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Loss-history CSV path (defaults to `<out>.history.csv`).
    #[arg(long)]
    history_out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Fold rotation whose test split is evaluated.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    /// Fold shuffle seed (must match the training split).
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Optional JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Feature rows CSV.
    #[arg(long)]
    input: PathBuf,
    /// Prediction CSV output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MechArgs {
    /// Pipe diameter, meters.
    #[arg(long)]
    d: f64,
    /// Pipe length, meters.
    #[arg(long = "len")]
    length: f64,
    /// Reynolds number.
    #[arg(long)]
    re: f64,
    /// Minimum distribution flowrate, m³/h (with --t-delay prints the gap).
    #[arg(long)]
    q_min: Option<f64>,
    /// Delay duration, minutes.
    #[arg(long)]
    t_delay: Option<f64>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = gradsuite::DEFAULT_CASES)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = mixlen_core::gradcheck::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds (runs seeds 0..seeds-1).
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Comma-separated variant list (default: all seven).
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    /// Report JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat per-cell CSV output path.
    #[arg(long)]
    cells_csv: Option<PathBuf>,
    /// Box-plot quartile CSV output path.
    #[arg(long)]
    summary_csv: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Training(_) | Error::Eval(_) => 3,
        _ => 2,
    }
}

/// Relative output paths are redirected by `MIXLEN_OUT_DIR` when set.
fn out_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(path),
        None => path.to_path_buf(),
    }
}

fn load_manifest(path: &Option<PathBuf>) -> Result<ModalityManifest> {
    match path {
        Some(p) => ModalityManifest::parse(&std::fs::read_to_string(p)?),
        None => Ok(data::default_manifest()),
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Train(args) => train_cmd(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Predict(args) => predict(args),
        Command::Mech(args) => mech(args),
        Command::Gradcheck(args) => gradcheck(args),
        Command::Benchmark(args) => benchmark(args),
    }
}

fn generate(args: GenerateArgs) -> Result<ExitCode> {
    let ds = generate_synthetic::<f64>(args.n, args.seed, args.noise)?;
    let gen_cfg = serde_json::json!({ "n": args.n, "seed": args.seed, "noise": args.noise });
    let provenance = Provenance::new(args.seed, &gen_cfg);

    let out = out_path(&args.out);
    ds.save_csv(&out, Some(&provenance))?;
    let manifest_path = out_path(
        &args
            .manifest_out
            .unwrap_or_else(|| args.out.with_extension("manifest.json")),
    );
    std::fs::write(&manifest_path, ds.manifest().to_json_string())?;

    let consistent = ds
        .targets()
        .iter()
        .zip(ds.y_ig())
        .all(|(t, &g)| t[1] - t[0] >= g);
    println!("wrote {} rows to {}", ds.len(), out.display());
    println!("wrote manifest to {}", manifest_path.display());
    println!(
        "interval constraint y_u - y_l >= y_IG satisfied on all rows: {}",
        if consistent { "yes" } else { "NO" }
    );
    Ok(ExitCode::SUCCESS)
}

fn train_cmd(args: TrainArgs) -> Result<ExitCode> {
    let manifest = load_manifest(&args.manifest)?;
    let file_cfg = FileConfig::load(args.config.as_deref())?;
    let effective = EffectiveConfig::resolve(&file_cfg, &args.overrides)?;

    let ds = load_csv::<f64>(&args.data, &manifest)?;
    let (ds, report) = ds.preprocess()?;
    println!(
        "loaded {} rows ({} missing, {} outliers dropped)",
        ds.len(),
        report.missing_dropped,
        report.outlier_dropped
    );

    let plans = kfold_split(ds.len(), effective.split_seed)?;
    if args.fold >= plans.len() {
        return Err(Error::Config(format!(
            "fold {} out of range (0..{})",
            args.fold,
            plans.len() - 1
        )));
    }
    let plan = &plans[args.fold];
    let stats = data::compute_norm_stats(&ds, &plan.train)?;

    let variant = args.ablate.variant();
    let model_cfg =
        variant_model_config(variant, &effective.fusion, &effective.trunk, stats.clone(), args.seed);
    let train_cfg = variant_train_config(variant, &effective.train, args.seed);
    let with_ym = model_cfg.trunk.use_mechanism_node;

    let train_batch = make_batch(&ds, &stats, &plan.train, with_ym)?;
    let val_batch = make_batch(&ds, &stats, &plan.validation, with_ym)?;

    let model = Model64::init(model_cfg, manifest)?;
    let outcome = train(model, &train_batch, &val_batch, &train_cfg)?;

    let provenance = Provenance::new(args.seed, &(&effective, variant, args.fold));
    let meta = TrainMeta {
        epochs: train_cfg.epochs,
        final_train_loss: outcome.history.last().map(|r| r.total),
        final_val_loss: outcome.history.last().map(|r| r.val_total),
        provenance: provenance.clone(),
    };
    let checkpoint = outcome.model.to_checkpoint(meta);
    let out = out_path(&args.out);
    std::fs::write(&out, checkpoint.to_json_string())?;

    let history_path = out_path(
        &args
            .history_out
            .unwrap_or_else(|| args.out.with_extension("history.csv")),
    );
    let file = std::fs::File::create(&history_path)?;
    write_history_csv(std::io::BufWriter::new(file), &outcome.history, &provenance)?;

    if let Some(last) = outcome.history.last() {
        println!(
            "trained {} epochs: total {:.6} (val {:.6})",
            last.epoch, last.total, last.val_total
        );
    }
    println!("wrote checkpoint to {}", out.display());
    println!("wrote history to {}", history_path.display());
    Ok(ExitCode::SUCCESS)
}

fn evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let checkpoint = Checkpoint::from_json_str(&std::fs::read_to_string(&args.checkpoint)?)?;
    let model = Model64::from_checkpoint(&checkpoint)?;

    let ds = load_csv::<f64>(&args.data, model.manifest())?;
    let (ds, _) = ds.preprocess()?;
    let plans = kfold_split(ds.len(), args.split_seed)?;
    if args.fold >= plans.len() {
        return Err(Error::Config(format!(
            "fold {} out of range (0..{})",
            args.fold,
            plans.len() - 1
        )));
    }
    let plan = &plans[args.fold];

    // Standardize with the checkpoint's training statistics, not the data's.
    let stats = model.config().norm_stats.clone();
    let with_ym = model.config().trunk.use_mechanism_node;
    let test_batch = make_batch(&ds, &stats, &plan.test, with_ym)?;
    let preds = test_batch.predict(&model)?;
    let vrate = violation_rate(&preds, &test_batch.y_ig);

    let mut out = serde_json::Map::new();
    out.insert(
        "provenance".into(),
        serde_json::to_value(&checkpoint.meta.provenance)?,
    );
    for (idx, limit) in [(0usize, Limit::Lower), (1usize, Limit::Upper)] {
        let p: Vec<f64> = preds.iter().map(|r| r[idx]).collect();
        let t: Vec<f64> = (0..preds.len())
            .map(|r| test_batch.targets.data()[2 * r + idx])
            .collect();
        let acc = metrics(&p, &t)?;
        let set = MetricSet::from_parts(acc, vrate);
        out.insert(limit.to_string(), serde_json::to_value(set)?);
    }
    let doc = serde_json::Value::Object(out);
    let text = serde_json::to_string_pretty(&doc)?;
    println!("{text}");
    if let Some(path) = args.out {
        std::fs::write(out_path(&path), text)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn predict(args: PredictArgs) -> Result<ExitCode> {
    let checkpoint = Checkpoint::from_json_str(&std::fs::read_to_string(&args.checkpoint)?)?;
    let model = Model64::from_checkpoint(&checkpoint)?;
    let file = std::fs::File::open(&args.input)?;
    let table = read_features_csv::<f64, _>(std::io::BufReader::new(file), model.manifest())?;

    let features = table.standardized(&model.config().norm_stats)?;
    let ym = if model.config().trunk.use_mechanism_node {
        Some(table.austin_lengths()?)
    } else {
        None
    };
    let mut tape = Tape64::new(0);
    let bound = model.bind(&mut tape);
    let pred = model.forward(&mut tape, &bound, &features, ym.as_deref(), Mode::Eval)?;
    let values = tape.value(pred);

    let out = out_path(&args.out);
    let mut text = String::new();
    text.push_str(&checkpoint.meta.provenance.comment_line());
    text.push('\n');
    text.push_str("y_l_pred,y_u_pred\n");
    for r in 0..table.rows() {
        text.push_str(&format!(
            "{},{}\n",
            values.data()[2 * r],
            values.data()[2 * r + 1]
        ));
    }
    std::fs::write(&out, text)?;
    println!("wrote {} predictions to {}", table.rows(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn mech(args: MechArgs) -> Result<ExitCode> {
    let pipe = PipeSpec::new(args.d, args.length)?;
    let flow = FlowState::new(args.re)?;
    let re_j: f64 = critical_reynolds(&pipe);
    let y_m = austin_length(&pipe, &flow);
    let branch = if args.re >= re_j { "turbulent" } else { "laminar" };
    println!("re_j = {re_j}");
    println!("y_m = {y_m}  ({branch} branch)");
    match (args.q_min, args.t_delay) {
        (Some(q), Some(t)) => {
            let gap = interval_gap(&OperationPlan::new(q, t)?);
            println!("y_ig = {gap}");
        }
        (None, None) => {}
        _ => {
            return Err(Error::Config(
                "--q-min and --t-delay must be given together".into(),
            ))
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let report = gradsuite::run_suite::<f64>(args.cases, args.seed, args.tol)?;
    for section in &report.sections {
        println!(
            "{:<28} cases {:>4}  elements {:>6}  max rel err {:.3e}  {}",
            section.name,
            section.cases,
            section.checked_elements,
            section.max_rel_err,
            if section.max_rel_err <= report.tol {
                "ok"
            } else {
                "FAIL"
            }
        );
    }
    println!(
        "total: {} cases, max rel err {:.3e} (tol {:.1e})",
        report.total_cases,
        report.max_rel_err(),
        report.tol
    );
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        println!("gradient check FAILED");
        Ok(ExitCode::from(1))
    }
}

fn benchmark(args: BenchmarkArgs) -> Result<ExitCode> {
    let manifest = load_manifest(&args.manifest)?;
    let file_cfg = FileConfig::load(args.config.as_deref())?;
    let effective = EffectiveConfig::resolve(&file_cfg, &args.overrides)?;

    let ds = load_csv::<f64>(&args.data, &manifest)?;
    let (ds, _) = ds.preprocess()?;

    let variants = if args.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        args.variants
            .iter()
            .map(|s| Variant::from_str(s))
            .collect::<Result<Vec<_>>>()?
    };
    let cfg = mixlen_core::eval::ExperimentConfig {
        train: effective.train.clone(),
        fusion: effective.fusion.clone(),
        trunk: effective.trunk.clone(),
        variants,
        seeds: (0..args.seeds as u64).collect(),
        knn_k: effective.knn_k,
        split_seed: effective.split_seed,
    };
    let report = run_experiment(&ds, &cfg)?;

    for &variant in &cfg.variants {
        for limit in [Limit::Lower, Limit::Upper] {
            let rmse = report.median(variant, limit, "rmse");
            let viol = report.median(variant, limit, "violation_rate");
            println!(
                "{variant:<11} {limit}: median rmse {}  median violation_rate {}",
                rmse.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
                viol.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            );
        }
    }
    if let Some(path) = args.out {
        std::fs::write(out_path(&path), report.to_json_string())?;
    }
    if let Some(path) = args.cells_csv {
        let file = std::fs::File::create(out_path(&path))?;
        report.write_cells_csv(std::io::BufWriter::new(file))?;
    }
    if let Some(path) = args.summary_csv {
        let file = std::fs::File::create(out_path(&path))?;
        report.write_summary_csv(std::io::BufWriter::new(file))?;
    }
    Ok(ExitCode::SUCCESS)
}
