//! `curricomp` command-line driver.
//!
//! Settings are resolved as built-in defaults, then the `--config` file,
//! then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use curricomp::config::RunConfig;
use curricomp::data::image::{read_image, resize_bilinear};
use curricomp::data::synthetic::{generate_compound, generate_synthetic, write_dataset, SyntheticConfig};
use curricomp::data::{filter_neutral, load_manifest, BasicClass, CompoundCatalog, Sample};
use curricomp::eval::{compound_targets, constrain_to_compound, evaluate, predict_basic};
use curricomp::nn::{grad_check, Checkpoint, ModelState, Tensor};
use curricomp::sweep::{run_sweep, to_csv, SweepConfig};
use curricomp::train::{run, TrainOptions, BEST_CHECKPOINT, LOG_FILE};

const TABLE1_PRESET: &str = include_str!("../presets/table1.json");
const TABLE2_PRESET: &str = include_str!("../presets/table2.json");

#[derive(Parser)]
#[command(name = "curricomp", version, about = "Curriculum training for compound expression recognition")]
struct Cli {
    /// Random seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel sections. Results are bit-reproducible
    /// for a fixed thread count.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,

    /// JSON config file (a run config, or a sweep config for `sweep`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic glyph dataset as PPM images plus CSV manifests.
    GenData(GenDataArgs),
    /// Train a model with the configured curriculum.
    Train(TrainArgs),
    /// Score a checkpoint on the compound rows of a manifest.
    Eval(EvalArgs),
    /// Print basic-class probabilities and the compound decision for one image.
    Predict(PredictArgs),
    /// Run an ablation sweep and write a CSV table.
    Sweep(SweepArgs),
    /// Compare analytic gradients with central differences.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    n_per_class: u64,
    /// Compound samples per catalog entry, written to `val.csv`.
    #[arg(long, default_value_t = 0)]
    val_per_entry: usize,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Directory image paths are relative to; the manifest's directory by default.
    #[arg(long)]
    image_root: Option<PathBuf>,
    /// Also write the metrics JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    image: PathBuf,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Mixup only, CutMix only, both.
    Table1,
    /// Five curriculum schedules.
    Table2,
}

#[derive(Args)]
struct SweepArgs {
    /// Built-in experiment grid, used when no `--config` is given.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// CSV output path; a `.json` file with per-seed detail is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; overrides the sweep config.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Samples in the probe batch (at most 6).
    #[arg(long, default_value_t = 4)]
    batch: usize,
}

fn load_run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn gen_data(cli: &Cli, args: &GenDataArgs) -> Result<()> {
    let cfg = load_run_config(cli)?;
    let mut syn = cfg.synthetic_data();
    syn.n_per_class = args.n_per_class as usize;
    if let Some(r) = args.resolution {
        syn.resolution = r;
    }
    if let Some(s) = args.noise_sigma {
        syn.noise_sigma = s;
    }
    let basic = generate_synthetic(&syn)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_dataset(&args.out, "train.csv", "basic", &basic)?;
    println!("wrote {} basic images and train.csv to {}", basic.len(), args.out.display());
    if args.val_per_entry > 0 {
        let compound: Vec<Sample> = generate_compound(&syn, &CompoundCatalog::standard(), args.val_per_entry)?
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        write_dataset(&args.out, "val.csv", "compound", &compound)?;
        println!("wrote {} compound images and val.csv", compound.len());
    }
    Ok(())
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut cfg = load_run_config(cli)?;
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    let Some(out_dir) = cfg.output_dir.clone() else {
        bail!("no output directory: pass --out or set output_dir in the config");
    };
    cfg.validate()?;
    let resume = match &args.resume {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    let outcome = run(
        &cfg,
        &TrainOptions {
            output_dir: Some(out_dir.clone()),
            resume,
        },
    )?;
    for r in &outcome.log {
        println!(
            "epoch {:>3}  stage {}  compound {:.2}  loss {:.4}  val macro-F1 {:.4}",
            r.epoch, r.stage, r.compound_proportion, r.mean_loss, r.val_macro_f1
        );
    }
    println!(
        "best val macro-F1 {:.4} at epoch {}; checkpoint {}, log {}",
        outcome.best_macro_f1,
        outcome.best_epoch,
        out_dir.join(BEST_CHECKPOINT).display(),
        out_dir.join(LOG_FILE).display()
    );
    Ok(())
}

fn square_resolution(ckpt: &Checkpoint) -> Result<usize> {
    let [h, w, _] = ckpt.spec.input_dims;
    if h != w {
        bail!("checkpoint input is {h}x{w}; only square inputs are supported");
    }
    Ok(h)
}

fn eval(args: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let root = args
        .image_root
        .clone()
        .or_else(|| args.manifest.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let samples = filter_neutral(load_manifest(&args.manifest, &root, Some(square_resolution(&ckpt)?))?);
    let catalog = CompoundCatalog::standard();
    let eval_set = compound_targets(&samples, &catalog);
    if eval_set.is_empty() {
        bail!("{} has no compound rows to score", args.manifest.display());
    }
    let metrics = evaluate(&ckpt.spec, &ckpt.state, &eval_set, &catalog)?;
    let json = metrics.to_json()?;
    if let Some(out) = &args.out {
        fs::write(out, &json).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{json}");
    for name in metrics.zero_support_classes() {
        log::warn!("class {name} has no samples; its F1 counts as 0");
    }
    Ok(())
}

fn predict(args: &PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let [h, w, _] = ckpt.spec.input_dims;
    let img = resize_bilinear(&read_image(&args.image)?, h, w);
    let p = predict_basic(&ckpt.spec, &ckpt.state, &img)?;
    let catalog = CompoundCatalog::standard();
    let (k, scores) = constrain_to_compound(&p, &catalog);
    let entries = catalog.entries();
    if args.json {
        let basic: serde_json::Map<String, serde_json::Value> = BasicClass::ALL
            .iter()
            .zip(p)
            .map(|(c, v)| (c.name().to_string(), v.into()))
            .collect();
        let compound: serde_json::Map<String, serde_json::Value> = entries
            .iter()
            .zip(&scores)
            .map(|(e, &s)| (e.name.to_string(), s.into()))
            .collect();
        let out = serde_json::json!({
            "basic": basic,
            "compound_scores": compound,
            "prediction": entries[k].name,
            "prediction_index": k,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        for (c, v) in BasicClass::ALL.iter().zip(p) {
            println!("{:<12} {v:.4}", c.name());
        }
        println!();
        for (e, s) in entries.iter().zip(&scores) {
            println!("{:<22} {s:.4}", e.name);
        }
        println!();
        println!("prediction: {}", entries[k].name);
    }
    Ok(())
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<()> {
    let mut cfg: SweepConfig = match (&cli.config, args.preset) {
        (Some(path), _) => SweepConfig::load(path).with_context(|| format!("reading sweep config {}", path.display()))?,
        (None, Some(Preset::Table1)) => serde_json::from_str(TABLE1_PRESET)?,
        (None, Some(Preset::Table2)) => serde_json::from_str(TABLE2_PRESET)?,
        (None, None) => bail!("pass --config or --preset"),
    };
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds.clone();
    } else if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    let rows = run_sweep(&cfg)?;
    let csv = to_csv(&rows)?;
    if let Some(out) = &args.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(out, &csv).with_context(|| format!("writing {}", out.display()))?;
        fs::write(out.with_extension("json"), serde_json::to_string_pretty(&rows)?)?;
    }
    print!("{csv}");
    let failed: usize = rows.iter().map(|r| r.errors.len()).sum();
    if failed > 0 {
        for r in &rows {
            for (seed, e) in &r.errors {
                eprintln!("exp {} seed {seed}: {e}", r.exp);
            }
        }
        bail!("{failed} run(s) failed");
    }
    Ok(())
}

fn grad_check_cmd(cli: &Cli, args: &GradCheckArgs) -> Result<()> {
    let cfg = load_run_config(cli)?;
    let spec = cfg.model_spec()?;
    if !(1..=6).contains(&args.batch) {
        bail!("--batch must be between 1 and 6");
    }
    let syn = SyntheticConfig {
        n_per_class: 1,
        resolution: cfg.resolution.max(16),
        seed: cfg.seed,
        ..SyntheticConfig::default()
    };
    let samples = generate_synthetic(&syn)?;
    let images: Vec<Tensor> = samples
        .iter()
        .take(args.batch)
        .map(|s| resize_bilinear(&s.image, cfg.resolution, cfg.resolution))
        .collect();
    let labels: Vec<f64> = samples
        .iter()
        .take(args.batch)
        .flat_map(|s| s.label.values().to_vec())
        .collect();
    let x = Tensor::stack(images.iter())?;
    let y = Tensor::new(vec![args.batch, curricomp::NUM_BASIC], labels)?;
    let state = ModelState::init(&spec, cfg.seed);
    let report = grad_check(&spec, &state, &x, &y, args.eps, args.tol)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !report.pass {
        bail!(
            "gradient check failed: max relative error {:.3e} > {:.1e}",
            report.max_rel_err,
            args.tol
        );
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads as usize)
        .build_global()
        .context("configuring the thread pool")?;
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Sweep(a) => sweep(cli, a),
        Command::GradCheck(a) => grad_check_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
