//! Command-line interface: one binary, six subcommands, reproducible runs.
//!
//! Flags override values from an optional key=value config file; every
//! writing run records its fully resolved configuration in `run.lock` under
//! the output directory. Exit codes: 0 success, 2 config, 3 I/O/format,
//! 4 numeric.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use octoseg_core::metrics::DEFAULT_THRESHOLD;
use octoseg_core::model::ModelKind;
use octoseg_core::scene::AugOp;

use crate::bench::BenchSpec;
use crate::error::{io_err, AppError, Result};
use crate::gendata::{self, GenConfig, Task};
use crate::trainer::{self, config_hash, ensure_dir, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "octoseg", version, about = "Octave-convolution document segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate a synthetic dataset with train/val manifests
    GenData(GenDataArgs),
    /// Train a model on generated manifests
    Train(TrainArgs),
    /// Evaluate a checkpoint over a manifest
    Eval(EvalArgs),
    /// Run inference on image files, writing mask PNGs
    Infer(InferArgs),
    /// Report parameters, MACs, and checkpoint size for model configurations
    Inspect(InspectArgs),
    /// Time per-image inference across models and input sizes
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// boundary (documents on a background) or text (text regions on a page)
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    /// Square canvas size in pixels
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Train/val ratio, e.g. 0.75,0.25
    #[arg(long)]
    split: Option<String>,
    /// Comma-separated augmentation ops applied to every scene
    #[arg(long)]
    augment: Option<String>,
    #[arg(long)]
    min_docs: Option<usize>,
    #[arg(long)]
    max_docs: Option<usize>,
    /// Occluding patches also clear covered mask pixels
    #[arg(long, action = clap::ArgAction::SetTrue)]
    occlusion_erases_mask: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// octhu or unet
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    scale: Option<u32>,
    #[arg(long)]
    input_size: Option<usize>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset directory containing train.tsv and val.tsv
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    val_manifest: Option<PathBuf>,
    /// Extra checkpoint snapshot every N epochs
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input image(s), 8-bit grayscale PNG sized to the model input
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    scale: Option<u32>,
    #[arg(long)]
    input_size: Option<usize>,
    /// Compare two specs, e.g. --compare octhu:16 unet:64
    #[arg(long, num_args = 2)]
    compare: Option<Vec<String>>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated model specs, e.g. octhu:16,unet:64
    #[arg(long)]
    models: Option<String>,
    /// Comma-separated input sizes
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for bench.csv (table also goes to stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// key=value config file; flags override file values.
struct FileCfg {
    map: BTreeMap<String, String>,
}

impl FileCfg {
    fn load(path: Option<&PathBuf>) -> Result<FileCfg> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(AppError::Config(format!(
                        "{}: line {}: expected key=value",
                        path.display(),
                        i + 1
                    )));
                };
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(FileCfg { map })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                AppError::Config(format!("config key '{key}': cannot parse '{v}'"))
            }),
        }
    }
}

fn pick<T: FromStr>(flag: Option<T>, cfg: &FileCfg, key: &str, default: T) -> Result<T> {
    Ok(match flag {
        Some(v) => v,
        None => cfg.get(key)?.unwrap_or(default),
    })
}

fn parse_split(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(AppError::Config(format!(
            "split '{s}' must be two comma-separated ratios"
        )));
    }
    let a = parts[0].trim().parse().map_err(|_| AppError::Config(format!("bad split '{s}'")))?;
    let b = parts[1].trim().parse().map_err(|_| AppError::Config(format!("bad split '{s}'")))?;
    Ok((a, b))
}

fn parse_augment(s: &str) -> Result<Vec<AugOp>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| AugOp::parse(t).map_err(AppError::from))
        .collect()
}

fn write_run_lock(out_dir: &Path, resolved: &BTreeMap<String, String>) -> Result<String> {
    let mut text = String::new();
    writeln!(text, "artifact=octoseg {}", env!("CARGO_PKG_VERSION")).unwrap();
    for (k, v) in resolved {
        writeln!(text, "{k}={v}").unwrap();
    }
    let hash = config_hash(&text);
    writeln!(text, "config_hash={hash}").unwrap();
    crate::io::atomic_write(&out_dir.join("run.lock"), text.as_bytes())?;
    Ok(hash)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData(a) => cmd_gen_data(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Infer(a) => cmd_infer(a),
        Cmd::Inspect(a) => cmd_inspect(a),
        Cmd::Bench(a) => cmd_bench(a),
    }
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let file = FileCfg::load(a.config.as_ref())?;
    let task = Task::parse(&pick(a.task, &file, "task", "boundary".to_string())?)?;
    let count = pick(a.count, &file, "count", 100)?;
    let size = pick(a.size, &file, "size", 96)?;
    let seed = pick(a.seed, &file, "seed", 0)?;
    let split = parse_split(&pick(a.split, &file, "split", "0.75,0.25".to_string())?)?;
    let augment = parse_augment(&pick(a.augment, &file, "augment", String::new())?)?;
    let min_docs = pick(a.min_docs, &file, "min_docs", 1)?;
    let max_docs = pick(a.max_docs, &file, "max_docs", 5)?;
    let occl = a.occlusion_erases_mask
        || file.get::<bool>("occlusion_erases_mask")?.unwrap_or(false);

    let cfg = GenConfig {
        task,
        count,
        size,
        seed,
        out_dir: a.out.clone(),
        split,
        augment_ops: augment.clone(),
        occlusion_erases_mask: occl,
        min_docs,
        max_docs,
        threads: gendata::thread_cap(),
    };
    cfg.validate()?;
    ensure_dir(&a.out)?;
    let mut resolved = BTreeMap::new();
    resolved.insert("command".into(), "gen-data".into());
    resolved.insert("task".into(), task.as_str().into());
    resolved.insert("count".into(), count.to_string());
    resolved.insert("size".into(), size.to_string());
    resolved.insert("seed".into(), seed.to_string());
    resolved.insert("split".into(), format!("{},{}", split.0, split.1));
    resolved.insert(
        "augment".into(),
        augment.iter().map(|o| o.name()).collect::<Vec<_>>().join(","),
    );
    resolved.insert("min_docs".into(), min_docs.to_string());
    resolved.insert("max_docs".into(), max_docs.to_string());
    resolved.insert("occlusion_erases_mask".into(), occl.to_string());
    write_run_lock(&a.out, &resolved)?;

    let (train, val) = gendata::generate(&cfg)?;
    println!(
        "generated {count} {} scenes at {size}x{size} under {}",
        task.as_str(),
        a.out.display()
    );
    println!("train manifest: {}", train.display());
    println!("val manifest:   {}", val.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let file = FileCfg::load(a.config.as_ref())?;
    let model = ModelKind::parse(&pick(a.model, &file, "model", "octhu".to_string())?)
        .map_err(AppError::from)?;
    let scale = pick(a.scale, &file, "scale", 16)?;
    let input_size = pick(a.input_size, &file, "input_size", 512)?;
    let epochs = pick(a.epochs, &file, "epochs", 10)?;
    let lr = pick(a.lr, &file, "lr", 1e-4)?;
    let batch_size = pick(a.batch_size, &file, "batch_size", 4)?;
    let seed = pick(a.seed, &file, "seed", 0)?;
    let checkpoint_every = match a.checkpoint_every {
        Some(v) => Some(v),
        None => file.get::<u64>("checkpoint_every")?,
    };
    let data: Option<PathBuf> = match a.data {
        Some(v) => Some(v),
        None => file.get::<PathBuf>("data")?,
    };
    let train_manifest = match (a.train_manifest, &data) {
        (Some(p), _) => p,
        (None, Some(d)) => d.join("train.tsv"),
        (None, None) => {
            return Err(AppError::Config(
                "either --train-manifest or --data is required".into(),
            ))
        }
    };
    let val_manifest = match (a.val_manifest, &data) {
        (Some(p), _) => Some(p),
        (None, Some(d)) => {
            let p = d.join("val.tsv");
            p.exists().then_some(p)
        }
        (None, None) => None,
    };

    ensure_dir(&a.out)?;
    let mut resolved = BTreeMap::new();
    resolved.insert("command".into(), "train".into());
    resolved.insert("model".into(), model.as_str().into());
    resolved.insert("scale".into(), scale.to_string());
    resolved.insert("input_size".into(), input_size.to_string());
    resolved.insert("epochs".into(), epochs.to_string());
    resolved.insert("lr".into(), lr.to_string());
    resolved.insert("batch_size".into(), batch_size.to_string());
    resolved.insert("beta1".into(), "0.9".into());
    resolved.insert("beta2".into(), "0.999".into());
    resolved.insert("eps".into(), "1e-8".into());
    resolved.insert("seed".into(), seed.to_string());
    resolved.insert("train_manifest".into(), train_manifest.display().to_string());
    resolved.insert(
        "val_manifest".into(),
        val_manifest
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "(training set)".into()),
    );
    resolved.insert(
        "checkpoint_every".into(),
        checkpoint_every.map(|v| v.to_string()).unwrap_or_else(|| "0".into()),
    );
    let hash = write_run_lock(&a.out, &resolved)?;

    let cfg = TrainConfig {
        model,
        scale,
        input_size,
        learning_rate: lr,
        batch_size,
        epochs,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        seed,
        train_manifest,
        val_manifest,
        checkpoint_every,
        out_dir: a.out.clone(),
        config_hash: hash,
    };
    let outcome = trainer::train(&cfg)?;
    println!(
        "trained {} epochs; best val JCS {:.4} at epoch {}",
        outcome.epochs_run, outcome.best_val_jcs, outcome.best_epoch
    );
    println!("checkpoint: {}", outcome.checkpoint_path.display());
    println!("metrics:    {}", outcome.metrics_path.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let file = FileCfg::load(a.config.as_ref())?;
    let threshold = pick(a.threshold, &file, "threshold", DEFAULT_THRESHOLD)?;
    let model = crate::io::load_checkpoint::<f32>(&a.checkpoint, None)?;
    ensure_dir(&a.out)?;
    let mut resolved = BTreeMap::new();
    resolved.insert("command".into(), "eval".into());
    resolved.insert("checkpoint".into(), a.checkpoint.display().to_string());
    resolved.insert("manifest".into(), a.manifest.display().to_string());
    resolved.insert("threshold".into(), threshold.to_string());
    resolved.insert("model".into(), model.kind.as_str().into());
    resolved.insert("scale".into(), model.scale.to_string());
    resolved.insert("input_size".into(), model.input_size.to_string());
    write_run_lock(&a.out, &resolved)?;

    let out = crate::evaluate::evaluate(&model, &a.manifest, threshold)?;
    crate::evaluate::write_reports(&out, &a.out, threshold)?;
    println!(
        "evaluated {} images: mean JCS {:.4} (std {:.4}), {:.4} s/image",
        out.report.image_count, out.report.mean_jcs, out.report.std_jcs, out.report.mean_seconds
    );
    if !out.failures.is_empty() {
        eprintln!("skipped {} unreadable items (see report.txt)", out.failures.len());
    }
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let file = FileCfg::load(a.config.as_ref())?;
    let threshold = pick(a.threshold, &file, "threshold", DEFAULT_THRESHOLD)?;
    let model = crate::io::load_checkpoint::<f32>(&a.checkpoint, None)?;
    ensure_dir(&a.out)?;
    let mut resolved = BTreeMap::new();
    resolved.insert("command".into(), "infer".into());
    resolved.insert("checkpoint".into(), a.checkpoint.display().to_string());
    resolved.insert("threshold".into(), threshold.to_string());
    resolved.insert(
        "inputs".into(),
        a.input
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    write_run_lock(&a.out, &resolved)?;

    for path in &a.input {
        let img = crate::io::read_image(path)?;
        let pred = model.infer(&img.to_tensor::<f32>())?;
        let mask = octoseg_core::metrics::binarize(&pred, threshold)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image");
        let out_path = a.out.join(format!("{stem}_mask.png"));
        crate::io::write_mask(&out_path, &mask)?;
        println!("{} -> {}", path.display(), out_path.display());
    }
    Ok(())
}

fn inspect_one(kind: ModelKind, scale: u32, input_size: usize, verbose: bool) -> Result<(u64, u64, u64)> {
    let model = trainer::build_model(kind, scale, input_size)?;
    let ckpt_bytes = model.encode_checkpoint().len() as u64;
    if verbose {
        println!("model {} scale {} input {input_size}", kind.as_str(), scale);
        println!("{:<20} {:>14} {:>12} {:>16}", "layer", "out (CxHxW)", "params", "macs");
        for (name, c, h, w, params, macs) in model.layer_summaries() {
            println!("{name:<20} {:>14} {params:>12} {macs:>16}", format!("{c}x{h}x{w}"));
        }
        println!(
            "total parameters: {}\ntotal macs at {input_size}: {}\ncheckpoint bytes: {ckpt_bytes}",
            model.param_count(),
            model.mac_count(input_size)
        );
    }
    Ok((model.param_count(), model.mac_count(input_size), ckpt_bytes))
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let input_size = a.input_size.unwrap_or(512);
    if let Some(pair) = a.compare {
        let s1 = BenchSpec::parse(&pair[0])?;
        let s2 = BenchSpec::parse(&pair[1])?;
        let (p1, m1, b1) = inspect_one(s1.kind, s1.scale, input_size, false)?;
        let (p2, m2, b2) = inspect_one(s2.kind, s2.scale, input_size, false)?;
        println!("{:<12} {:>14} {:>16} {:>14}", "model", "params", "macs", "ckpt bytes");
        println!("{:<12} {p1:>14} {m1:>16} {b1:>14}", s1.label());
        println!("{:<12} {p2:>14} {m2:>16} {b2:>14}", s2.label());
        println!(
            "parameter reduction: {:.2}%",
            (1.0 - p1 as f64 / p2 as f64) * 100.0
        );
        println!(
            "storage reduction:   {:.2}%",
            (1.0 - b1 as f64 / b2 as f64) * 100.0
        );
        println!("mac ratio:           {:.4}", m1 as f64 / m2 as f64);
        return Ok(());
    }
    let kind = ModelKind::parse(&a.model.unwrap_or_else(|| "octhu".into())).map_err(AppError::from)?;
    let scale = a.scale.unwrap_or(16);
    inspect_one(kind, scale, input_size, true)?;
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let file = FileCfg::load(a.config.as_ref())?;
    let models = pick(a.models, &file, "models", "octhu:16,unet:64".to_string())?;
    let sizes = pick(a.sizes, &file, "sizes", "256,512".to_string())?;
    let warmup = pick(a.warmup, &file, "warmup", 1)?;
    let count = pick(a.count, &file, "count", 3)?;
    let seed = pick(a.seed, &file, "seed", 0)?;
    let specs: Vec<BenchSpec> = models
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(BenchSpec::parse)
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| AppError::Config(format!("bad input size '{s}'")))
        })
        .collect::<std::result::Result<_, _>>()?;
    if specs.is_empty() || sizes.is_empty() {
        return Err(AppError::Config("bench needs at least one model and one size".into()));
    }

    let rows = crate::bench::run(&specs, &sizes, warmup, count, seed)?;
    print!("{}", crate::bench::format_table(&rows));
    if let Some(out) = a.out {
        ensure_dir(&out)?;
        let mut resolved = BTreeMap::new();
        resolved.insert("command".into(), "bench".into());
        resolved.insert("models".into(), models.clone());
        resolved.insert(
            "sizes".into(),
            sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        resolved.insert("warmup".into(), warmup.to_string());
        resolved.insert("count".into(), count.to_string());
        resolved.insert("seed".into(), seed.to_string());
        write_run_lock(&out, &resolved)?;
        crate::io::atomic_write(&out.join("bench.csv"), crate::bench::format_csv(&rows).as_bytes())?;
        println!("wrote {}", out.join("bench.csv").display());
    }
    Ok(())
}
