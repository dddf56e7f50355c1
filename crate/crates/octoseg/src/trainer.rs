//! Training loop: mini-batch BCE with Adam, deterministic shuffling, a
//! per-epoch metrics log, and best-validation checkpointing.
//!
//! The metrics CSV is `epoch,train_loss,val_jcs,seconds`; the seconds column
//! is wall-clock and therefore exempt from the byte-reproducibility
//! contract, which covers every other output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use octoseg_core::metrics::{binarize, jaccard, DEFAULT_THRESHOLD};
use octoseg_core::model::{build_octhu, build_unet_baseline, ModelGraph, ModelKind};
use octoseg_core::optim::{adam_step, AdamConfig, AdamState};
use octoseg_core::raster::{GrayImage, Mask};
use octoseg_core::rng::{child_seed, Rng};
use octoseg_core::Graph;

use crate::error::{AppError, Result};
use crate::gendata::load_pairs;

const TAG_SHUFFLE: u64 = 0x5f1e;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub scale: u32,
    pub input_size: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub train_manifest: PathBuf,
    pub val_manifest: Option<PathBuf>,
    /// Extra snapshot every N epochs, in addition to the best-val checkpoint.
    pub checkpoint_every: Option<u64>,
    pub out_dir: PathBuf,
    pub config_hash: String,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(AppError::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(AppError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub epochs_run: u64,
    pub best_val_jcs: f64,
    pub best_epoch: u64,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
}

pub fn build_model(kind: ModelKind, scale: u32, input_size: usize) -> Result<ModelGraph<f32>> {
    Ok(match kind {
        ModelKind::OctHu => build_octhu::<f32>(scale, input_size)?,
        ModelKind::Unet => build_unet_baseline::<f32>(scale, input_size)?,
    })
}

fn check_sample_size(name: &str, img: &GrayImage, input_size: usize) -> Result<()> {
    if (img.w, img.h) != (input_size, input_size) {
        return Err(AppError::Config(format!(
            "{name}: sample is {}x{} but the model was built for {input_size}x{input_size}",
            img.w, img.h
        )));
    }
    Ok(())
}

/// Mean JCS of thresholded predictions over a dataset.
pub fn mean_jcs(model: &ModelGraph<f32>, pairs: &[(String, GrayImage, Mask)]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (_, img, mask) in pairs {
        let pred = model.infer(&img.to_tensor::<f32>())?;
        let pm = binarize(&pred, DEFAULT_THRESHOLD)?;
        sum += jaccard(&pm, mask)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// One mini-batch step: mean of per-sample BCE losses, one Adam update.
/// Returns the batch loss.
fn train_step(
    model: &mut ModelGraph<f32>,
    batch: &[&(String, GrayImage, Mask)],
    state: &mut AdamState<f32>,
    adam: &AdamConfig,
) -> Result<f64> {
    let mut g: Graph<f32> = Graph::new();
    let bound = model.bind(&mut g);
    let mut total: Option<octoseg_core::ValueId> = None;
    for (_, img, mask) in batch {
        let input = g.leaf(img.to_tensor::<f32>());
        let target = g.leaf(mask.to_tensor::<f32>());
        let out = model.forward(&mut g, &bound, input, false)?;
        let loss = g.bce_loss(out, target)?;
        total = Some(match total {
            Some(acc) => g.add(acc, loss)?,
            None => loss,
        });
    }
    let total = total.ok_or_else(|| AppError::Config("empty batch".into()))?;
    let mean = g.scale(total, 1.0 / batch.len() as f64)?;
    let loss_value = g.value(mean).item()? as f64;
    g.backward(mean)?;
    let grads = model.collect_grads(&g, &bound);
    adam_step(&mut model.params, &grads, state, adam)?;
    Ok(loss_value)
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_pairs = load_pairs(&cfg.train_manifest)?;
    if train_pairs.is_empty() {
        return Err(AppError::Config(format!(
            "training manifest {} lists no samples",
            cfg.train_manifest.display()
        )));
    }
    let val_pairs = match &cfg.val_manifest {
        Some(p) => load_pairs(p)?,
        None => Vec::new(),
    };
    for (name, img, _) in train_pairs.iter().chain(&val_pairs) {
        check_sample_size(name, img, cfg.input_size)?;
    }

    let mut model = build_model(cfg.model, cfg.scale, cfg.input_size)?;
    model.init_params(cfg.seed);
    model.meta.config_hash = cfg.config_hash.clone();
    let adam = AdamConfig {
        lr: cfg.learning_rate,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };
    let mut state = AdamState::new(&model.params);

    let metrics_path = cfg.out_dir.join("metrics.csv");
    let best_path = cfg.out_dir.join("best.ckpt");
    let mut metrics = String::from("epoch,train_loss,val_jcs,seconds\n");
    // validation falls back to the training set so single-sample overfit
    // runs still get a tracked score
    let score_pairs: &[_] = if val_pairs.is_empty() {
        &train_pairs
    } else {
        &val_pairs
    };

    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0u64;
    // epoch 0 snapshot so --epochs 0 leaves the initialization on disk
    model.meta.epoch = 0;
    crate::io::save_checkpoint(&best_path, &model)?;
    crate::io::atomic_write(&metrics_path, metrics.as_bytes())?;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        Rng::from_seed(child_seed(cfg.seed, TAG_SHUFFLE, epoch)).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut batches = 0u64;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&(String, GrayImage, Mask)> =
                chunk.iter().map(|&i| &train_pairs[i]).collect();
            match train_step(&mut model, &batch, &mut state, &adam) {
                Ok(loss) => {
                    loss_sum += loss;
                    batches += 1;
                }
                Err(e @ AppError::Numeric(_)) => {
                    // abort; the last-good checkpoint from a previous epoch
                    // stays on disk untouched
                    crate::io::atomic_write(&metrics_path, metrics.as_bytes())?;
                    return Err(AppError::Numeric(format!(
                        "epoch {epoch}: {e}; last-good checkpoint retained at {}",
                        best_path.display()
                    )));
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        let val_jcs = mean_jcs(&model, score_pairs)?;
        let seconds = started.elapsed().as_secs_f64();
        writeln!(metrics, "{epoch},{train_loss:.6},{val_jcs:.6},{seconds:.3}").unwrap();
        crate::io::atomic_write(&metrics_path, metrics.as_bytes())?;

        if val_jcs > best_val {
            best_val = val_jcs;
            best_epoch = epoch;
            model.meta.epoch = epoch;
            crate::io::save_checkpoint(&best_path, &model)?;
        }
        if let Some(every) = cfg.checkpoint_every {
            if every > 0 && epoch % every == 0 {
                model.meta.epoch = epoch;
                crate::io::save_checkpoint(&cfg.out_dir.join(format!("epoch_{epoch}.ckpt")), &model)?;
            }
        }
    }

    Ok(TrainOutcome {
        epochs_run: cfg.epochs,
        best_val_jcs: if best_val.is_finite() { best_val } else { 0.0 },
        best_epoch,
        checkpoint_path: best_path,
        metrics_path,
    })
}

/// Stable hash of the resolved configuration text, recorded in checkpoints
/// and run.lock so artifacts can be traced back to their settings.
pub fn config_hash(resolved: &str) -> String {
    let mut h = 0xcbf29ce484222325u64;
    for b in resolved.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Paths helper shared by CLI subcommands.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::io_err(dir, e))
}
