//! Dataset generation: synthesize scenes into an output directory with
//! train/val manifests. Each scene derives its own child seed from the
//! master seed and its index, so generation is deterministic and
//! order-independent, including across worker threads.

use std::path::{Path, PathBuf};

use octoseg_core::rng::{child_seed, Rng};
use octoseg_core::scene::{
    augment, gen_boundary_scene, gen_text_scene, resize_pair, split_indices, AugOp,
    AugmentOptions, BoundaryConfig, Scene, TextConfig,
};

use crate::error::{AppError, Result};
use crate::manifest::{Manifest, ManifestRecord, ProvenanceJson, MANIFEST_VERSION};

const TAG_SCENE: u64 = 0x5ce7e;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Boundary,
    Text,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Boundary => "boundary",
            Task::Text => "text",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "boundary" => Ok(Task::Boundary),
            "text" => Ok(Task::Text),
            other => Err(AppError::Config(format!(
                "unknown task '{other}' (expected boundary or text)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub task: Task,
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Train/val ratio, normalized. Default 75/25.
    pub split: (f64, f64),
    pub augment_ops: Vec<AugOp>,
    pub occlusion_erases_mask: bool,
    pub min_docs: usize,
    pub max_docs: usize,
    pub threads: usize,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(AppError::Config("--count must be at least 1".into()));
        }
        if self.size < 16 {
            return Err(AppError::Config(format!(
                "--size {} is too small (minimum 16)",
                self.size
            )));
        }
        if self.split.0 <= 0.0 || self.split.1 < 0.0 {
            return Err(AppError::Config(format!(
                "invalid split ratios {:?}",
                self.split
            )));
        }
        Ok(())
    }
}

fn generate_one(cfg: &GenConfig, index: usize) -> Result<Scene> {
    let scene_seed = child_seed(cfg.seed, TAG_SCENE, index as u64);
    let mut rng = Rng::from_seed(scene_seed);
    let mut scene = match cfg.task {
        Task::Boundary => {
            let bcfg = BoundaryConfig {
                size: cfg.size,
                min_docs: cfg.min_docs,
                max_docs: cfg.max_docs,
                ..BoundaryConfig::default()
            };
            gen_boundary_scene(&mut rng, &bcfg)?
        }
        Task::Text => {
            let tcfg = TextConfig {
                size: cfg.size,
                ..TextConfig::default()
            };
            gen_text_scene(&mut rng, &tcfg)?
        }
    };
    if !cfg.augment_ops.is_empty() {
        let opts = AugmentOptions {
            occlusion_erases_mask: cfg.occlusion_erases_mask,
        };
        let (img, mask, applied) =
            augment(&scene.image, &scene.mask, &cfg.augment_ops, &mut rng, &opts)?;
        // resize augmentation changes dimensions; normalize back so every
        // sample in the dataset shares one input size
        let (img, mask) = if img.w != cfg.size || img.h != cfg.size {
            resize_pair(&img, &mask, cfg.size, cfg.size)?
        } else {
            (img, mask)
        };
        scene.image = img;
        scene.mask = mask;
        scene.provenance.augmentations = applied;
    }
    scene.provenance.seed = scene_seed;
    Ok(scene)
}

fn generate_all(cfg: &GenConfig) -> Result<Vec<Scene>> {
    let n = cfg.count;
    let threads = cfg.threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(|i| generate_one(cfg, i)).collect();
    }
    let mut slots: Vec<Option<Result<Scene>>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(threads);
    std::thread::scope(|scope| {
        for (t, piece) in slots.chunks_mut(chunk).enumerate() {
            scope.spawn(move || {
                for (j, slot) in piece.iter_mut().enumerate() {
                    *slot = Some(generate_one(cfg, t * chunk + j));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every index generated"))
        .collect()
}

/// Generate the dataset and write images, masks, and the two split
/// manifests. Returns (train manifest path, val manifest path).
pub fn generate(cfg: &GenConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    let scenes = generate_all(cfg)?;

    let mut records = Vec::with_capacity(cfg.count);
    for (i, scene) in scenes.iter().enumerate() {
        let image_rel = format!("images/scene_{i:05}.png");
        let mask_rel = format!("masks/mask_{i:05}.png");
        crate::io::write_image(&cfg.out_dir.join(&image_rel), &scene.image)?;
        crate::io::write_mask(&cfg.out_dir.join(&mask_rel), &scene.mask)?;
        records.push(ManifestRecord {
            image: image_rel,
            mask: mask_rel,
            provenance: ProvenanceJson::from(&scene.provenance),
        });
    }

    let parts = split_indices(cfg.count, &[cfg.split.0, cfg.split.1], cfg.seed)?;
    let mut paths = Vec::new();
    for (part, tag) in parts.iter().zip(["train", "val"]) {
        let manifest = Manifest {
            name: format!("{}-{}", cfg.task.as_str(), cfg.count),
            split: tag.to_string(),
            seed: cfg.seed,
            version: MANIFEST_VERSION,
            records: part.iter().map(|&i| records[i].clone()).collect(),
        };
        let path = cfg.out_dir.join(format!("{tag}.tsv"));
        manifest.write(&path)?;
        paths.push(path);
    }
    Ok((paths[0].clone(), paths[1].clone()))
}

/// Worker-thread cap: OCTOSEG_THREADS if set, else the logical core count.
pub fn thread_cap() -> usize {
    std::env::var("OCTOSEG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Load every (image tensor, mask) pair referenced by a manifest.
pub fn load_pairs(
    manifest_path: &Path,
) -> Result<Vec<(String, octoseg_core::raster::GrayImage, octoseg_core::raster::Mask)>> {
    let manifest = Manifest::read(manifest_path)?;
    let mut out = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let img = crate::io::read_image(&crate::manifest::resolve(manifest_path, &r.image))?;
        let mask = crate::io::read_mask(&crate::manifest::resolve(manifest_path, &r.mask))?;
        if (img.w, img.h) != (mask.w, mask.h) {
            return Err(AppError::Format(format!(
                "{}: image {}x{} does not match mask {}x{}",
                r.image, img.w, img.h, mask.w, mask.h
            )));
        }
        out.push((r.image.clone(), img, mask));
    }
    Ok(out)
}
