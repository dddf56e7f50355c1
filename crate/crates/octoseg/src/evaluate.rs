//! Evaluation and the pinned timing protocol: 5 warm-up forward passes,
//! then per-image timing of model compute only (file I/O excluded), batch
//! size 1, single thread.
//!
//! Timing goes to its own file; scores.csv and summary.csv stay
//! byte-reproducible for a fixed seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use octoseg_core::metrics::{binarize, jaccard, EvalReport};
use octoseg_core::model::ModelGraph;
use octoseg_core::raster::{GrayImage, Mask};
use octoseg_core::Tensor;

use crate::error::{AppError, Result};
use crate::manifest::{resolve, Manifest};

pub const WARMUP_PASSES: usize = 5;

pub struct EvalOutput {
    pub report: EvalReport,
    pub per_image: Vec<(String, f64, f64)>,
    pub failures: Vec<(String, String)>,
}

/// Evaluate a model over a manifest. Read failures are recorded per item and
/// evaluation continues; model parameters are untouched.
pub fn evaluate(model: &ModelGraph<f32>, manifest_path: &Path, threshold: f64) -> Result<EvalOutput> {
    let manifest = Manifest::read(manifest_path)?;
    if manifest.records.is_empty() {
        return Err(AppError::Config(format!(
            "manifest {} lists no samples",
            manifest_path.display()
        )));
    }

    let mut loaded: Vec<(String, GrayImage, Mask)> = Vec::new();
    let mut failures = Vec::new();
    for r in &manifest.records {
        let img = crate::io::read_image(&resolve(manifest_path, &r.image));
        let mask = crate::io::read_mask(&resolve(manifest_path, &r.mask));
        match (img, mask) {
            (Ok(i), Ok(m)) if (i.w, i.h) == (m.w, m.h) => loaded.push((r.image.clone(), i, m)),
            (Ok(i), Ok(m)) => failures.push((
                r.image.clone(),
                format!("image {}x{} vs mask {}x{}", i.w, i.h, m.w, m.h),
            )),
            (Err(e), _) | (_, Err(e)) => failures.push((r.image.clone(), e.to_string())),
        }
    }
    if loaded.is_empty() {
        return Err(AppError::Io(format!(
            "no readable samples in {} ({} failures)",
            manifest_path.display(),
            failures.len()
        )));
    }

    // warm-up on the first image, untimed
    let first: Tensor<f32> = loaded[0].1.to_tensor();
    for _ in 0..WARMUP_PASSES {
        model.infer(&first)?;
    }

    let mut per_image = Vec::with_capacity(loaded.len());
    let mut scores = Vec::with_capacity(loaded.len());
    let mut total_seconds = 0.0;
    for (name, img, mask) in &loaded {
        let input = img.to_tensor::<f32>();
        let started = Instant::now();
        let pred = model.infer(&input)?;
        let seconds = started.elapsed().as_secs_f64();
        let pm = binarize(&pred, threshold)?;
        let jcs = jaccard(&pm, mask)?;
        per_image.push((name.clone(), jcs, seconds));
        scores.push(jcs);
        total_seconds += seconds;
    }
    let report = EvalReport::from_scores(scores, total_seconds / per_image.len() as f64);
    Ok(EvalOutput {
        report,
        per_image,
        failures,
    })
}

/// Write scores.csv, summary.csv, timing.csv and the human-readable
/// report.txt into `out_dir`.
pub fn write_reports(out: &EvalOutput, out_dir: &Path, threshold: f64) -> Result<PathBuf> {
    let mut scores = String::from("image,jcs\n");
    for (name, jcs, _) in &out.per_image {
        writeln!(scores, "{name},{jcs:.6}").unwrap();
    }
    crate::io::atomic_write(&out_dir.join("scores.csv"), scores.as_bytes())?;

    let summary = format!(
        "image_count,mean_jcs,std_jcs\n{},{:.6},{:.6}\n",
        out.report.image_count, out.report.mean_jcs, out.report.std_jcs
    );
    crate::io::atomic_write(&out_dir.join("summary.csv"), summary.as_bytes())?;

    let mut timing = String::from("image,seconds\n");
    for (name, _, seconds) in &out.per_image {
        writeln!(timing, "{name},{seconds:.6}").unwrap();
    }
    writeln!(timing, "mean,{:.6}", out.report.mean_seconds).unwrap();
    crate::io::atomic_write(&out_dir.join("timing.csv"), timing.as_bytes())?;

    let mut report = String::new();
    writeln!(report, "evaluation report").unwrap();
    writeln!(
        report,
        "timing protocol: {WARMUP_PASSES} warm-up passes, batch size 1, single thread, model compute only (file I/O excluded)"
    )
    .unwrap();
    writeln!(report, "threshold: {threshold}").unwrap();
    writeln!(report, "images evaluated: {}", out.report.image_count).unwrap();
    writeln!(
        report,
        "mean JCS: {:.4} (std {:.4})",
        out.report.mean_jcs, out.report.std_jcs
    )
    .unwrap();
    writeln!(
        report,
        "mean inference seconds per image: {:.4}",
        out.report.mean_seconds
    )
    .unwrap();
    if !out.failures.is_empty() {
        writeln!(report, "skipped items: {}", out.failures.len()).unwrap();
        for (name, why) in &out.failures {
            writeln!(report, "  {name}: {why}").unwrap();
        }
    }
    let path = out_dir.join("report.txt");
    crate::io::atomic_write(&path, report.as_bytes())?;
    Ok(path)
}
