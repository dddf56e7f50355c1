//! Model benchmarking: per-image inference timing on synthetic inputs plus
//! parameter/MAC accounting, emitted as a comparison table.

use std::fmt::Write as _;
use std::time::Instant;

use octoseg_core::model::ModelKind;
use octoseg_core::rng::Rng;
use octoseg_core::Tensor;

use crate::error::{AppError, Result};
use crate::trainer::build_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSpec {
    pub kind: ModelKind,
    pub scale: u32,
}

impl BenchSpec {
    /// Parse `kind:scale`, e.g. `octhu:16`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, scale) = s.split_once(':').ok_or_else(|| {
            AppError::Config(format!("model spec '{s}' must look like octhu:16"))
        })?;
        Ok(BenchSpec {
            kind: ModelKind::parse(kind).map_err(AppError::from)?,
            scale: scale
                .parse()
                .map_err(|_| AppError::Config(format!("bad scale in '{s}'")))?,
        })
    }

    pub fn label(&self) -> String {
        format!("{}({})", self.kind.as_str(), self.scale)
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub model: String,
    pub input_size: usize,
    pub params: u64,
    pub macs: u64,
    pub mean_seconds: f64,
}

/// Time `count` forward passes (after `warmup`) per model and input size on
/// a fixed random input. Single thread, model compute only.
pub fn run(
    specs: &[BenchSpec],
    sizes: &[usize],
    warmup: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if count == 0 {
        return Err(AppError::Config("bench repeat count must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &size in sizes {
        for spec in specs {
            let mut model = build_model(spec.kind, spec.scale, size)?;
            model.init_params(seed);
            let mut rng = Rng::from_seed(seed ^ size as u64);
            let data: Vec<f32> = (0..size * size).map(|_| rng.uniform() as f32).collect();
            let input = Tensor::new(&[1, size, size], data)?;
            for _ in 0..warmup {
                model.infer(&input)?;
            }
            let started = Instant::now();
            for _ in 0..count {
                model.infer(&input)?;
            }
            rows.push(BenchRow {
                model: spec.label(),
                input_size: size,
                params: model.param_count(),
                macs: model.mac_count(size),
                mean_seconds: started.elapsed().as_secs_f64() / count as f64,
            });
        }
    }
    Ok(rows)
}

/// Text table shaped like a per-input-size inference-time comparison.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>8} {:>14} {:>16} {:>12}",
        "model", "input", "params", "macs", "sec/image"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<12} {:>8} {:>14} {:>16} {:>12.4}",
            r.model, r.input_size, r.params, r.macs, r.mean_seconds
        )
        .unwrap();
    }
    out
}

pub fn format_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("model,input_size,params,macs,mean_seconds\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.6}",
            r.model, r.input_size, r.params, r.macs, r.mean_seconds
        )
        .unwrap();
    }
    out
}
