//! File I/O: 8-bit grayscale PNG images, {0,255} PNG masks, checkpoints,
//! and atomic writes so partially written artifacts never survive a crash.

use std::fs;
use std::path::Path;

use octoseg_core::model::{ModelGraph, ModelKind};
use octoseg_core::raster::{GrayImage, Mask};
use octoseg_core::scalar::Scalar;

use crate::error::{io_err, AppError, Result};

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn decode_gray_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| AppError::Format(format!("{}: {e}", path.display())))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(AppError::Format(format!(
            "{}: expected 8-bit grayscale PNG, got {:?}/{:?}",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| AppError::Format(format!("{}: {e}", path.display())))?;
    buf.truncate(frame.buffer_size());
    Ok((frame.width as usize, frame.height as usize, buf))
}

fn encode_gray_png(path: &Path, w: usize, h: usize, data: &[u8]) -> Result<()> {
    let mut bytes = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut bytes, w as u32, h as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| AppError::Format(format!("{}: {e}", path.display())))?;
        writer
            .write_image_data(data)
            .map_err(|e| AppError::Format(format!("{}: {e}", path.display())))?;
    }
    atomic_write(path, &bytes)
}

pub fn read_image(path: &Path) -> Result<GrayImage> {
    let (w, h, data) = decode_gray_png(path)?;
    GrayImage::from_data(w, h, data).map_err(AppError::from)
}

pub fn write_image(path: &Path, img: &GrayImage) -> Result<()> {
    encode_gray_png(path, img.w, img.h, &img.data)
}

/// Masks are {0,255} on disk; anything else is rejected rather than guessed.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let (w, h, data) = decode_gray_png(path)?;
    if let Some(&bad) = data.iter().find(|&&v| v != 0 && v != 255) {
        return Err(AppError::Format(format!(
            "{}: mask pixels must be 0 or 255, found {bad}",
            path.display()
        )));
    }
    let bits = data.iter().map(|&v| (v == 255) as u8).collect();
    Mask::from_data(w, h, bits).map_err(AppError::from)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let bytes: Vec<u8> = mask.data.iter().map(|&v| if v == 1 { 255 } else { 0 }).collect();
    encode_gray_png(path, mask.w, mask.h, &bytes)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &ModelGraph<T>) -> Result<()> {
    atomic_write(path, &model.encode_checkpoint())
}

pub fn load_checkpoint<T: Scalar>(
    path: &Path,
    expect_kind: Option<ModelKind>,
) -> Result<ModelGraph<T>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    ModelGraph::decode_checkpoint(&bytes, expect_kind)
        .map_err(|e| AppError::Format(format!("{}: {e}", path.display())))
}
