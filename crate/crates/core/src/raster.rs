//! In-memory 8-bit grayscale images and binary masks. File encoding (PNG)
//! lives in the companion crate; masks are 0/1 here and 0/255 on disk.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub w: usize,
    pub h: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(w: usize, h: usize) -> Self {
        GrayImage {
            w,
            h,
            data: vec![0; w * h],
        }
    }

    pub fn from_data(w: usize, h: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != w * h {
            return Err(Error::Shape(format!(
                "image {w}x{h} needs {} bytes, got {}",
                w * h,
                data.len()
            )));
        }
        Ok(GrayImage { w, h, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.w + x] = v;
    }

    /// `[1,H,W]` tensor with values scaled to [0,1].
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self
            .data
            .iter()
            .map(|&v| T::from_f64(v as f64 / 255.0))
            .collect();
        Tensor::new(&[1, self.h, self.w], data).expect("image dims are consistent")
    }
}

/// Binary mask, values strictly 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub w: usize,
    pub h: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(w: usize, h: usize) -> Self {
        Mask {
            w,
            h,
            data: vec![0; w * h],
        }
    }

    pub fn from_data(w: usize, h: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != w * h {
            return Err(Error::Shape(format!(
                "mask {w}x{h} needs {} bytes, got {}",
                w * h,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Contract(
                "mask values must be 0 or 1 (binarize first)".into(),
            ));
        }
        Ok(Mask { w, h, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        debug_assert!(v <= 1);
        self.data[y * self.w + x] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// `[1,H,W]` tensor of 0.0/1.0 values (training target).
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self
            .data
            .iter()
            .map(|&v| if v == 1 { T::ONE } else { T::ZERO })
            .collect();
        Tensor::new(&[1, self.h, self.w], data).expect("mask dims are consistent")
    }
}
