//! Core of the octave-convolution document segmentation stack: dense tensors
//! with reverse-mode autodiff, octave convolution layers with exact
//! parameter/MAC accounting, the encoder-decoder model builders, training
//! math (BCE, Adam, Jaccard), and procedural scene synthesis.
//!
//! The crate is `no_std` (alloc only); all file and process concerns live in
//! the companion `octoseg` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod octave;
pub mod ops;
pub mod optim;
pub mod raster;
pub mod rng;
pub mod scalar;
pub mod scene;
pub mod tensor;

pub use error::{Error, FormatErrorKind, Result};
pub use graph::{Graph, ValueId};
pub use ops::Padding;
pub use scalar::{Dtype, Scalar};
pub use tensor::Tensor;
