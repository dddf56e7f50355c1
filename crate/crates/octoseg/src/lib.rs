//! Filesystem, dataset, training, and CLI layers over the octoseg-core
//! tensor and model stack.

pub mod bench;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod gendata;
pub mod io;
pub mod manifest;
pub mod trainer;
