//! Bit-depth expansion: classical expanders, a trainable encoder-decoder
//! network built on a small tensor engine, data pipeline, and metrics.

pub mod classical;
pub mod cli;
pub mod data;
pub mod error;
pub mod expander;
pub mod image;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use classical::BitDepthSpec;
pub use error::{Error, Result};
pub use expander::{Expander, Method};
pub use image::ImageBuffer;
pub use model::{BitNetConfig, BitNetModel, Variant};
pub use tensor::{Shape, Tensor};
