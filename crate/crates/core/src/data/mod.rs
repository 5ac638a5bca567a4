//! Quantization, training-pair construction and data streaming.

mod augment;
mod dataset;
pub mod synthetic;

pub use augment::{augment, AugmentConfig, Augmented};
pub use dataset::{Dataset, DirSource, Epoch, ImageSource, MemorySource, Split, SplitSpec};

use crate::classical::{zero_pad, BitDepthSpec};
use crate::error::{Error, Result};
use crate::image::{max_value, ImageBuffer};
use crate::ops::concat_channels;
use crate::tensor::{Shape, Tensor};

/// Keeps the `q` most significant bits: `x >> (b - q)`.
pub fn quantize(x: &ImageBuffer, q: u8) -> Result<ImageBuffer> {
    let b = x.bit_depth();
    if q == 0 || q >= b {
        return Err(Error::Argument(format!(
            "cannot quantize a {b}-bit image to {q} bits"
        )));
    }
    let shift = b - q;
    x.map_values(q, |v| v >> shift)
}

/// Value of the constant bit-depth channel for a `q`-bit source: the
/// normalized quantization step `1 / (2^q - 1)`.
pub fn bit_info_value(q: u8) -> f32 {
    (1.0 / max_value(q) as f64) as f32
}

/// Network input for a `q`-bit image expanded to `target` bits: the
/// zero-padded image divided by `2^target - 1`, followed by the bit-depth
/// channel.
pub fn network_input(lbd: &ImageBuffer, spec: BitDepthSpec) -> Result<Tensor> {
    let zp = zero_pad(lbd, spec)?;
    let img = zp.to_tensor(max_value(spec.target) as f64);
    let s = img.shape();
    let info = Tensor::full(Shape::new(s.n, 1, s.h, s.w), bit_info_value(spec.q));
    concat_channels(&img, &info)
}

/// One training example.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    /// `(1, c + 1, h, w)`: normalized zero-padded image plus bit-depth channel.
    pub input: Tensor,
    /// `(1, c, h, w)`: normalized ground truth.
    pub target: Tensor,
    pub q: u8,
}

impl SamplePair {
    pub fn image_channels(&self) -> usize {
        self.target.shape().c
    }

    /// The input with or without the trailing bit-depth channel.
    pub fn network_input(&self, use_bit_info: bool) -> Tensor {
        if use_bit_info {
            self.input.clone()
        } else {
            self.input
                .slice_channels(0, self.image_channels())
                .expect("input always holds the image channels")
        }
    }
}

/// Brings `hbd` to exactly `target` bits by truncation when it is deeper.
pub fn to_target_depth(hbd: &ImageBuffer, target: u8) -> Result<ImageBuffer> {
    match hbd.bit_depth().cmp(&target) {
        std::cmp::Ordering::Equal => Ok(hbd.clone()),
        std::cmp::Ordering::Greater => quantize(hbd, target),
        std::cmp::Ordering::Less => Err(Error::Argument(format!(
            "{}-bit image cannot serve as a {target}-bit ground truth",
            hbd.bit_depth()
        ))),
    }
}

/// Quantizes `hbd` to `q` bits and pairs the zero-padded result with the
/// `target`-bit original.
pub fn make_pair(hbd: &ImageBuffer, q: u8, target: u8) -> Result<SamplePair> {
    let spec = BitDepthSpec::new(q, target)?;
    let truth = to_target_depth(hbd, target)?;
    let lbd = quantize(&truth, q)?;
    Ok(SamplePair {
        input: network_input(&lbd, spec)?,
        target: truth.to_tensor(max_value(target) as f64),
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_examples() {
        let a = ImageBuffer::new(1, 1, 1, 16, vec![65535]).unwrap();
        assert_eq!(quantize(&a, 3).unwrap().pixels(), &[7]);
        let b = ImageBuffer::new(1, 1, 1, 8, vec![100]).unwrap();
        let q = quantize(&b, 4).unwrap();
        assert_eq!(q.pixels(), &[6]);
        assert_eq!(q.bit_depth(), 4);
        assert!(quantize(&b, 8).is_err());
    }

    #[test]
    fn bit_info_values() {
        assert!((bit_info_value(3) - 0.142857).abs() < 1e-6);
        assert_eq!(bit_info_value(6), (1.0f64 / 63.0) as f32);
    }

    #[test]
    fn pair_shapes_and_ranges() {
        let hbd =
            ImageBuffer::from_fn(6, 4, 3, 16, |x, y, c| (x * 9000 + y * 3000 + c * 11) as u16)
                .unwrap();
        let p = make_pair(&hbd, 3, 8).unwrap();
        assert_eq!(p.input.shape(), Shape::new(1, 4, 4, 6));
        assert_eq!(p.target.shape(), Shape::new(1, 3, 4, 6));
        assert!(p.input.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(p.input.plane(0, 3).iter().all(|&v| v == bit_info_value(3)));
        assert_eq!(p.network_input(false).shape().c, 3);
    }

    #[test]
    fn target_shallower_than_request_fails() {
        let img = ImageBuffer::new(1, 1, 1, 8, vec![1]).unwrap();
        assert!(make_pair(&img, 4, 16).is_err());
    }
}
