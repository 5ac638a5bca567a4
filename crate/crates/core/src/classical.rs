//! Closed-form low-to-high bit-depth expanders.
//!
//! Each expander is a per-value function of the `q`-bit input, so it is
//! applied through a `2^q`-entry lookup table.

use crate::error::{Error, Result};
use crate::image::{max_value, ImageBuffer};

/// Source depth `q` and target depth `target` with `1 <= q < target <= 16`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitDepthSpec {
    pub q: u8,
    pub target: u8,
}

impl BitDepthSpec {
    pub fn new(q: u8, target: u8) -> Result<Self> {
        if q == 0 || q >= target || target > 16 {
            return Err(Error::Argument(format!(
                "need 1 <= q < H <= 16, got q={q} H={target}"
            )));
        }
        Ok(BitDepthSpec { q, target })
    }

    fn shift(&self) -> u32 {
        (self.target - self.q) as u32
    }
}

/// Appends `H - q` zero bits.
pub fn zero_pad_value(v: u16, spec: BitDepthSpec) -> u16 {
    v << spec.shift()
}

/// `round(v * (2^H - 1) / (2^q - 1))`, halves rounded up.
pub fn mig_value(v: u16, spec: BitDepthSpec) -> u16 {
    let num = v as u64 * max_value(spec.target) as u64;
    let den = max_value(spec.q) as u64;
    ((2 * num + den) / (2 * den)) as u16
}

/// Fills the `H` output bits by repeating the `q` source bits, most
/// significant first; the last copy is truncated.
pub fn bit_replicate_value(v: u16, spec: BitDepthSpec) -> u16 {
    let (q, h) = (spec.q as i32, spec.target as i32);
    let mut out: u32 = 0;
    let mut shift = h;
    while shift > 0 {
        shift -= q;
        out |= if shift >= 0 {
            (v as u32) << shift
        } else {
            (v as u32) >> -shift
        };
    }
    out as u16
}

fn expand_with(
    x: &ImageBuffer,
    spec: BitDepthSpec,
    f: fn(u16, BitDepthSpec) -> u16,
) -> Result<ImageBuffer> {
    let max = max_value(spec.q);
    if let Some(&v) = x.pixels().iter().find(|&&v| v > max) {
        return Err(Error::Domain {
            value: v,
            bits: spec.q,
        });
    }
    let lut: Vec<u16> = (0..=max).map(|v| f(v, spec)).collect();
    x.map_values(spec.target, |v| lut[v as usize])
}

pub fn zero_pad(x: &ImageBuffer, spec: BitDepthSpec) -> Result<ImageBuffer> {
    expand_with(x, spec, zero_pad_value)
}

pub fn mig(x: &ImageBuffer, spec: BitDepthSpec) -> Result<ImageBuffer> {
    expand_with(x, spec, mig_value)
}

pub fn bit_replicate(x: &ImageBuffer, spec: BitDepthSpec) -> Result<ImageBuffer> {
    expand_with(x, spec, bit_replicate_value)
}
