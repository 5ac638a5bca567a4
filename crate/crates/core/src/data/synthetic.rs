//! Procedural high-bit-depth test images: smooth colour gradients with a
//! faint fine texture, the content where coarse quantization bands most.

use std::f64::consts::TAU;

use crate::image::{max_value, ImageBuffer};
use crate::rng::Rng;

/// Stream id for corpus generation.
const CORPUS_STREAM: u64 = 2;

/// Peak amplitude of the fine texture, as a fraction of full scale.
const TEXTURE_AMPLITUDE: (f64, f64) = (0.002, 0.008);

/// One smooth-gradient RGB image drawn from `rng`.
pub fn smooth_texture_image(width: usize, height: usize, bits: u8, rng: &mut Rng) -> ImageBuffer {
    let theta = rng.uniform(0.0, TAU);
    let (ct, st) = (theta.cos(), theta.sin());
    let wave = (
        rng.uniform(0.2, 1.2),
        rng.uniform(0.2, 1.2),
        rng.uniform(0.0, TAU),
    );
    let blob = (
        rng.uniform(0.0, 1.0),
        rng.uniform(0.0, 1.0),
        rng.uniform(0.15, 0.5),
    );
    let tex_period = rng.uniform(3.0, 9.0);
    let tex_angle = rng.uniform(0.0, TAU);
    let tex_amp = rng.uniform(TEXTURE_AMPLITUDE.0, TEXTURE_AMPLITUDE.1);
    let chan: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.uniform(0.25, 0.75),
                rng.uniform(-0.35, 0.35),
                rng.uniform(0.0, 0.12),
                rng.uniform(-0.2, 0.2),
            ]
        })
        .collect();

    let max = max_value(bits) as f64;
    let (w, h) = (width.max(1) as f64, height.max(1) as f64);
    ImageBuffer::from_fn(width, height, 3, bits, |x, y, c| {
        let u = (x as f64 + 0.5) / w;
        let v = (y as f64 + 0.5) / h;
        let [base, slope, wave_amp, blob_amp] = chan[c];
        let ramp = (u - 0.5) * ct + (v - 0.5) * st;
        let low = (TAU * (wave.0 * u + wave.1 * v) + wave.2).sin();
        let d2 = ((u - blob.0).powi(2) + (v - blob.1).powi(2)) / (blob.2 * blob.2);
        let tex =
            (TAU * (x as f64 * tex_angle.cos() + y as f64 * tex_angle.sin()) / tex_period).sin();
        let value = base + slope * ramp + wave_amp * low + blob_amp * (-d2).exp() + tex_amp * tex;
        (value.clamp(0.0, 1.0) * max).round() as u16
    })
    .expect("generated values stay in range")
}

/// `count` named images generated from `seed`.
pub fn corpus(
    count: usize,
    width: usize,
    height: usize,
    bits: u8,
    seed: u64,
) -> Vec<(String, ImageBuffer)> {
    let mut rng = Rng::stream(seed, CORPUS_STREAM);
    (0..count)
        .map(|i| {
            (
                format!("synth_{i:04}.png"),
                smooth_texture_image(width, height, bits, &mut rng),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = corpus(3, 32, 24, 16, 10_000);
        let b = corpus(3, 32, 24, 16, 10_000);
        assert_eq!(a, b);
        assert_ne!(a[0].1, a[1].1);
        assert_eq!(a[0].1.bit_depth(), 16);
        assert_eq!(a[0].1.channels(), 3);
    }

    #[test]
    fn gradients_are_smooth() {
        let (_, img) = &corpus(1, 64, 64, 8, 1)[0];
        for y in 0..64 {
            for x in 1..64 {
                for c in 0..3 {
                    let d = img.get(x, y, c) as i32 - img.get(x - 1, y, c) as i32;
                    assert!(d.abs() <= 8, "jump {d} at ({x},{y},{c})");
                }
            }
        }
    }
}
