use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::rng::Rng;

/// Random flip, rescale, source bit depth and patch crop.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub hflip_prob: f64,
    pub scale_range: (f64, f64),
    pub bit_depth_range: (u8, u8),
    /// Square patch side; 0 keeps the full image.
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            hflip_prob: 0.5,
            scale_range: (0.5, 1.0),
            bit_depth_range: (3, 6),
            patch_size: 128,
            seed: 10_000,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (s0, s1) = self.scale_range;
        let (q0, q1) = self.bit_depth_range;
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config(format!(
                "hflip_prob {} outside [0, 1]",
                self.hflip_prob
            )));
        }
        if !(s0 > 0.0 && s0 <= s1 && s1.is_finite()) {
            return Err(Error::Config(format!("bad scale range [{s0}, {s1}]")));
        }
        if q0 == 0 || q0 > q1 || q1 > 15 {
            return Err(Error::Config(format!("bad bit-depth range [{q0}, {q1}]")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Augmented {
    pub image: ImageBuffer,
    pub q: u8,
    pub flipped: bool,
    pub scale: f64,
}

/// Draws, in order: flip, scale factor, source bit depth, crop offsets.
pub fn augment(hbd: &ImageBuffer, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Augmented> {
    let flipped = rng.bernoulli(cfg.hflip_prob);
    let scale = rng.uniform(cfg.scale_range.0, cfg.scale_range.1);
    let q = rng.range_inclusive(cfg.bit_depth_range.0 as u64, cfg.bit_depth_range.1 as u64) as u8;

    let mut image = if flipped {
        hbd.flip_horizontal()
    } else {
        hbd.clone()
    };
    if scale != 1.0 {
        let w = ((image.width() as f64 * scale).round() as usize).max(1);
        let h = ((image.height() as f64 * scale).round() as usize).max(1);
        image = image.resize(w, h)?;
    }
    let p = cfg.patch_size;
    if p > 0 {
        if image.width() >= p && image.height() >= p {
            let x0 = rng.below((image.width() - p + 1) as u64) as usize;
            let y0 = rng.below((image.height() - p + 1) as u64) as usize;
            image = image.crop(x0, y0, p, p)?;
        } else {
            log::warn!(
                "image {}x{} smaller than patch {p}; using it whole",
                image.width(),
                image.height()
            );
        }
    }
    Ok(Augmented {
        image,
        q,
        flipped,
        scale,
    })
}
