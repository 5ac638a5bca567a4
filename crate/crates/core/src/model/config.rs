use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Whether the network sees all colour channels at once or one at a time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Rgb,
    Chan,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Rgb => "rgb",
            Variant::Chan => "chan",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(Variant::Rgb),
            "chan" => Ok(Variant::Chan),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitNetConfig {
    pub variant: Variant,
    /// Number of downscaling (and upscaling) stages.
    pub num_stages: usize,
    /// Channel count of each stage, shallowest first.
    pub widths: Vec<usize>,
    /// Dilation of the 3x3 conv after each stride-2 conv.
    pub r_d: usize,
    /// Dilation of the 3x3 conv before each upsampling conv.
    pub r_u: usize,
    /// Channels of the two full-resolution head convs.
    pub head_width: usize,
    pub use_bit_info: bool,
    pub use_msfi: bool,
    /// Number of multi-scale taps dropped, starting from the coarsest.
    pub msfi_disconnect_from_smallest: usize,
}

impl Default for BitNetConfig {
    fn default() -> Self {
        BitNetConfig {
            variant: Variant::Rgb,
            num_stages: 4,
            widths: vec![16, 32, 64, 128],
            r_d: 2,
            r_u: 2,
            head_width: 16,
            use_bit_info: true,
            use_msfi: true,
            msfi_disconnect_from_smallest: 0,
        }
    }
}

impl BitNetConfig {
    /// Default settings with the given stage widths; `head_width` follows
    /// the first width.
    pub fn with_widths(widths: Vec<usize>) -> Self {
        BitNetConfig {
            num_stages: widths.len(),
            head_width: widths.first().copied().unwrap_or(0),
            widths,
            ..Default::default()
        }
    }

    pub fn image_channels(&self) -> usize {
        match self.variant {
            Variant::Rgb => 3,
            Variant::Chan => 1,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.image_channels() + self.use_bit_info as usize
    }

    pub fn out_channels(&self) -> usize {
        self.image_channels()
    }

    /// Spatial sizes must be divisible by this.
    pub fn alignment(&self) -> usize {
        1 << self.num_stages
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stages == 0 {
            return Err(Error::Config("at least one stage is required".into()));
        }
        if self.num_stages > 12 {
            return Err(Error::Config(format!(
                "{} stages is too many",
                self.num_stages
            )));
        }
        if self.widths.len() != self.num_stages {
            return Err(Error::Config(format!(
                "{} widths for {} stages",
                self.widths.len(),
                self.num_stages
            )));
        }
        if self.widths.contains(&0) || self.head_width == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        for (name, r) in [("r_d", self.r_d), ("r_u", self.r_u)] {
            if !matches!(r, 1 | 2) {
                return Err(Error::Config(format!("{name} = {r}, expected 1 or 2")));
            }
        }
        if self.msfi_disconnect_from_smallest > self.num_stages {
            return Err(Error::Config(format!(
                "cannot disconnect {} of {} multi-scale taps",
                self.msfi_disconnect_from_smallest, self.num_stages
            )));
        }
        Ok(())
    }

    /// Channel count of the full-resolution feature (`0`) or of stage `k`.
    pub(crate) fn feature_channels(&self, k: usize) -> usize {
        if k == 0 {
            self.head_width
        } else {
            self.widths[k - 1]
        }
    }

    /// Whether the multi-scale tap at scale `1 / 2^k` contributes.
    pub fn msfi_tap_active(&self, k: usize) -> bool {
        self.use_msfi && k + self.msfi_disconnect_from_smallest < self.num_stages
    }
}
