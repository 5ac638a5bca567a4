//! A common interface over classical and learned expanders.

use std::fmt;
use std::str::FromStr;

use crate::classical::{bit_replicate, mig, zero_pad, BitDepthSpec};
use crate::data::network_input;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::model::{BitNetModel, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Zp,
    Mig,
    Br,
    BitNet,
    BitNetChan,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Zp,
        Method::Mig,
        Method::Br,
        Method::BitNet,
        Method::BitNetChan,
    ];

    pub fn is_network(self) -> bool {
        matches!(self, Method::BitNet | Method::BitNetChan)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Zp => "zp",
            Method::Mig => "mig",
            Method::Br => "br",
            Method::BitNet => "bitnet",
            Method::BitNetChan => "bitnet-chan",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown method {s:?} (expected zp, mig, br, bitnet or bitnet-chan)"
                ))
            })
    }
}

/// Something that turns a `q`-bit image into an `H`-bit one.
pub enum Expander {
    ZeroPad,
    Mig,
    BitReplicate,
    Network(Box<BitNetModel>),
}

impl Expander {
    pub fn classical(method: Method) -> Result<Self> {
        match method {
            Method::Zp => Ok(Expander::ZeroPad),
            Method::Mig => Ok(Expander::Mig),
            Method::Br => Ok(Expander::BitReplicate),
            m => Err(Error::Argument(format!("method {m} needs a trained model"))),
        }
    }

    /// Wraps a model, checking it matches the requested network method.
    pub fn network(method: Method, model: BitNetModel) -> Result<Self> {
        let expected = match method {
            Method::BitNet => Variant::Rgb,
            Method::BitNetChan => Variant::Chan,
            m => return Err(Error::Argument(format!("method {m} does not use a model"))),
        };
        if model.config().variant != expected {
            return Err(Error::Argument(format!(
                "method {method} needs a {expected} model, checkpoint holds a {} model",
                model.config().variant
            )));
        }
        Ok(Expander::Network(Box::new(model)))
    }

    pub fn name(&self) -> String {
        match self {
            Expander::ZeroPad => "zp".into(),
            Expander::Mig => "mig".into(),
            Expander::BitReplicate => "br".into(),
            Expander::Network(m) => match m.config().variant {
                Variant::Rgb => "bitnet".into(),
                Variant::Chan => "bitnet-chan".into(),
            },
        }
    }

    /// Expands `lbd`, whose values must fit in `spec.q` bits, to `spec.target`
    /// bits. The input's recorded bit depth is not consulted.
    pub fn expand(&self, lbd: &ImageBuffer, spec: BitDepthSpec) -> Result<ImageBuffer> {
        match self {
            Expander::ZeroPad => zero_pad(lbd, spec),
            Expander::Mig => mig(lbd, spec),
            Expander::BitReplicate => bit_replicate(lbd, spec),
            Expander::Network(model) => expand_network(model, lbd, spec),
        }
    }
}

/// Zero-pad, normalize, append the bit-depth channel, run the network on a
/// padded copy, crop, clamp and round back to integers.
fn expand_network(
    model: &BitNetModel,
    lbd: &ImageBuffer,
    spec: BitDepthSpec,
) -> Result<ImageBuffer> {
    let cfg = model.config();
    if cfg.variant == Variant::Rgb && lbd.channels() != 3 {
        return Err(Error::Argument(format!(
            "the RGB network needs a 3-channel image, got {}",
            lbd.channels()
        )));
    }
    let mut x = network_input(lbd, spec)?;
    if !cfg.use_bit_info {
        x = x.slice_channels(0, lbd.channels())?;
    }
    let y = model.forward_padded(&x)?;
    ImageBuffer::from_tensor(&y, 0, spec.target)
}
