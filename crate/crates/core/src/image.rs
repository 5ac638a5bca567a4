//! Integer rasters with an explicit bit depth, and PNG input/output.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ops::resample::resize_plane;
use crate::tensor::{Shape, Tensor};

/// Row-major, channel-interleaved pixels holding `bit_depth`-bit values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    bit_depth: u8,
    pixels: Vec<u16>,
}

#[inline]
pub fn max_value(bits: u8) -> u16 {
    ((1u32 << bits) - 1) as u16
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: u8,
        pixels: Vec<u16>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!("empty image {width}x{height}")));
        }
        if !matches!(channels, 1 | 3) {
            return Err(Error::Argument(format!(
                "{channels} channels, expected 1 or 3"
            )));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::Argument(format!(
                "bit depth {bit_depth} outside 1..=16"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Argument(format!(
                "{} pixels for a {width}x{height}x{channels} image",
                pixels.len()
            )));
        }
        let max = max_value(bit_depth);
        if let Some(&v) = pixels.iter().find(|&&v| v > max) {
            return Err(Error::Domain {
                value: v,
                bits: bit_depth,
            });
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            bit_depth,
            pixels,
        })
    }

    /// Builds an image from `f(x, y, channel)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: u8,
        mut f: impl FnMut(usize, usize, usize) -> u16,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(x, y, c));
                }
            }
        }
        ImageBuffer::new(width, height, channels, bit_depth, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn max_value(&self) -> u16 {
        max_value(self.bit_depth)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u16 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn same_layout(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Replaces every pixel through `f`, producing an image of depth `bits`.
    pub fn map_values(&self, bits: u8, f: impl Fn(u16) -> u16) -> Result<Self> {
        ImageBuffer::new(
            self.width,
            self.height,
            self.channels,
            bits,
            self.pixels.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Re-labels the bit depth without touching the stored values.
    pub fn with_bit_depth(mut self, bits: u8) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::Argument(format!("bit depth {bits} outside 1..=16")));
        }
        let max = max_value(bits);
        if let Some(&v) = self.pixels.iter().find(|&&v| v > max) {
            return Err(Error::Domain { value: v, bits });
        }
        self.bit_depth = bits;
        Ok(self)
    }

    /// One channel as a row-major plane of `f64`.
    pub fn channel_plane(&self, c: usize) -> Vec<f64> {
        self.pixels
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&v| v as f64)
            .collect()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        let (w, ch) = (self.width, self.channels);
        for y in 0..self.height {
            for x in 0..w {
                for c in 0..ch {
                    out.pixels[(y * w + x) * ch + c] = self.pixels[(y * w + (w - 1 - x)) * ch + c];
                }
            }
        }
        out
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Argument(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let ch = self.channels;
        let mut pixels = Vec::with_capacity(width * height * ch);
        for y in y0..y0 + height {
            let row = &self.pixels[(y * self.width + x0) * ch..][..width * ch];
            pixels.extend_from_slice(row);
        }
        ImageBuffer::new(width, height, ch, self.bit_depth, pixels)
    }

    /// Bilinear resize, rounding to the nearest integer level.
    pub fn resize(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!("resize to {width}x{height}")));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let max = self.max_value() as f64;
        let mut pixels = vec![0u16; width * height * self.channels];
        for c in 0..self.channels {
            let plane = resize_plane(
                &self.channel_plane(c),
                self.height,
                self.width,
                height,
                width,
            );
            for (i, v) in plane.into_iter().enumerate() {
                pixels[i * self.channels + c] = (v + 0.5).floor().clamp(0.0, max) as u16;
            }
        }
        ImageBuffer::new(width, height, self.channels, self.bit_depth, pixels)
    }

    /// `(1, channels, h, w)` tensor of `value / divisor`.
    pub fn to_tensor(&self, divisor: f64) -> Tensor {
        let s = Shape::new(1, self.channels, self.height, self.width);
        Tensor::from_fn(s, |_, c, y, x| (self.get(x, y, c) as f64 / divisor) as f32)
    }

    /// Inverse of [`ImageBuffer::to_tensor`] for sample `n`: clamps to `[0, 1]`,
    /// scales by `2^bits - 1` and rounds half away from zero.
    pub fn from_tensor(t: &Tensor, n: usize, bits: u8) -> Result<Self> {
        let s = t.shape();
        if n >= s.n || !matches!(s.c, 1 | 3) {
            return Err(Error::Shape(format!(
                "cannot convert sample {n} of {s} to an image"
            )));
        }
        let max = max_value(bits) as f64;
        ImageBuffer::from_fn(s.w, s.h, s.c, bits, |x, y, c| {
            let v = (t.at(n, c, y, x) as f64).clamp(0.0, 1.0) * max;
            (v + 0.5).floor() as u16
        })
    }

    /// Reads an 8- or 16-bit grayscale or RGB PNG. Alpha is dropped with a
    /// warning; palette and sub-byte images are rejected.
    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img_err = |msg: String| Error::Image {
            path: path.to_path_buf(),
            msg,
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder.read_info().map_err(|e| img_err(e.to_string()))?;
        let mut buf = vec![0u8; reader.output_buffer_size()];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| img_err(e.to_string()))?;
        let bits: u8 = match info.bit_depth {
            png::BitDepth::Eight => 8,
            png::BitDepth::Sixteen => 16,
            other => return Err(img_err(format!("unsupported bit depth {other:?}"))),
        };
        let (src_channels, keep) = match info.color_type {
            png::ColorType::Grayscale => (1, 1),
            png::ColorType::Rgb => (3, 3),
            png::ColorType::GrayscaleAlpha => (2, 1),
            png::ColorType::Rgba => (4, 3),
            png::ColorType::Indexed => {
                return Err(img_err("palette images are not supported".into()))
            }
        };
        if src_channels != keep {
            log::warn!("{}: alpha channel stripped", path.display());
        }
        let bytes = &buf[..info.buffer_size()];
        let (w, h) = (info.width as usize, info.height as usize);
        let stride = info.line_size;
        let mut pixels = Vec::with_capacity(w * h * keep);
        for y in 0..h {
            let row = &bytes[y * stride..][..stride];
            for x in 0..w {
                for c in 0..keep {
                    let i = x * src_channels + c;
                    pixels.push(if bits == 8 {
                        row[i] as u16
                    } else {
                        u16::from_be_bytes([row[2 * i], row[2 * i + 1]])
                    });
                }
            }
        }
        ImageBuffer::new(w, h, keep, bits, pixels).map_err(|e| img_err(e.to_string()))
    }

    /// Writes the raw values into the smallest PNG container (8 or 16 bits)
    /// that holds them. Values are not rescaled.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc =
            png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(if self.channels == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        let data: Vec<u8> = if self.bit_depth <= 8 {
            enc.set_depth(png::BitDepth::Eight);
            self.pixels.iter().map(|&v| v as u8).collect()
        } else {
            enc.set_depth(png::BitDepth::Sixteen);
            self.pixels.iter().flat_map(|v| v.to_be_bytes()).collect()
        };
        let img_err = |e: png::EncodingError| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        };
        let mut writer = enc.write_header().map_err(img_err)?;
        writer.write_image_data(&data).map_err(img_err)?;
        writer.finish().map_err(img_err)
    }
}
