use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Original spatial size recorded by [`pad_to_multiple`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropSpec {
    pub height: usize,
    pub width: usize,
}

/// Mirror index without repeating the edge sample; periodic so any pad
/// length works. Length-1 axes replicate.
fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let r = i % period;
    if r < len {
        r
    } else {
        period - r
    }
}

fn round_up(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

/// Reflect-pads the bottom and right edges up to the next multiple of `m`.
pub fn pad_to_multiple(x: &Tensor, m: usize) -> (Tensor, CropSpec) {
    let s = x.shape();
    let spec = CropSpec {
        height: s.h,
        width: s.w,
    };
    let m = m.max(1);
    let (h, w) = (round_up(s.h, m), round_up(s.w, m));
    if h == s.h && w == s.w {
        return (x.clone(), spec);
    }
    let out = Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, y, xx| {
        x.at(n, c, reflect(y, s.h), reflect(xx, s.w))
    });
    (out, spec)
}

/// Keeps the top-left `spec` region.
pub fn crop(x: &Tensor, spec: CropSpec) -> Result<Tensor> {
    let s = x.shape();
    if spec.height > s.h || spec.width > s.w {
        return Err(Error::Shape(format!(
            "cannot crop {}x{} out of {s}",
            spec.height, spec.width
        )));
    }
    if spec.height == s.h && spec.width == s.w {
        return Ok(x.clone());
    }
    Ok(Tensor::from_fn(
        Shape::new(s.n, s.c, spec.height, spec.width),
        |n, c, y, xx| x.at(n, c, y, xx),
    ))
}

/// Adjoint of the padding for gradients: the cropped region is kept and
/// the padded border receives zero.
pub(crate) fn zero_extend(g: &Tensor, h: usize, w: usize) -> Tensor {
    let s = g.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, y, x| {
        if y < s.h && x < s.w {
            g.at(n, c, y, x)
        } else {
            0.0
        }
    })
}
