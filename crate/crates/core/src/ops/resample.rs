//! Half-pixel-centre bilinear resampling.
//!
//! Output sample `d` reads source coordinate `(d + 0.5) * in / out - 0.5`,
//! clamped to `[0, in - 1]`. The same convention is used for network
//! upsampling and for image rescaling during augmentation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f64,
}

fn axis_taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    let max = (in_len - 1) as f64;
    (0..out_len)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = src.floor() as usize;
            Tap {
                i0,
                i1: (i0 + 1).min(in_len - 1),
                frac: src - i0 as f64,
            }
        })
        .collect()
}

/// Resamples one `h x w` plane to `out_h x out_w`.
pub(crate) fn resize_plane(
    src: &[f64],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in &ty {
        let r0 = &src[y.i0 * w..][..w];
        let r1 = &src[y.i1 * w..][..w];
        for x in &tx {
            let top = r0[x.i0] * (1.0 - x.frac) + r0[x.i1] * x.frac;
            let bot = r1[x.i0] * (1.0 - x.frac) + r1[x.i1] * x.frac;
            out.push(top * (1.0 - y.frac) + bot * y.frac);
        }
    }
    out
}

fn check_target(s: Shape, out_h: usize, out_w: usize) -> Result<()> {
    if out_h == 0 || out_w == 0 || s.h == 0 || s.w == 0 {
        return Err(Error::Argument(format!(
            "bilinear_upsample: cannot resample {s} to {out_h}x{out_w}"
        )));
    }
    if out_h < s.h || out_w < s.w {
        return Err(Error::Argument(format!(
            "bilinear_upsample: target {out_h}x{out_w} smaller than input {s}"
        )));
    }
    Ok(())
}

/// Enlarges every plane of `x` to `out_h x out_w`.
pub fn bilinear_upsample(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = x.shape();
    check_target(s, out_h, out_w)?;
    x.ensure_finite("bilinear_upsample")?;
    let out_shape = Shape::new(s.n, s.c, out_h, out_w);
    if out_h == s.h && out_w == s.w {
        return Ok(x.clone());
    }
    let ty = axis_taps(s.h, out_h);
    let tx = axis_taps(s.w, out_w);
    let mut out = vec![0.0f32; out_shape.numel()];
    out.par_chunks_mut(out_h * out_w)
        .zip(x.data().par_chunks(s.plane()))
        .for_each(|(dst, src)| {
            let mut i = 0;
            for y in &ty {
                let r0 = &src[y.i0 * s.w..][..s.w];
                let r1 = &src[y.i1 * s.w..][..s.w];
                for t in &tx {
                    let top = r0[t.i0] as f64 * (1.0 - t.frac) + r0[t.i1] as f64 * t.frac;
                    let bot = r1[t.i0] as f64 * (1.0 - t.frac) + r1[t.i1] as f64 * t.frac;
                    dst[i] = (top * (1.0 - y.frac) + bot * y.frac) as f32;
                    i += 1;
                }
            }
        });
    Tensor::from_vec(out_shape, out)
}

/// Adjoint of [`bilinear_upsample`]: scatters each output gradient back onto
/// the four source samples with the forward interpolation weights.
pub fn bilinear_upsample_backward(input_shape: Shape, grad_out: &Tensor) -> Result<Tensor> {
    let g = grad_out.shape();
    check_target(input_shape, g.h, g.w)?;
    if g.n != input_shape.n || g.c != input_shape.c {
        return Err(Error::Shape(format!(
            "bilinear_upsample_backward: {g} does not match input {input_shape}"
        )));
    }
    if g.h == input_shape.h && g.w == input_shape.w {
        return Ok(grad_out.clone());
    }
    let (h, w) = (input_shape.h, input_shape.w);
    let ty = axis_taps(h, g.h);
    let tx = axis_taps(w, g.w);
    let mut out = vec![0.0f32; input_shape.numel()];
    out.par_chunks_mut(h * w)
        .zip(grad_out.data().par_chunks(g.plane()))
        .for_each(|(dst, src)| {
            let mut acc = vec![0.0f64; h * w];
            let mut i = 0;
            for y in &ty {
                for t in &tx {
                    let v = src[i] as f64;
                    i += 1;
                    let top = v * (1.0 - y.frac);
                    let bot = v * y.frac;
                    acc[y.i0 * w + t.i0] += top * (1.0 - t.frac);
                    acc[y.i0 * w + t.i1] += top * t.frac;
                    acc[y.i1 * w + t.i0] += bot * (1.0 - t.frac);
                    acc[y.i1 * w + t.i1] += bot * t.frac;
                }
            }
            for (d, a) in dst.iter_mut().zip(&acc) {
                *d = *a as f32;
            }
        });
    Tensor::from_vec(input_shape, out)
}
